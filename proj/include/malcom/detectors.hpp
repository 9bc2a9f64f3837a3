#pragma once

#include "malcom/corpus.hpp"
#include "malcom/jsonio.hpp"
#include "malcom/nn/graph.hpp"
#include "malcom/nn/layers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace malcom {

enum class Arch { f_cnn, f_rnn, textcnn, csi_t, defend };

Arch arch_from_tag(const std::string& tag);
std::string arch_tag(Arch a);
const std::vector<Arch>& all_archs();

struct DetectorConfig {
  int embed_dim = 24;
  int hidden = 32;           // GRU / co-attention width
  int content_dim = 32;      // content encoder output (512 at paper scale)
  int comment_budget = 10;   // max comments consumed per article
  int max_comment_tokens = 16;
  int conv_filters = 12;
  std::vector<int> conv_widths = {2, 3};
  int defend_chunk = 10;     // tokens per content chunk for co-attention

  Json to_json() const;
  static DetectorConfig from_json(const Json& j);
};

// A comment fed to a detector forward pass: hard token ids, or a relaxed
// one-hot matrix (|V| x len) already living in the caller's graph so that
// gradients can flow back into a generator.
struct CommentInput {
  std::vector<int> ids;
  nn::Graph::Var relaxed = -1;
  int len = 0;

  bool is_relaxed() const { return relaxed >= 0; }
};

CommentInput hard_comment(const Vocabulary& v, const std::string& text, int max_tokens);

// Binary cross-entropy from pre-sigmoid scores (1 x B) against labels,
// computed with softplus so it stays finite for extreme scores.
nn::Graph::Var bce_from_scores(nn::Graph& g, nn::Graph::Var scores,
                               const std::vector<double>& labels);

struct DetectorMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::vector<double> train_loss;  // per epoch

  Json to_json() const;
};

// Comment-aware fake-news classifier. One class covers all five architecture
// variants; the tag selects the comment aggregation wiring.
class Detector {
 public:
  Detector(Arch arch, DetectorConfig cfg, Vocabulary vocab, std::uint64_t seed);

  struct Forward {
    nn::Graph::Var score;          // pre-sigmoid, 1 x 1
    nn::Graph::Var p;              // sigmoid(score)
    nn::Graph::Var attention = -1; // defend only: comment-over-content rows
  };

  // `frozen` feeds parameters as constants: gradients still flow through to
  // relaxed comment inputs, but never into the detector.
  Forward forward(nn::Graph& g, const std::string& content,
                  const std::vector<CommentInput>& comments, bool frozen = false,
                  int budget_override = -1);

  double predict_p(const std::string& content, const std::vector<std::string>& comments,
                   int budget_override = -1);
  int predict_label(const std::string& content, const std::vector<std::string>& comments,
                    int budget_override = -1);

  // Content encoder output as plain numbers (used by nearest-neighbor search).
  nn::Mat encode_content_values(const std::string& content);

  // Token embedding table (dim x |V|), exposed for embedding-space word swaps.
  const nn::Mat& embedding_values() const { return emb_.table.value; }

  Arch arch() const { return arch_; }
  const DetectorConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  bool uses_content() const { return arch_ != Arch::csi_t; }
  std::vector<nn::Param*> params();

  Json to_json() const;
  static Detector from_json(const Json& j);

 private:
  nn::Graph::Var content_encoding(nn::Graph& g, const std::string& content, bool frozen);
  nn::Graph::Var mean_embedding(nn::Graph& g, const CommentInput& c, bool frozen);
  nn::Graph::Var embedding_seq(nn::Graph& g, const CommentInput& c, bool frozen, int fixed_len);
  nn::Graph::Var weight(nn::Graph& g, nn::Param& p, bool frozen);

  Arch arch_;
  DetectorConfig cfg_;
  Vocabulary vocab_;
  nn::Embedding emb_;
  nn::Dense content_proj_;  // unused by csi_t
  nn::Dense comment_proj_;  // f_rnn / csi_t / defend
  nn::Dense sent_proj_;     // defend
  nn::GruCell gru_;         // f_rnn / csi_t
  nn::ConvBank bank_;       // f_cnn / textcnn
  nn::Dense head_;
};

// BCE training over the first `comment_budget` comments of each article;
// returns held-out accuracy/F1 and the per-epoch train loss curve.
DetectorMetrics train_detector(Detector& f, const Dataset& train, const Dataset& held, int epochs,
                               double lr, std::uint64_t seed, int batch_size = 16);

DetectorMetrics evaluate_detector(Detector& f, const Dataset& data);

void save_detector(const std::string& path, Detector& f, const DetectorMetrics* metrics = nullptr);
Detector load_detector(const std::string& path, const Vocabulary& expect_vocab);

}  // namespace malcom
