#pragma once

#include "malcom/corpus.hpp"
#include "malcom/jsonio.hpp"
#include "malcom/nn/graph.hpp"
#include "malcom/nn/layers.hpp"
#include "malcom/rng.hpp"
#include "malcom/topics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace malcom {

struct GeneratorConfig {
  int embed_dim = 24;
  int hidden = 48;
  int z_dim = 8;
  int cond_dim = 32;  // article-conditioning vector width
  int max_len = 16;   // T: decode steps per comment

  Json to_json() const;
  static GeneratorConfig from_json(const Json& j);
};

struct GenerationConfig {
  double tau = 1.0;    // sampling temperature
  int n_samples = 16;  // candidates drawn per article
  int M = 1;           // comments returned per article
  std::uint64_t seed = 0;
};

// Relaxed one-hot sampling: softmax((logits + gumbel_noise) / tau), columnwise.
nn::Mat gumbel_softmax_sample(const nn::Mat& logits, double tau, Rng& rng);
nn::Mat gumbel_softmax_with_noise(const nn::Mat& logits, double tau, const nn::Mat& noise);
nn::Graph::Var gumbel_softmax(nn::Graph& g, nn::Graph::Var logits, double tau, Rng& rng);
nn::Graph::Var gumbel_softmax_noise(nn::Graph& g, nn::Graph::Var logits, double tau,
                                    const nn::Mat& noise);

struct PretrainCurve {
  std::vector<double> train_nll;  // per epoch, mean per-token
  std::vector<double> held_nll;

  Json to_json() const;
};

// Autoregressive conditional comment decoder: a gated recurrent cell whose
// initial state mixes the article encoding with a latent z, trained by
// teacher forcing and sampled either hard (token ids) or relaxed
// (differentiable one-hot columns).
class Generator {
 public:
  Generator(GeneratorConfig cfg, Vocabulary vocab, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::vector<nn::Param*> params();
  nn::Param& embedding_table() { return emb_.table; }

  // Logits over V for the next token after `prefix` (hard ids, BOS implied
  // before position 0). Plain values; deterministic per (params, inputs).
  nn::Mat next_token_dist(const std::string& content, const std::vector<int>& prefix,
                          const nn::Mat& z);

  // Teacher-forced per-token NLL of `target` (BOS ... EOS id sequence) as a
  // graph node; `frozen` evaluates without touching parameter gradients.
  nn::Graph::Var sequence_nll(nn::Graph& g, const std::string& content,
                              const std::vector<int>& target, const nn::Mat& z,
                              bool frozen = false);

  // Hard sampling at temperature tau; stops at EOS or T; never emits
  // reserved tokens. Returns content-token ids (no BOS/EOS).
  std::vector<int> generate(const std::string& content, const nn::Mat& z, double tau,
                            std::uint64_t seed);

  struct RelaxedSample {
    nn::Graph::Var one_hots;      // V x T simplex columns, differentiable
    int len = 0;                  // columns before the first argmax EOS
    std::vector<int> argmax_ids;  // hard reading of each column
  };
  // Differentiable rollout: each step feeds the soft embedding of the
  // previous relaxed sample. Reserved tokens other than EOS are masked out.
  RelaxedSample generate_relaxed(nn::Graph& g, const std::string& content, const nn::Mat& z,
                                 double tau, Rng& noise, bool frozen = false);

  // Draws n_samples comments with distinct z ~ N(0,1), ranks by topic
  // coherency against the article content, returns the top M texts.
  std::vector<std::string> generate_best(const std::string& content, const GenerationConfig& gen,
                                         const TopicSet& topics);

  nn::Mat sample_z(Rng& rng) const;

  Json to_json() const;
  static Generator from_json(const Json& j, const Vocabulary& vocab);

 private:
  nn::Graph::Var condition(nn::Graph& g, const std::string& content, const nn::Mat& z,
                           bool frozen);
  nn::Graph::Var step_logits(nn::Graph& g, nn::Graph::Var input_emb, nn::Graph::Var& h,
                             bool frozen);

  GeneratorConfig cfg_;
  Vocabulary vocab_;
  nn::Embedding emb_;
  nn::Dense cond_;  // embed mean -> cond_dim
  nn::Dense init_;  // [cond; z] -> hidden
  nn::GruCell gru_;
  nn::Dense out_;   // hidden -> V
};

// Teacher-forced MLE over (content, comment) pairs; one pair per comment,
// first `comments_per_article` comments each. A deterministic tenth of the
// articles is held out for the reported curve.
PretrainCurve pretrain_mle(Generator& G, const Dataset& train, int epochs, double lr,
                           std::uint64_t seed, int batch_size = 16, int comments_per_article = 10);

// Mean per-token NLL of real pairs under G (diversity proxy: collapsed
// generators score much worse on held-out pairs).
double nll_of(Generator& G, const std::vector<std::pair<std::string, std::string>>& pairs);

void save_generator(const std::string& path, Generator& G);
Generator load_generator(const std::string& path, const Vocabulary& vocab);

}  // namespace malcom
