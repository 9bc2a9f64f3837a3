#pragma once

#include "malcom/corpus.hpp"
#include "malcom/detectors.hpp"
#include "malcom/generator.hpp"
#include "malcom/jsonio.hpp"
#include "malcom/nn/graph.hpp"
#include "malcom/nn/layers.hpp"
#include "malcom/nn/optim.hpp"
#include "malcom/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace malcom {

struct DiscriminatorConfig {
  int embed_dim = 24;
  int filters = 12;
  std::vector<int> widths = {2, 3};
  int max_tokens = 16;

  Json to_json() const;
  static DiscriminatorConfig from_json(const Json& j);
};

// Comment realism scorer: convolutional text encoder over token embeddings,
// one unbounded real score per comment. Accepts hard ids or relaxed one-hot
// columns; only the first `len` positions are read, so trailing padding never
// changes the score.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, Vocabulary vocab, std::uint64_t seed);

  nn::Graph::Var score(nn::Graph& g, const CommentInput& c, bool frozen = false);
  // 1 x B row of scores.
  nn::Graph::Var score_batch(nn::Graph& g, const std::vector<CommentInput>& cs,
                             bool frozen = false);

  const DiscriminatorConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::vector<nn::Param*> params();

  Json to_json() const;
  static Discriminator from_json(const Json& j, const Vocabulary& vocab);

 private:
  DiscriminatorConfig cfg_;
  Vocabulary vocab_;
  nn::Embedding emb_;
  nn::ConvBank bank_;
  nn::Dense head_;
};

// Relativistic paired losses over score rows (1 x B each). Default
// orientation: the discriminator pushes real scores above fake ones and the
// generator pushes fake above real. `printed_form` swaps the two directions
// to reproduce the transposed variant.
struct RsganLosses {
  nn::Graph::Var loss_G;
  nn::Graph::Var loss_D;
};
RsganLosses rsgan_losses(nn::Graph& g, nn::Graph::Var d_real, nn::Graph::Var d_fake,
                         bool printed_form = false);

double gaussian_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double sigma);

// Kernel two-sample distance between embedded sets (columns are samples):
// sqrt(E k(x,x') + E k(y,y') - 2 E k(x,y)), negative radicand clamped to 0.
double mmd(const std::vector<Eigen::VectorXd>& X, const std::vector<Eigen::VectorXd>& Y,
           double sigma);
nn::Graph::Var mmd_loss(nn::Graph& g, nn::Graph::Var X, nn::Graph::Var Y, double sigma);

// Median pairwise distance over the pooled points; 1.0 when degenerate.
double median_bandwidth(const std::vector<Eigen::VectorXd>& points);

struct StyleExample {
  std::string content;
  std::string title;
  std::string real_comment;
};

struct StyleOpts {
  double tau = 1.0;
  double weight_gan = 1.0;   // 0 skips the adversarial generator update
  double weight_mmd = 1.0;   // 0 reports the loss but leaves parameters alone
  double sigma = 0.0;        // <= 0: median heuristic per batch
  bool printed_rsgan = false;
};

struct StyleStepResult {
  double loss_G_D = 0.0;  // generator adversarial loss
  double loss_D = 0.0;    // discriminator loss
  double loss_G_H = 0.0;  // title-coherency (kernel distance) loss
};

// One discriminator update on real-vs-sampled comments.
double discriminator_step(Discriminator& D, const std::vector<CommentInput>& reals,
                          const std::vector<CommentInput>& fakes, nn::Adam& opt_D,
                          nn::Graph& g, bool printed_form = false);

// One alternating style update: D on real/fake scores, then G against the
// frozen D, then G on the title-coherency distance.
StyleStepResult style_step(Generator& G, Discriminator& D, const std::vector<StyleExample>& batch,
                           const StyleOpts& opts, nn::Adam& opt_G, nn::Adam& opt_D, Rng& rng);

void save_discriminator(const std::string& path, Discriminator& D);
Discriminator load_discriminator(const std::string& path, const Vocabulary& vocab);

}  // namespace malcom
