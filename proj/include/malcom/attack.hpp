#pragma once

#include "malcom/corpus.hpp"
#include "malcom/detectors.hpp"
#include "malcom/generator.hpp"
#include "malcom/jsonio.hpp"
#include "malcom/style.hpp"
#include "malcom/topics.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace malcom {

struct AttackConfig {
  int target_label = 0;  // label the attacked detector should emit
  int M = 1;             // malicious comments appended per article
  double weight_mle = 1.0;
  double weight_gan = 1.0;
  double weight_mmd = 1.0;
  double weight_attack = 1.0;
  bool with_style = true;   // false: skip the adversarial/coherency phases
  bool with_attack = true;  // false: skip the classifier-guided phase
  int epochs = 3;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double tau = 1.0;
  int batch_size = 8;
  int n_samples = 16;      // candidates ranked when crafting comments
  int probe_samples = 6;   // candidates ranked for the per-epoch probe

  void validate() const;
  Json to_json() const;
  static AttackConfig from_json(const Json& j);
};

// Binary cross-entropy between the frozen detector's prediction on
// (content, existing ++ {generated}) and the constant target label. Gradients
// reach only the relaxed generated comment.
nn::Graph::Var attack_loss(nn::Graph& g, Detector& f, const std::string& content,
                           std::vector<CommentInput> existing, const CommentInput& generated,
                           int target_label);

// Phases that were skipped (or probes with an empty slice) stay NaN and
// serialize as null.
struct MalcomEpoch {
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
  double mle = kUnset;
  double loss_D = kUnset;
  double loss_G_D = kUnset;
  double loss_G_H = kUnset;
  double attack = kUnset;
  double probe_atk = kUnset;
  double probe_coherency = kUnset;
};

struct MalcomLog {
  std::vector<MalcomEpoch> epochs;

  Json to_json() const;
};

// Classifier-guided fine-tuning: per mini-batch one teacher-forcing step, one
// alternating style update, one attack step, honoring the ablation flags.
// Articles whose truth label already equals the target are left out; a tenth
// of the rest is held back for the probe metrics. A non-finite loss restores
// the epoch-start parameters for G and D before the error propagates.
MalcomLog train_malcom(Generator& G, Discriminator& D, Detector& f, const Dataset& train,
                       const AttackConfig& cfg, const TopicSet& topics);

// M hard comments for one article, ranked by topic coherency; deterministic
// per (config seed, article id). Deployment is append-only.
std::vector<std::string> craft_comments(Generator& G, const Article& article,
                                        const AttackConfig& cfg, const TopicSet& topics);

}  // namespace malcom
