#pragma once

#include "malcom/attack.hpp"
#include "malcom/defense.hpp"
#include "malcom/detectors.hpp"
#include "malcom/generator.hpp"
#include "malcom/style.hpp"
#include "malcom/synth.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace malcom {

// Flat key=value run configuration covering every tunable default in the
// pipeline. Unknown and duplicate keys are rejected; the canonical
// serialization (sorted keys) backs the config hash embedded in artifacts.
struct RunConfig {
  // synthetic corpus
  SynthConfig synth;
  std::uint64_t synth_seed = 1;

  // corpus preparation
  int vocab_max = 4000;
  int vocab_min_count = 1;
  double split_frac = 0.8;
  std::uint64_t split_seed = 31;

  // topic models
  std::vector<int> topic_ks = {4};
  std::uint64_t topic_seed = 11;
  int topic_q = 30;
  int topic_iters = 150;

  // detectors
  std::string arch = "f_rnn";
  DetectorConfig detector;
  std::uint64_t det_init_seed = 21;
  int det_epochs = 8;
  double det_lr = 3e-3;
  std::uint64_t det_train_seed = 7;

  // generator pretraining
  GeneratorConfig generator;
  std::uint64_t gen_init_seed = 5;
  int mle_epochs = 5;
  double mle_lr = 5e-3;
  std::uint64_t mle_seed = 9;
  int mle_batch = 16;
  int mle_comments_per_article = 10;

  // style discriminator
  DiscriminatorConfig disc;
  std::uint64_t disc_init_seed = 1;

  // adversarial training and crafting
  AttackConfig attack;

  // baseline attacks
  int encoder_dim = 64;
  std::uint64_t encoder_seed = 141;
  int hotflip_budget = 1;
  int textbugger_budget = 5;
  int trigger_len = 3;
  int trigger_q = 30;
  int trigger_sweeps = 3;
  int trigger_examples = 16;

  // defense
  DefenseConfig defense;

  // evaluation
  int eval_m = 1;
  std::string eval_denominator = "correct_only";
  int bleu_max_n = 4;
  std::vector<std::uint64_t> eval_seeds = {0};
  std::vector<double> sweep_ratios = {0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<int> sweep_n_existing = {0, 5, 10, 20};

  // Parse key=value text ('#' starts a comment) on top of the defaults.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  // Apply one "key=value" override in place.
  void set(const std::string& assignment);

  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;  // canonical: sorted keys, one per line
  std::uint64_t hash() const;
  void validate() const;
};

}  // namespace malcom
