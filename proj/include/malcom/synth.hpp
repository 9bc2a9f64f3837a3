#pragma once

#include "malcom/corpus.hpp"

#include <cstdint>

namespace malcom {

// Desk-scale two-class corpus with planted signal: each article draws a topic
// word group, and fake/real articles lean on disjoint signal-word pools. The
// signal is stronger in comments than in content so comment-aware detectors
// beat content-only ones, yet both stay learnable. Comment tokens arrive in
// fixed pairs, giving language models transition structure beyond unigrams.
struct SynthConfig {
  int articles_per_class = 100;
  int comments_per_article = 22;
  int title_len = 8;
  int content_len = 30;
  int comment_len_min = 5;
  int comment_len_max = 12;
  int n_topics = 4;
  double content_topic_rate = 0.55;
  double content_class_rate = 0.12;
  double comment_topic_rate = 0.45;
  double comment_class_rate = 0.35;
};

Dataset synth_corpus(const SynthConfig& cfg, std::uint64_t seed);

// The planted word pools, exposed for tests and topic-quality checks.
const std::vector<std::vector<std::string>>& synth_topic_groups();
const std::vector<std::string>& synth_fake_words();
const std::vector<std::string>& synth_real_words();
const std::vector<std::string>& synth_filler_words();

}  // namespace malcom
