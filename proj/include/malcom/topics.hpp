#pragma once

#include "malcom/jsonio.hpp"
#include "malcom/nn/graph.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace malcom {

// Latent Dirichlet Allocation fit by collapsed Gibbs sampling. Deterministic
// per (contents, k, seed); inference is deterministic per text.
struct TopicModel {
  int k = 0;
  std::uint64_t seed = 0;
  double alpha = 0.0;         // fit prior, 50/k
  double beta = 0.01;         // word smoothing
  double alpha_infer = 0.1;   // sharper prior for fold-in inference
  int infer_iters = 30;
  std::vector<std::string> vocab;                // LDA vocabulary, index -> word
  std::unordered_map<std::string, int> word_id;
  nn::Mat topic_word;  // k x |vocab|; each row sums to 1

  // Topic simplex for a text; uniform when no token is in the LDA vocabulary.
  std::vector<double> infer(const std::string& text) const;
  // q highest-weight words of topic `t` (weight-desc, index asc on ties).
  std::vector<std::string> topic_words(int t, int q) const;

  Json to_json() const;
  static TopicModel from_json(const Json& j);
};

TopicModel fit_topic_model(const std::vector<std::string>& contents, int k, std::uint64_t seed,
                           int fit_iters = 150);

// Mean cosine similarity between the inferred topic simplexes of paired
// contents and comments; 1.0 means topically identical, 0 orthogonal.
double coherency_tk(const TopicModel& model, const std::vector<std::string>& contents,
                    const std::vector<std::string>& comments);

struct TopicSet {
  std::vector<int> K;
  std::vector<TopicModel> models;  // aligned with K
  int q = 30;                      // topic words exposed per article

  Json to_json() const;
  static TopicSet from_json(const Json& j);
};

TopicSet fit_topic_set(const std::vector<std::string>& contents, const std::vector<int>& K,
                       std::uint64_t seed, int q = 30, int fit_iters = 150);

// coherency_tk averaged over every k in the set.
double coherency(const TopicSet& set, const std::vector<std::string>& contents,
                 const std::vector<std::string>& comments);

// Single-pair version used by generation selection and the defense filter.
double coherency_pair(const TopicSet& set, const std::string& content, const std::string& comment);

// Keeps the candidate k values whose mean normalized topic-assignment entropy
// (H / ln k, comparable across k) falls in the lowest `quantile` fraction.
std::vector<int> select_k_set(const std::vector<std::string>& contents,
                              const std::vector<int>& candidate_ks, std::uint64_t seed,
                              double quantile = 0.5, int fit_iters = 150);

// q highest-weight words of the text's argmax topic (ties -> lowest index).
std::vector<std::string> top_topic_words(const TopicModel& model, const std::string& content,
                                         int q);

}  // namespace malcom
