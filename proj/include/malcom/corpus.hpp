#pragma once

#include "malcom/jsonio.hpp"
#include "malcom/rng.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace malcom {

struct Article {
  std::string id;
  std::string title;
  std::string content;  // equals title for title-only sources
  int label = 0;        // 1 = fake, 0 = real
  std::vector<std::string> comments;
};

enum class SplitTag { unsplit, train, test };

struct Dataset {
  std::vector<Article> articles;
  SplitTag split_tag = SplitTag::unsplit;
};

// Lowercases and splits into maximal runs of [a-z0-9_'@$]. Digits and the
// leet-speak glyphs stay word characters so visually perturbed tokens survive
// as single tokens.
std::vector<std::string> tokenize(const std::string& text);

// Drops mention (@...), hashtag (#...), and URL whitespace-tokens, lowercases,
// and normalizes whitespace. Idempotent.
std::string clean_comment(const std::string& text);

// Keeps comments whose token count lies in [min_len, max_len] and whose
// fraction of purely alphabetic tokens is at least min_alpha_ratio.
Dataset filter_comments(const Dataset& d, int min_len, int max_len, double min_alpha_ratio = 0.5);

// Article-level partition with |train| = round(ratio * N).
std::pair<Dataset, Dataset> split(const Dataset& d, double ratio, std::uint64_t seed);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  // Most frequent train-split tokens (title, content, comments), capped at
  // max_size total entries including the reserved ids.
  static Vocabulary build(const Dataset& train, std::size_t max_size, int min_count = 1);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const;

  std::vector<int> encode(const std::string& text) const;
  // BOS + tokens + EOS, truncated so the result has at most max_len entries.
  std::vector<int> encode_seq(const std::string& text, int max_len) const;
  // Joins tokens, skipping reserved ids.
  std::string decode(const std::vector<int>& ids) const;

  std::uint64_t hash() const;

  Json to_json() const;
  static Vocabulary from_json(const Json& j);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& d);

}  // namespace malcom
