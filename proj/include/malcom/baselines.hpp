#pragma once

#include "malcom/attack.hpp"
#include "malcom/corpus.hpp"
#include "malcom/detectors.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace malcom {

// Fixed random-projection sentence encoder: an IDF-weighted mean of seeded
// Gaussian token embeddings, skipping reserved and out-of-vocabulary tokens.
// Plays the role of a pretrained semantic encoder at desk scale — cosine
// similarity tracks distinctive-word overlap and is independent of any
// trained classifier. With no reference texts every token weighs the same.
class SemanticEncoder {
 public:
  SemanticEncoder(Vocabulary vocab, int dim, std::uint64_t seed,
                  const std::vector<std::string>& reference_texts = {});

  nn::Mat encode(const std::string& text) const;  // dim x 1, zero when no token lands

 private:
  Vocabulary vocab_;
  nn::Mat table_;            // dim x |V|
  std::vector<double> idf_;  // per token id; 1.0 everywhere without references
};

// Nearest-neighbor store over a train split, keyed by semantic encodings
// under cosine similarity. Only articles carrying at least one comment are
// kept; they are the comment donors.
class CopycatIndex {
 public:
  struct Entry {
    std::string article_id;
    int label = 0;
    std::vector<std::string> comments;
    nn::Mat encoding;  // unit-norm column (zero when the raw encoding is zero)
  };

  CopycatIndex(const SemanticEncoder& enc, const Dataset& train);

  // Entry index of the nearest donor labeled `target_label`; ties resolve to
  // the earliest entry.
  std::size_t nearest(const SemanticEncoder& enc, const std::string& content,
                      int target_label) const;
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

// Comment lifted verbatim from the nearest target-labeled donor article; the
// pick among that donor's comments is seeded by (seed, query id).
std::string copycat(const SemanticEncoder& enc, const CopycatIndex& index, const Article& query,
                    int target_label, std::uint64_t seed);

// Substitutes up to `budget` words of the seed comment: the position with the
// largest attack-loss gradient norm over its one-hot gets the token with the
// best first-order loss decrease, and the substitution survives only if the
// re-evaluated loss actually drops. The result never scores worse than the
// seed; returns early once the detector already reads the target label.
std::string hotflip(Detector& f, const Article& article, const std::vector<std::string>& existing,
                    const std::string& seed_comment, int target_label, int budget = 1);

// A universal prefix for one topic: every token comes from the topic's
// top-word list, and the same phrase is prepended for every article.
struct TriggerPhrase {
  std::vector<std::string> tokens;
  int topic = -1;
  int target_label = 0;

  Json to_json() const;
  static TriggerPhrase from_json(const Json& j);
};

// One train article the trigger is tuned on: its content, the comments it
// already carries, and its retrieval-seeded base comment.
struct TriggerExample {
  std::string content;
  std::vector<std::string> existing;
  std::string base_comment;
};

// Coordinate descent, slot by slot over the candidate words, minimizing the
// mean attack loss across the examples with the trigger prepended to each base
// comment; stops at a fixed point or after `max_sweeps` full passes.
TriggerPhrase unitrigger_search(Detector& f, const std::vector<TriggerExample>& examples,
                                const std::vector<std::string>& candidates, int trigger_len,
                                int target_label, int topic = -1, int max_sweeps = 3);

std::string unitrigger_apply(const TriggerPhrase& trigger, const std::string& comment);

// The five bug rewrites of one word, in fixed order: space insertion at the
// middle, middle-character deletion, interior adjacent swap, leet-glyph
// substitution of the first mappable character, and nearest-embedding word
// swap under the detector's own table. Unavailable strategies are skipped;
// rewrites equal to the input are dropped.
std::vector<std::string> bug_candidates(const Detector& f, const std::string& word);

// Greedy bug injection: words ranked by the attack-loss drop when masked to
// the unknown token, then the best strictly-improving bug per word, until
// `budget` words are perturbed or the detector flips to the target label.
// Never scores worse than the seed comment.
std::string textbugger(Detector& f, const Article& article,
                       const std::vector<std::string>& existing, const std::string& seed_comment,
                       int target_label, int budget = 5);

}  // namespace malcom
