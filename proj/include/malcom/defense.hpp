#pragma once

#include "malcom/corpus.hpp"
#include "malcom/jsonio.hpp"
#include "malcom/topics.hpp"

#include <functional>
#include <string>
#include <vector>

namespace malcom {

// True when a token reads as a known word. Any callable works, so a learned
// recognizer can replace the dictionary one.
using WordRecognizer = std::function<bool(const std::string&)>;

struct DefenseConfig {
  int max_suspicious = 1;         // comments with more flags than this are removed
  double coherency_margin = 0.05; // slack below the title's coherency

  void validate() const;
  Json to_json() const;
  static DefenseConfig from_json(const Json& j);
};

// Membership in the train vocabulary or a built-in common-word list.
WordRecognizer dictionary_recognizer(const Vocabulary& train_vocab);

// Tokens flagged as misspelled or visually manipulated: unknown after edge
// apostrophes are stripped, or carrying leet glyphs whose inverse expansion
// lands on a known word.
int count_suspicious(const std::string& comment, const WordRecognizer& recognizer);

struct CommentVerdict {
  std::string comment;
  int suspicious = 0;
  double coherency = 0.0;
  bool removed = false;
  std::string reason;  // "", "misspelling", "coherency", or "misspelling+coherency"

  Json to_json() const;
};

struct DefenseResult {
  std::vector<std::string> kept;       // original order
  std::vector<CommentVerdict> verdicts;
  double filter_out_rate = 0.0;        // removed / total; 0 with no comments
  double title_coherency = 0.0;

  Json to_json() const;
};

// Per-comment filter: removed when the suspicious count exceeds the cap or the
// topic coherency with the article falls below the title's minus the margin
// (sitting exactly on the boundary passes).
DefenseResult defend(const Article& article, const std::vector<std::string>& comments,
                     const TopicSet& topics, const DefenseConfig& cfg,
                     const WordRecognizer& recognizer);

}  // namespace malcom
