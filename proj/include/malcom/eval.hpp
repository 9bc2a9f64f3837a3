#pragma once

#include "malcom/attack.hpp"
#include "malcom/baselines.hpp"
#include "malcom/corpus.hpp"
#include "malcom/defense.hpp"
#include "malcom/detectors.hpp"
#include "malcom/generator.hpp"
#include "malcom/topics.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace malcom {

enum class AttackMethod { none, malcom, copycat, hotflip, unitrigger, textbugger };

AttackMethod attack_method_from_tag(const std::string& tag);
std::string attack_method_tag(AttackMethod m);
// Every actual attack, i.e. everything but `none`.
const std::vector<AttackMethod>& all_attack_methods();

// The artifacts an attack method may draw on. Methods validate that the
// pieces they need are present.
struct AttackToolkit {
  Detector* surrogate = nullptr;            // gradient methods and the conditional generator
  Generator* generator = nullptr;           // end-to-end generation
  const SemanticEncoder* encoder = nullptr; // retrieval
  const CopycatIndex* index = nullptr;
  const TopicSet* topics = nullptr;         // candidate selection, coherency metric
  const Dataset* train = nullptr;           // trigger tuning
  AttackConfig attack;                      // target label, M, tau, n_samples, seed
  int hotflip_budget = 1;
  int textbugger_budget = 5;
  int trigger_len = 3;
  int trigger_q = 30;
  int trigger_sweeps = 3;
  int trigger_examples = 16;
};

// One method bound to its artifacts; universal triggers are tuned once here,
// so every crafted article sees the same phrase.
class Crafter {
 public:
  Crafter(AttackMethod m, const AttackToolkit& kit);

  // `count` adversarial comments for the article, crafted on the surrogate
  // under the no-existing-comments protocol.
  std::vector<std::string> craft(const Article& a, int count) const;

  AttackMethod method() const { return method_; }
  const AttackToolkit& kit() const { return kit_; }
  const std::vector<TriggerPhrase>& triggers() const { return triggers_; }

 private:
  void tune_triggers();

  AttackMethod method_;
  AttackToolkit kit_;
  std::vector<TriggerPhrase> triggers_;  // per topic of the first topic model
};

// Crafted comments for every article, keyed by article id.
using CraftedMap = std::map<std::string, std::vector<std::string>>;

CraftedMap craft_map(const Crafter& crafter, const Dataset& eval_set, int count);

enum class AtkDenominator {
  correct_only,   // truth != target AND the pre-attack prediction was correct
  all_nontarget,  // every article with truth != target
};

struct AtkResult {
  int denominator = 0;
  int flips = 0;
  bool defined = false;  // false on an empty denominator; rate is meaningless then
  double rate = 0.0;

  Json to_json() const;
  static AtkResult from_json(const Json& j);
};

// One evaluated article: the comments the detector sees before and after the
// attack. `budget_override` lifts the detector's comment cap for both passes.
struct ArticleEval {
  const Article* article = nullptr;
  std::vector<std::string> pre;
  std::vector<std::string> post;
  int budget_override = -1;
};

AtkResult atk_rate(Detector& f, const std::vector<ArticleEval>& inputs, int target_label,
                   AtkDenominator mode = AtkDenominator::correct_only);

// Corpus-level BLEU with uniform weights over n-gram orders 1..max_n, shared
// references, standard clipping, and the brevity penalty (closest reference
// length, ties to the shorter). Orders with no candidate n-grams are skipped;
// a zero precision at any remaining order gives 0.
double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::string>& references, int max_n = 4);

struct ReportRow {
  std::string method;
  std::string detector;
  std::string condition;  // "baseline", "whitebox", or "transfer"
  AtkResult atk;
  double bleu = 0.0;
  bool has_nll = false;  // only end-to-end generation has a model likelihood
  double nll_gen = 0.0;
  double coherency = 0.0;
  bool defense_on = false;
  double filter_out_rate = 0.0;

  Json to_json() const;
  static ReportRow from_json(const Json& j);
};

struct MetricsReport {
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;

  Json to_json() const;
  static MetricsReport from_json(const Json& j);
  std::string to_csv() const;  // one line per row; missing likelihoods render as N/A
};

struct EvalOptions {
  AtkDenominator denominator = AtkDenominator::correct_only;
  int M = 1;  // crafted comments per article
  bool with_defense = false;
  DefenseConfig defense;
  WordRecognizer recognizer;               // required when with_defense
  std::vector<std::string> references;     // held-out human comments for BLEU
};

// For each method: craft once on the surrogate, evaluate on every target
// (white-box when the target is the surrogate itself), optionally run the
// crafted comments through the defense first. A no-attack baseline row per
// target reports plain misclassification over the non-target class.
MetricsReport evaluate_attack(const std::vector<AttackMethod>& methods, const AttackToolkit& kit,
                              const std::vector<Detector*>& targets, const Dataset& eval_set,
                              const EvalOptions& opts);

struct SweepCell {
  double ratio = 0.0;
  int n_existing = 0;
  int n_malicious = 0;
  AtkResult atk;

  Json to_json() const;
};

struct SweepTable {
  std::string method;
  std::string detector;
  std::vector<SweepCell> cells;

  Json to_json() const;
};

// Atk% over the (attack ratio x existing-comment count) grid: each article
// keeps its first n_existing comments, receives ceil(ratio * n_existing)
// crafted ones (at least one; M from config when n_existing is 0), and the
// detector's comment budget is lifted to read them all.
SweepTable robustness_sweep(const Crafter& crafter, Detector& target, const Dataset& eval_set,
                            const std::vector<double>& ratios,
                            const std::vector<int>& n_existing_grid);

}  // namespace malcom
