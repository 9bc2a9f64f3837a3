#include "malcom/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "malcom/errors.hpp"
#include "malcom/rng.hpp"

namespace malcom {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return std::string(buf);
}

int argmax_index(const std::vector<double>& v) {
  return int(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

AttackMethod attack_method_from_tag(const std::string& tag) {
  if (tag == "none") return AttackMethod::none;
  if (tag == "malcom") return AttackMethod::malcom;
  if (tag == "copycat") return AttackMethod::copycat;
  if (tag == "hotflip") return AttackMethod::hotflip;
  if (tag == "unitrigger") return AttackMethod::unitrigger;
  if (tag == "textbugger") return AttackMethod::textbugger;
  throw SchemaError("unknown attack method: " + tag);
}

std::string attack_method_tag(AttackMethod m) {
  switch (m) {
    case AttackMethod::none: return "none";
    case AttackMethod::malcom: return "malcom";
    case AttackMethod::copycat: return "copycat";
    case AttackMethod::hotflip: return "hotflip";
    case AttackMethod::unitrigger: return "unitrigger";
    case AttackMethod::textbugger: return "textbugger";
  }
  throw std::logic_error("attack_method_tag: bad enum");
}

const std::vector<AttackMethod>& all_attack_methods() {
  static const std::vector<AttackMethod> kAll = {
      AttackMethod::malcom, AttackMethod::copycat, AttackMethod::hotflip,
      AttackMethod::unitrigger, AttackMethod::textbugger};
  return kAll;
}

Crafter::Crafter(AttackMethod method, const AttackToolkit& kit) : method_(method), kit_(kit) {
  kit_.attack.validate();
  const bool needs_retrieval = method == AttackMethod::copycat || method == AttackMethod::hotflip ||
                               method == AttackMethod::textbugger ||
                               method == AttackMethod::unitrigger;
  if (needs_retrieval && (kit_.encoder == nullptr || kit_.index == nullptr))
    throw std::invalid_argument("Crafter: " + attack_method_tag(method) +
                                " needs a semantic encoder and a retrieval index");
  if (method == AttackMethod::malcom && (kit_.generator == nullptr || kit_.topics == nullptr))
    throw std::invalid_argument("Crafter: malcom needs a generator and fitted topics");
  const bool needs_surrogate = method == AttackMethod::hotflip ||
                               method == AttackMethod::textbugger ||
                               method == AttackMethod::unitrigger;
  if (needs_surrogate && kit_.surrogate == nullptr)
    throw std::invalid_argument("Crafter: " + attack_method_tag(method) +
                                " needs a surrogate detector");
  if (method == AttackMethod::unitrigger) {
    if (kit_.topics == nullptr || kit_.topics->models.empty())
      throw std::invalid_argument("Crafter: unitrigger needs fitted topics");
    if (kit_.train == nullptr || kit_.train->articles.empty())
      throw std::invalid_argument("Crafter: unitrigger needs tuning articles");
    tune_triggers();
  }
}

// One trigger per topic of the first topic model, tuned on training articles of the
// attacked class; topics with no tuning examples keep an empty (identity) trigger.
void Crafter::tune_triggers() {
  const TopicModel& model = kit_.topics->models.front();
  const int L = kit_.attack.target_label;
  triggers_.assign(std::size_t(model.k), TriggerPhrase{});
  std::vector<std::vector<TriggerExample>> examples(std::size_t(model.k));
  std::uint64_t pick = 0;
  for (const Article& a : kit_.train->articles) {
    if (a.label == L) continue;
    const int t = argmax_index(model.infer(a.content));
    auto& bucket = examples[std::size_t(t)];
    if (int(bucket.size()) >= kit_.trigger_examples) continue;
    const std::string base =
        copycat(*kit_.encoder, *kit_.index, a, L, mix_seed(kit_.attack.seed, pick++));
    bucket.push_back(TriggerExample{a.content, {}, base});
  }
  for (int t = 0; t < model.k; ++t) {
    triggers_[std::size_t(t)].topic = t;
    triggers_[std::size_t(t)].target_label = L;
    if (examples[std::size_t(t)].empty()) continue;
    const std::vector<std::string> candidates = model.topic_words(t, kit_.trigger_q);
    triggers_[std::size_t(t)] =
        unitrigger_search(*kit_.surrogate, examples[std::size_t(t)], candidates,
                          kit_.trigger_len, L, t, kit_.trigger_sweeps);
  }
}

std::vector<std::string> Crafter::craft(const Article& a, int count) const {
  if (count < 1 || method_ == AttackMethod::none) return {};
  const int L = kit_.attack.target_label;
  const auto base_at = [&](int i) {
    return copycat(*kit_.encoder, *kit_.index, a, L, mix_seed(kit_.attack.seed, std::uint64_t(i)));
  };
  std::vector<std::string> out;
  out.reserve(std::size_t(count));
  switch (method_) {
    case AttackMethod::malcom: {
      AttackConfig cfg = kit_.attack;
      cfg.M = count;
      cfg.n_samples = std::max(cfg.n_samples, count);
      cfg.probe_samples = std::max(cfg.probe_samples, count);
      return craft_comments(*kit_.generator, a, cfg, *kit_.topics);
    }
    case AttackMethod::copycat: {
      for (int i = 0; i < count; ++i) out.push_back(base_at(i));
      break;
    }
    case AttackMethod::hotflip: {
      for (int i = 0; i < count; ++i)
        out.push_back(hotflip(*kit_.surrogate, a, {}, base_at(i), L, kit_.hotflip_budget));
      break;
    }
    case AttackMethod::textbugger: {
      for (int i = 0; i < count; ++i)
        out.push_back(textbugger(*kit_.surrogate, a, {}, base_at(i), L, kit_.textbugger_budget));
      break;
    }
    case AttackMethod::unitrigger: {
      const TopicModel& model = kit_.topics->models.front();
      const int t = argmax_index(model.infer(a.content));
      const TriggerPhrase& trig = triggers_[std::size_t(t)];
      for (int i = 0; i < count; ++i) out.push_back(unitrigger_apply(trig, base_at(i)));
      break;
    }
    case AttackMethod::none: break;
  }
  return out;
}

CraftedMap craft_map(const Crafter& crafter, const Dataset& eval_set, int count) {
  CraftedMap out;
  const int L = crafter.kit().attack.target_label;
  for (const Article& a : eval_set.articles) {
    if (a.label == L) continue;
    out[a.id] = crafter.craft(a, count);
  }
  return out;
}

Json AtkResult::to_json() const {
  Json j{{"denominator", denominator}, {"flips", flips}, {"defined", defined}};
  if (defined)
    j["rate"] = rate;
  else
    j["rate"] = nullptr;
  return j;
}

AtkResult AtkResult::from_json(const Json& j) {
  AtkResult r;
  try {
    r.denominator = j.at("denominator").get<int>();
    r.flips = j.at("flips").get<int>();
    r.defined = j.at("defined").get<bool>();
    r.rate = j.at("rate").is_null() ? 0.0 : j.at("rate").get<double>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("atk result: ") + e.what());
  }
  return r;
}

AtkResult atk_rate(Detector& f, const std::vector<ArticleEval>& inputs, int target_label,
                   AtkDenominator mode) {
  if (target_label != 0 && target_label != 1)
    throw std::invalid_argument("atk_rate: target label must be 0 or 1");
  AtkResult r;
  for (const ArticleEval& in : inputs) {
    const Article& a = *in.article;
    if (a.label == target_label) continue;
    if (mode == AtkDenominator::correct_only &&
        f.predict_label(a.content, in.pre, in.budget_override) == target_label)
      continue;  // already mispredicted toward the target; nothing to flip
    r.denominator += 1;
    if (f.predict_label(a.content, in.post, in.budget_override) == target_label) r.flips += 1;
  }
  r.defined = r.denominator > 0;
  r.rate = r.defined ? double(r.flips) / double(r.denominator) : 0.0;
  return r;
}

double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::string>& references, int max_n) {
  if (max_n < 1) throw std::invalid_argument("corpus_bleu: max_n must be >= 1");
  if (references.empty()) throw std::invalid_argument("corpus_bleu: empty reference corpus");
  std::vector<std::vector<std::string>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(tokenize(r));

  const auto gram_counts = [](const std::vector<std::string>& toks, int n) {
    std::unordered_map<std::string, long long> counts;
    for (std::size_t i = 0; i + std::size_t(n) <= toks.size(); ++i) {
      std::string key = toks[i];
      for (int k = 1; k < n; ++k) {
        key.push_back('\x01');
        key += toks[i + std::size_t(k)];
      }
      counts[key] += 1;
    }
    return counts;
  };

  // Clip counts are shared across the whole reference corpus: elementwise max per n-gram.
  std::vector<std::unordered_map<std::string, long long>> ref_max(static_cast<std::size_t>(max_n));
  for (int n = 1; n <= max_n; ++n)
    for (const auto& rt : refs)
      for (const auto& [key, c] : gram_counts(rt, n)) {
        auto& slot = ref_max[std::size_t(n - 1)][key];
        slot = std::max(slot, c);
      }

  std::vector<long long> num(std::size_t(max_n), 0), den(std::size_t(max_n), 0);
  long long cand_len = 0, ref_len = 0;
  for (const auto& c : candidates) {
    const std::vector<std::string> toks = tokenize(c);
    cand_len += long(toks.size());
    long long best = -1;
    for (const auto& rt : refs) {
      const long long rl = long(rt.size());
      if (best < 0 || std::llabs(rl - long(toks.size())) < std::llabs(best - long(toks.size())) ||
          (std::llabs(rl - long(toks.size())) == std::llabs(best - long(toks.size())) && rl < best))
        best = rl;
    }
    ref_len += best;
    for (int n = 1; n <= max_n; ++n)
      for (const auto& [key, cnt] : gram_counts(toks, n)) {
        den[std::size_t(n - 1)] += cnt;
        auto it = ref_max[std::size_t(n - 1)].find(key);
        if (it != ref_max[std::size_t(n - 1)].end())
          num[std::size_t(n - 1)] += std::min(cnt, it->second);
      }
  }

  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  int used = 0;
  for (int n = 1; n <= max_n; ++n) {
    if (den[std::size_t(n - 1)] == 0) continue;  // no candidate n-grams of this order
    if (num[std::size_t(n - 1)] == 0) return 0.0;
    log_sum += std::log(double(num[std::size_t(n - 1)]) / double(den[std::size_t(n - 1)]));
    used += 1;
  }
  if (used == 0) return 0.0;
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(cand_len));
  return bp * std::exp(log_sum / double(used));
}

Json ReportRow::to_json() const {
  Json j{{"method", method},           {"detector", detector},
         {"condition", condition},     {"atk", atk.to_json()},
         {"bleu", bleu},               {"coherency", coherency},
         {"defense_on", defense_on},   {"filter_out_rate", filter_out_rate}};
  if (has_nll)
    j["nll_gen"] = nll_gen;
  else
    j["nll_gen"] = nullptr;
  return j;
}

ReportRow ReportRow::from_json(const Json& j) {
  ReportRow r;
  try {
    r.method = j.at("method").get<std::string>();
    r.detector = j.at("detector").get<std::string>();
    r.condition = j.at("condition").get<std::string>();
    r.atk = AtkResult::from_json(j.at("atk"));
    r.bleu = j.at("bleu").get<double>();
    r.coherency = j.at("coherency").get<double>();
    r.defense_on = j.at("defense_on").get<bool>();
    r.filter_out_rate = j.at("filter_out_rate").get<double>();
    r.has_nll = !j.at("nll_gen").is_null();
    r.nll_gen = r.has_nll ? j.at("nll_gen").get<double>() : 0.0;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("report row: ") + e.what());
  }
  (void)attack_method_from_tag(r.method);
  if (r.condition != "baseline" && r.condition != "whitebox" && r.condition != "transfer")
    throw SchemaError("report row: unknown condition " + r.condition);
  return r;
}

Json MetricsReport::to_json() const {
  Json jr = Json::array();
  for (const auto& row : rows) jr.push_back(row.to_json());
  return Json{{"format", "malcom/report"}, {"version", 1}, {"seed", seed}, {"rows", std::move(jr)}};
}

MetricsReport MetricsReport::from_json(const Json& j) {
  MetricsReport rep;
  try {
    if (j.at("format").get<std::string>() != "malcom/report" || j.at("version").get<int>() != 1)
      throw SchemaError("report: unknown format/version");
    rep.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& one : j.at("rows")) rep.rows.push_back(ReportRow::from_json(one));
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
  return rep;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "method,detector,condition,defense,atk_rate,flips,denominator,bleu,nll_gen,coherency,"
         "filter_out_rate\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.detector << ',' << r.condition << ','
        << (r.defense_on ? "on" : "off") << ',' << (r.atk.defined ? fmt(r.atk.rate) : "N/A") << ','
        << r.atk.flips << ',' << r.atk.denominator << ',' << fmt(r.bleu) << ','
        << (r.has_nll ? fmt(r.nll_gen) : "N/A") << ',' << fmt(r.coherency) << ','
        << fmt(r.filter_out_rate) << '\n';
  }
  return out.str();
}

MetricsReport evaluate_attack(const std::vector<AttackMethod>& methods, const AttackToolkit& kit,
                              const std::vector<Detector*>& targets, const Dataset& eval_set,
                              const EvalOptions& opts) {
  if (targets.empty()) throw std::invalid_argument("evaluate_attack: no target detectors");
  for (Detector* t : targets)
    if (t == nullptr) throw std::invalid_argument("evaluate_attack: null target detector");
  if (opts.M < 1) throw std::invalid_argument("evaluate_attack: M must be >= 1");
  if (kit.topics == nullptr) throw std::invalid_argument("evaluate_attack: topics required");
  if (opts.with_defense && !opts.recognizer)
    throw std::invalid_argument("evaluate_attack: defense enabled without a word recognizer");

  const int L = kit.attack.target_label;
  std::vector<const Article*> victims;
  for (const Article& a : eval_set.articles)
    if (a.label != L) victims.push_back(&a);
  if (victims.empty()) throw std::invalid_argument("evaluate_attack: no articles to attack");

  MetricsReport rep;
  rep.seed = kit.attack.seed;

  const auto condition_of = [&](Detector* t) {
    return t == kit.surrogate ? std::string("whitebox") : std::string("transfer");
  };

  // Clean-data reference rows: how often each detector already sits on the target side.
  for (Detector* t : targets) {
    std::vector<ArticleEval> inputs;
    inputs.reserve(victims.size());
    for (const Article* a : victims) inputs.push_back(ArticleEval{a, {}, {}});
    ReportRow row;
    row.method = "none";
    row.detector = arch_tag(t->arch());
    row.condition = "baseline";
    row.atk = atk_rate(*t, inputs, L, AtkDenominator::all_nontarget);
    rep.rows.push_back(std::move(row));
  }

  for (AttackMethod m : methods) {
    if (m == AttackMethod::none) continue;
    Crafter crafter(m, kit);
    CraftedMap crafted = craft_map(crafter, eval_set, opts.M);

    // Optional comment filter; its verdicts do not depend on the detector, so apply once.
    CraftedMap surviving;
    double filter_out = 0.0;
    if (opts.with_defense) {
      long long removed = 0, total = 0;
      for (const Article* a : victims) {
        const auto& list = crafted[a->id];
        DefenseResult res = defend(*a, list, *kit.topics, opts.defense, opts.recognizer);
        total += long(list.size());
        removed += long(list.size() - res.kept.size());
        surviving[a->id] = res.kept;
      }
      filter_out = total > 0 ? double(removed) / double(total) : 0.0;
    }
    const CraftedMap& active = opts.with_defense ? surviving : crafted;

    std::vector<std::string> flat_contents, flat_comments;
    for (const Article* a : victims)
      for (const auto& c : crafted[a->id]) {
        flat_contents.push_back(a->content);
        flat_comments.push_back(c);
      }
    const double bleu = (opts.references.empty() || flat_comments.empty())
                            ? 0.0
                            : corpus_bleu(flat_comments, opts.references);
    const double coh =
        flat_comments.empty() ? 0.0 : coherency(*kit.topics, flat_contents, flat_comments);
    const bool has_nll = m == AttackMethod::malcom && !flat_comments.empty();
    double nll = 0.0;
    if (has_nll) {
      std::vector<std::pair<std::string, std::string>> pairs;
      pairs.reserve(flat_comments.size());
      for (std::size_t i = 0; i < flat_comments.size(); ++i)
        pairs.emplace_back(flat_contents[i], flat_comments[i]);
      nll = nll_of(*kit.generator, pairs);
    }

    for (Detector* t : targets) {
      std::vector<ArticleEval> inputs;
      inputs.reserve(victims.size());
      for (const Article* a : victims) inputs.push_back(ArticleEval{a, {}, active.at(a->id)});
      ReportRow row;
      row.method = attack_method_tag(m);
      row.detector = arch_tag(t->arch());
      row.condition = condition_of(t);
      row.atk = atk_rate(*t, inputs, L, opts.denominator);
      row.bleu = bleu;
      row.has_nll = has_nll;
      row.nll_gen = nll;
      row.coherency = coh;
      row.defense_on = opts.with_defense;
      row.filter_out_rate = filter_out;
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

Json SweepCell::to_json() const {
  return Json{
      {"ratio", ratio}, {"n_existing", n_existing}, {"n_malicious", n_malicious},
      {"atk", atk.to_json()}};
}

Json SweepTable::to_json() const {
  Json jc = Json::array();
  for (const auto& c : cells) jc.push_back(c.to_json());
  return Json{{"method", method}, {"detector", detector}, {"cells", std::move(jc)}};
}

SweepTable robustness_sweep(const Crafter& crafter, Detector& target, const Dataset& eval_set,
                            const std::vector<double>& ratios,
                            const std::vector<int>& n_existing_grid) {
  if (ratios.empty() || n_existing_grid.empty())
    throw std::invalid_argument("robustness_sweep: empty grid");
  for (double r : ratios)
    if (!(r > 0.0)) throw std::invalid_argument("robustness_sweep: ratios must be positive");
  for (int n : n_existing_grid)
    if (n < 0) throw std::invalid_argument("robustness_sweep: n_existing must be >= 0");

  const int L = crafter.kit().attack.target_label;
  std::vector<const Article*> victims;
  for (const Article& a : eval_set.articles)
    if (a.label != L) victims.push_back(&a);
  if (victims.empty()) throw std::invalid_argument("robustness_sweep: no articles to attack");

  SweepTable tab;
  tab.method = attack_method_tag(crafter.method());
  tab.detector = arch_tag(target.arch());
  for (double ratio : ratios) {
    for (int n : n_existing_grid) {
      const int n_mal =
          n == 0 ? crafter.kit().attack.M : std::max(1, int(std::ceil(ratio * double(n))));
      std::vector<ArticleEval> inputs;
      std::vector<std::vector<std::string>> posts;  // keep strings alive alongside views
      inputs.reserve(victims.size());
      posts.reserve(victims.size());
      for (const Article* a : victims) {
        std::vector<std::string> pre(
            a->comments.begin(),
            a->comments.begin() + long(std::min<std::size_t>(a->comments.size(), std::size_t(n))));
        std::vector<std::string> post = pre;
        for (auto& c : crafter.craft(*a, n_mal)) post.push_back(std::move(c));
        posts.push_back(std::move(post));
        inputs.push_back(ArticleEval{a, std::move(pre), {}, n + n_mal});
      }
      for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].post = posts[i];
      SweepCell cell;
      cell.ratio = ratio;
      cell.n_existing = n;
      cell.n_malicious = n_mal;
      cell.atk = atk_rate(target, inputs, L, AtkDenominator::correct_only);
      tab.cells.push_back(std::move(cell));
    }
  }
  return tab;
}

}  // namespace malcom
