#include "malcom/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "malcom/errors.hpp"
#include "malcom/rng.hpp"

namespace malcom {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw SchemaError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw SchemaError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw SchemaError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw SchemaError("config: " + key + " expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) parts.push_back(trim(cur));
  if (!parts.empty() && parts.back().empty()) parts.pop_back();
  return parts;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse one) {
  std::vector<T> out;
  for (const auto& part : split_list(v)) out.push_back(one(key, part));
  return out;
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

template <typename T, typename Fmt>
std::string fmt_list(const std::vector<T>& xs, Fmt one) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += one(xs[i]);
  }
  return out;
}

struct KeyDef {
  const char* name;
  std::string (*get)(const RunConfig&);
  void (*set)(RunConfig&, const std::string&, const std::string&);
};

// clang-format off
#define INT_KEY(name, field) \
  {name, [](const RunConfig& c) { return std::to_string(c.field); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_int(k, v); }}
#define U64_KEY(name, field) \
  {name, [](const RunConfig& c) { return std::to_string(c.field); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_u64(k, v); }}
#define DBL_KEY(name, field) \
  {name, [](const RunConfig& c) { return fmt_double(c.field); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_double(k, v); }}
#define BOOL_KEY(name, field) \
  {name, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }}
#define STR_KEY(name, field) \
  {name, [](const RunConfig& c) { return c.field; }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { (void)k; c.field = v; }}
#define INT_LIST_KEY(name, field) \
  {name, [](const RunConfig& c) { return fmt_list(c.field, [](int x) { return std::to_string(x); }); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_list<int>(k, v, parse_int); }}
#define U64_LIST_KEY(name, field) \
  {name, [](const RunConfig& c) { return fmt_list(c.field, [](std::uint64_t x) { return std::to_string(x); }); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_list<std::uint64_t>(k, v, parse_u64); }}
#define DBL_LIST_KEY(name, field) \
  {name, [](const RunConfig& c) { return fmt_list(c.field, fmt_double); }, \
   [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_list<double>(k, v, parse_double); }}

const KeyDef kKeys[] = {
    INT_KEY("synth.articles_per_class", synth.articles_per_class),
    INT_KEY("synth.comments_per_article", synth.comments_per_article),
    INT_KEY("synth.title_len", synth.title_len),
    INT_KEY("synth.content_len", synth.content_len),
    INT_KEY("synth.comment_len_min", synth.comment_len_min),
    INT_KEY("synth.comment_len_max", synth.comment_len_max),
    INT_KEY("synth.n_topics", synth.n_topics),
    DBL_KEY("synth.content_topic_rate", synth.content_topic_rate),
    DBL_KEY("synth.content_class_rate", synth.content_class_rate),
    DBL_KEY("synth.comment_topic_rate", synth.comment_topic_rate),
    DBL_KEY("synth.comment_class_rate", synth.comment_class_rate),
    U64_KEY("synth.seed", synth_seed),
    INT_KEY("vocab.max_size", vocab_max),
    INT_KEY("vocab.min_count", vocab_min_count),
    DBL_KEY("split.frac", split_frac),
    U64_KEY("split.seed", split_seed),
    INT_LIST_KEY("topics.ks", topic_ks),
    U64_KEY("topics.seed", topic_seed),
    INT_KEY("topics.q", topic_q),
    INT_KEY("topics.fit_iters", topic_iters),
    STR_KEY("detector.arch", arch),
    INT_KEY("detector.embed_dim", detector.embed_dim),
    INT_KEY("detector.hidden", detector.hidden),
    INT_KEY("detector.content_dim", detector.content_dim),
    INT_KEY("detector.comment_budget", detector.comment_budget),
    INT_KEY("detector.max_comment_tokens", detector.max_comment_tokens),
    INT_KEY("detector.conv_filters", detector.conv_filters),
    INT_LIST_KEY("detector.conv_widths", detector.conv_widths),
    INT_KEY("detector.defend_chunk", detector.defend_chunk),
    U64_KEY("detector.init_seed", det_init_seed),
    INT_KEY("detector.epochs", det_epochs),
    DBL_KEY("detector.lr", det_lr),
    U64_KEY("detector.train_seed", det_train_seed),
    INT_KEY("gen.embed_dim", generator.embed_dim),
    INT_KEY("gen.hidden", generator.hidden),
    INT_KEY("gen.z_dim", generator.z_dim),
    INT_KEY("gen.cond_dim", generator.cond_dim),
    INT_KEY("gen.max_len", generator.max_len),
    U64_KEY("gen.init_seed", gen_init_seed),
    INT_KEY("mle.epochs", mle_epochs),
    DBL_KEY("mle.lr", mle_lr),
    U64_KEY("mle.seed", mle_seed),
    INT_KEY("mle.batch_size", mle_batch),
    INT_KEY("mle.comments_per_article", mle_comments_per_article),
    INT_KEY("disc.embed_dim", disc.embed_dim),
    INT_KEY("disc.filters", disc.filters),
    INT_LIST_KEY("disc.widths", disc.widths),
    INT_KEY("disc.max_tokens", disc.max_tokens),
    U64_KEY("disc.init_seed", disc_init_seed),
    INT_KEY("attack.target_label", attack.target_label),
    INT_KEY("attack.m", attack.M),
    DBL_KEY("attack.weight_mle", attack.weight_mle),
    DBL_KEY("attack.weight_gan", attack.weight_gan),
    DBL_KEY("attack.weight_mmd", attack.weight_mmd),
    DBL_KEY("attack.weight_attack", attack.weight_attack),
    BOOL_KEY("attack.with_style", attack.with_style),
    BOOL_KEY("attack.with_attack", attack.with_attack),
    INT_KEY("attack.epochs", attack.epochs),
    DBL_KEY("attack.lr", attack.lr),
    U64_KEY("attack.seed", attack.seed),
    DBL_KEY("attack.tau", attack.tau),
    INT_KEY("attack.batch_size", attack.batch_size),
    INT_KEY("attack.n_samples", attack.n_samples),
    INT_KEY("attack.probe_samples", attack.probe_samples),
    INT_KEY("encoder.dim", encoder_dim),
    U64_KEY("encoder.seed", encoder_seed),
    INT_KEY("baseline.hotflip_budget", hotflip_budget),
    INT_KEY("baseline.textbugger_budget", textbugger_budget),
    INT_KEY("baseline.trigger_len", trigger_len),
    INT_KEY("baseline.trigger_q", trigger_q),
    INT_KEY("baseline.trigger_sweeps", trigger_sweeps),
    INT_KEY("baseline.trigger_examples", trigger_examples),
    INT_KEY("defense.max_suspicious", defense.max_suspicious),
    DBL_KEY("defense.coherency_margin", defense.coherency_margin),
    INT_KEY("eval.m", eval_m),
    STR_KEY("eval.denominator", eval_denominator),
    INT_KEY("eval.bleu_max_n", bleu_max_n),
    U64_LIST_KEY("eval.seeds", eval_seeds),
    DBL_LIST_KEY("sweep.ratios", sweep_ratios),
    INT_LIST_KEY("sweep.n_existing", sweep_n_existing),
};
// clang-format on

#undef INT_KEY
#undef U64_KEY
#undef DBL_KEY
#undef BOOL_KEY
#undef STR_KEY
#undef INT_LIST_KEY
#undef U64_LIST_KEY
#undef DBL_LIST_KEY

const KeyDef* find_key(const std::string& name) {
  for (const KeyDef& k : kKeys)
    if (name == k.name) return &k;
  return nullptr;
}

}  // namespace

void RunConfig::set(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw SchemaError("config: expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const KeyDef* def = find_key(key);
  if (def == nullptr) throw SchemaError("config: unknown key '" + key + "'");
  def->set(*this, key, value);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second)
      throw SchemaError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.set(line);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const KeyDef& k : kKeys) out[k.name] = k.get(*this);
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) {
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a(to_text()); }

void RunConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw SchemaError("config: " + what);
  };
  need(synth.articles_per_class >= 1, "synth.articles_per_class must be >= 1");
  need(synth.comments_per_article >= 0, "synth.comments_per_article must be >= 0");
  need(synth.title_len >= 1 && synth.content_len >= 1, "synth lengths must be >= 1");
  need(synth.comment_len_min >= 1 && synth.comment_len_min <= synth.comment_len_max,
       "synth comment length range is empty");
  need(synth.n_topics >= 2, "synth.n_topics must be >= 2");
  for (double r : {synth.content_topic_rate, synth.content_class_rate, synth.comment_topic_rate,
                   synth.comment_class_rate})
    need(r >= 0.0 && r <= 1.0, "synth rates must lie in [0,1]");
  need(vocab_max >= 8, "vocab.max_size must be >= 8");
  need(vocab_min_count >= 1, "vocab.min_count must be >= 1");
  need(split_frac > 0.0 && split_frac < 1.0, "split.frac must lie in (0,1)");
  need(!topic_ks.empty(), "topics.ks must not be empty");
  for (int k : topic_ks) need(k >= 2, "every topic k must be >= 2");
  need(topic_q >= 1 && topic_iters >= 1, "topic fitting parameters must be >= 1");
  // module-level validators throw invalid_argument; surface them as config errors
  const auto as_config_error = [](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw SchemaError(std::string("config: ") + e.what());
    }
  };
  as_config_error([&] { (void)arch_from_tag(arch); });
  need(detector.embed_dim >= 1 && detector.hidden >= 1 && detector.content_dim >= 1,
       "detector dims must be >= 1");
  need(detector.comment_budget >= 1 && detector.max_comment_tokens >= 1,
       "detector comment limits must be >= 1");
  need(detector.conv_filters >= 1 && !detector.conv_widths.empty(),
       "detector conv settings must be nonempty");
  for (int w : detector.conv_widths) need(w >= 1, "detector conv widths must be >= 1");
  need(detector.defend_chunk >= 1, "detector.defend_chunk must be >= 1");
  need(det_epochs >= 1 && det_lr > 0.0, "detector training parameters out of range");
  need(generator.embed_dim >= 1 && generator.hidden >= 1 && generator.z_dim >= 1 &&
           generator.cond_dim >= 1 && generator.max_len >= 1,
       "generator dims must be >= 1");
  need(mle_epochs >= 1 && mle_lr > 0.0 && mle_batch >= 1 && mle_comments_per_article >= 1,
       "pretraining parameters out of range");
  need(disc.embed_dim >= 1 && disc.filters >= 1 && !disc.widths.empty() && disc.max_tokens >= 1,
       "discriminator dims must be >= 1");
  for (int w : disc.widths) need(w >= 1, "discriminator widths must be >= 1");
  as_config_error([&] { attack.validate(); });
  need(encoder_dim >= 1, "encoder.dim must be >= 1");
  need(hotflip_budget >= 0 && textbugger_budget >= 0, "baseline budgets must be >= 0");
  need(trigger_len >= 1 && trigger_q >= 1 && trigger_sweeps >= 1 && trigger_examples >= 1,
       "trigger tuning parameters must be >= 1");
  as_config_error([&] { defense.validate(); });
  need(eval_m >= 1, "eval.m must be >= 1");
  need(eval_denominator == "correct_only" || eval_denominator == "all_nontarget",
       "eval.denominator must be correct_only or all_nontarget");
  need(bleu_max_n >= 1, "eval.bleu_max_n must be >= 1");
  need(!eval_seeds.empty(), "eval.seeds must not be empty");
  need(!sweep_ratios.empty(), "sweep.ratios must not be empty");
  for (double r : sweep_ratios) need(r > 0.0, "sweep ratios must be positive");
  need(!sweep_n_existing.empty(), "sweep.n_existing must not be empty");
  for (int n : sweep_n_existing) need(n >= 0, "sweep.n_existing entries must be >= 0");
}

}  // namespace malcom
