#include "malcom/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "malcom/baselines.hpp"
#include "malcom/defense.hpp"
#include "malcom/errors.hpp"
#include "malcom/eval.hpp"
#include "malcom/jsonio.hpp"
#include "malcom/runconfig.hpp"
#include "malcom/synth.hpp"

namespace malcom {

namespace {

namespace fs = std::filesystem;

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void require_input(const std::string& path, const std::string& role) {
  if (path.empty()) throw SchemaError(role + ": no path given");
  if (!fs::exists(path)) throw IoError(role + " not found: " + path);
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!path.empty()) {
    require_input(path, "config");
    cfg = RunConfig::load(path);
  }
  for (const auto& s : sets) cfg.set(s);
  cfg.validate();
  return cfg;
}

Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : cfg.to_map()) j[k] = v;
  return j;
}

// Every run leaves one manifest naming its inputs, outputs, resolved config,
// config hash, and seeds; artifacts reference the same hash.
void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& cfg,
                    const Json& inputs, const Json& outputs, const Json& seeds,
                    const Json& extra = Json::object()) {
  Json j = artifact_envelope("manifest", 1);
  j["command"] = command;
  j["config_hash"] = hash_hex(cfg.hash());
  j["config"] = config_json(cfg);
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["seeds"] = seeds;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  save_json_file(join_path(out_dir, command + ".manifest.json"), j);
}

// Inject provenance into a JSON artifact already on disk. Readers access
// their payload by key, so the extra fields ride along untouched.
void stamp_artifact(const std::string& path, const RunConfig& cfg, const Json& seeds) {
  Json j = load_json_file(path);
  j["config_hash"] = hash_hex(cfg.hash());
  j["seeds"] = seeds;
  save_json_file(path, j);
}

void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw SchemaError("--out: no output directory given");
  fs::create_directories(out);
}

Vocabulary load_vocab(const std::string& path) {
  require_input(path, "vocabulary");
  return Vocabulary::from_json(load_json_file(path));
}

Dataset load_articles(const std::string& path, const std::string& role) {
  require_input(path, role);
  return load_dataset(path);
}

std::vector<std::string> contents_of(const Dataset& d) {
  std::vector<std::string> out;
  out.reserve(d.articles.size());
  for (const auto& a : d.articles) out.push_back(a.content);
  return out;
}

AtkDenominator denominator_of(const RunConfig& cfg) {
  return cfg.eval_denominator == "all_nontarget" ? AtkDenominator::all_nontarget
                                                 : AtkDenominator::correct_only;
}

// ---- subcommand option bags -------------------------------------------------

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* sub, CommonOpts& o, bool with_out = true) {
  sub->add_option("--config", o.config_path, "key=value run configuration file");
  sub->add_option("--set", o.sets, "inline config override key=value (repeatable)");
  if (with_out) sub->add_option("--out", o.out, "output directory")->required();
}

// ---- runners ----------------------------------------------------------------

void run_synth(const CommonOpts& c) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  ensure_out_dir(c.out);
  Dataset corpus = synth_corpus(cfg.synth, cfg.synth_seed);
  const std::string out_path = join_path(c.out, "corpus.jsonl");
  save_dataset(out_path, corpus);
  write_manifest(c.out, "synth", cfg, Json::object(), Json{{"corpus", out_path}},
                 Json{{"synth", cfg.synth_seed}},
                 Json{{"articles", corpus.articles.size()}});
}

void run_prepare(const CommonOpts& c, const std::string& in_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset raw = load_articles(in_path, "raw dataset");
  ensure_out_dir(c.out);
  auto [tr, te] = split(raw, cfg.split_frac, cfg.split_seed);
  Vocabulary vocab = Vocabulary::build(tr, std::size_t(cfg.vocab_max), cfg.vocab_min_count);

  const std::string train_path = join_path(c.out, "train.jsonl");
  const std::string test_path = join_path(c.out, "test.jsonl");
  const std::string vocab_path = join_path(c.out, "vocab.json");
  save_dataset(train_path, tr);
  save_dataset(test_path, te);
  save_json_file(vocab_path, vocab.to_json());
  const Json seeds{{"split", cfg.split_seed}};
  stamp_artifact(vocab_path, cfg, seeds);
  write_manifest(c.out, "prepare", cfg, Json{{"raw", in_path}},
                 Json{{"train", train_path}, {"test", test_path}, {"vocab", vocab_path}}, seeds,
                 Json{{"train_articles", tr.articles.size()},
                      {"test_articles", te.articles.size()},
                      {"vocab_size", vocab.size()}});
}

void run_fit_topics(const CommonOpts& c, const std::string& train_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset tr = load_articles(train_path, "train dataset");
  ensure_out_dir(c.out);
  TopicSet topics =
      fit_topic_set(contents_of(tr), cfg.topic_ks, cfg.topic_seed, cfg.topic_q, cfg.topic_iters);
  const std::string out_path = join_path(c.out, "topics.json");
  save_json_file(out_path, topics.to_json());
  const Json seeds{{"topics", cfg.topic_seed}};
  stamp_artifact(out_path, cfg, seeds);
  write_manifest(c.out, "fit-topics", cfg, Json{{"train", train_path}},
                 Json{{"topics", out_path}}, seeds);
}

void run_pretrain_gen(const CommonOpts& c, const std::string& train_path,
                      const std::string& vocab_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset tr = load_articles(train_path, "train dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  ensure_out_dir(c.out);
  Generator G(cfg.generator, vocab, cfg.gen_init_seed);
  PretrainCurve curve = pretrain_mle(G, tr, cfg.mle_epochs, cfg.mle_lr, cfg.mle_seed,
                                     cfg.mle_batch, cfg.mle_comments_per_article);
  const std::string out_path = join_path(c.out, "generator.json");
  save_generator(out_path, G);
  const Json seeds{{"init", cfg.gen_init_seed}, {"mle", cfg.mle_seed}};
  stamp_artifact(out_path, cfg, seeds);
  write_manifest(c.out, "pretrain-gen", cfg,
                 Json{{"train", train_path}, {"vocab", vocab_path}},
                 Json{{"generator", out_path}}, seeds, Json{{"curve", curve.to_json()}});
}

void run_train_detector(const CommonOpts& c, const std::string& train_path,
                        const std::string& test_path, const std::string& vocab_path,
                        const std::string& arch_flag) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  const std::string tag = arch_flag.empty() ? cfg.arch : arch_flag;
  const Arch arch = arch_from_tag(tag);
  Dataset tr = load_articles(train_path, "train dataset");
  Dataset te = load_articles(test_path, "test dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  ensure_out_dir(c.out);
  Detector f(arch, cfg.detector, vocab, cfg.det_init_seed);
  DetectorMetrics metrics =
      train_detector(f, tr, te, cfg.det_epochs, cfg.det_lr, cfg.det_train_seed);
  const std::string out_path = join_path(c.out, "detector_" + tag + ".json");
  save_detector(out_path, f, &metrics);
  const Json seeds{{"init", cfg.det_init_seed}, {"train", cfg.det_train_seed}};
  stamp_artifact(out_path, cfg, seeds);
  write_manifest(c.out, "train-detector", cfg,
                 Json{{"train", train_path}, {"test", test_path}, {"vocab", vocab_path}},
                 Json{{"detector", out_path}}, seeds,
                 Json{{"arch", tag}, {"metrics", metrics.to_json()}});
}

void run_train_malcom(const CommonOpts& c, const std::string& train_path,
                      const std::string& vocab_path, const std::string& gen_path,
                      const std::string& det_path, const std::string& topics_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset tr = load_articles(train_path, "train dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  require_input(gen_path, "generator checkpoint");
  Generator G = load_generator(gen_path, vocab);
  require_input(det_path, "detector checkpoint");
  Detector f = load_detector(det_path, vocab);
  require_input(topics_path, "topics");
  TopicSet topics = TopicSet::from_json(load_json_file(topics_path));
  ensure_out_dir(c.out);

  Discriminator D(cfg.disc, vocab, cfg.disc_init_seed);
  MalcomLog log = train_malcom(G, D, f, tr, cfg.attack, topics);

  const std::string gen_out = join_path(c.out, "generator_malcom.json");
  const std::string disc_out = join_path(c.out, "discriminator.json");
  save_generator(gen_out, G);
  save_discriminator(disc_out, D);
  const Json seeds{{"disc_init", cfg.disc_init_seed}, {"attack", cfg.attack.seed}};
  stamp_artifact(gen_out, cfg, seeds);
  stamp_artifact(disc_out, cfg, seeds);
  write_manifest(c.out, "train-malcom", cfg,
                 Json{{"train", train_path},
                      {"vocab", vocab_path},
                      {"generator", gen_path},
                      {"detector", det_path},
                      {"topics", topics_path}},
                 Json{{"generator", gen_out}, {"discriminator", disc_out}}, seeds,
                 Json{{"log", log.to_json()}});
}

// Shared by `attack` (the generator method) and `baseline-attack`: crafted
// comments for every attacked-class article of the eval split, one file.
void write_attack_artifact(const CommonOpts& c, const RunConfig& cfg, const std::string& command,
                           AttackMethod method, const AttackToolkit& kit, const Dataset& eval_set,
                           const Json& inputs) {
  Crafter crafter(method, kit);
  CraftedMap crafted = craft_map(crafter, eval_set, cfg.attack.M);

  Json comments = Json::object();
  for (const auto& [id, list] : crafted) comments[id] = list;
  Json j = artifact_envelope("attack", 1);
  j["method"] = attack_method_tag(method);
  j["target_label"] = cfg.attack.target_label;
  j["m"] = cfg.attack.M;
  j["comments"] = std::move(comments);
  if (method == AttackMethod::unitrigger) {
    Json triggers = Json::array();
    for (const auto& t : crafter.triggers()) triggers.push_back(t.to_json());
    j["triggers"] = std::move(triggers);
  }
  const std::string out_path =
      join_path(c.out, "attack_" + attack_method_tag(method) + ".json");
  save_json_file(out_path, j);
  const Json seeds{{"attack", cfg.attack.seed}, {"encoder", cfg.encoder_seed}};
  stamp_artifact(out_path, cfg, seeds);
  write_manifest(c.out, command, cfg, inputs, Json{{"attack", out_path}}, seeds,
                 Json{{"method", attack_method_tag(method)},
                      {"articles", crafted.size()}});
}

AttackToolkit make_toolkit(const RunConfig& cfg, Detector* surrogate, Generator* generator,
                           const SemanticEncoder* enc, const CopycatIndex* index,
                           const TopicSet* topics, const Dataset* train) {
  AttackToolkit kit;
  kit.surrogate = surrogate;
  kit.generator = generator;
  kit.encoder = enc;
  kit.index = index;
  kit.topics = topics;
  kit.train = train;
  kit.attack = cfg.attack;
  kit.hotflip_budget = cfg.hotflip_budget;
  kit.textbugger_budget = cfg.textbugger_budget;
  kit.trigger_len = cfg.trigger_len;
  kit.trigger_q = cfg.trigger_q;
  kit.trigger_sweeps = cfg.trigger_sweeps;
  kit.trigger_examples = cfg.trigger_examples;
  return kit;
}

void run_attack(const CommonOpts& c, const std::string& train_path, const std::string& eval_path,
                const std::string& vocab_path, const std::string& gen_path,
                const std::string& topics_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset tr = load_articles(train_path, "train dataset");
  Dataset ev = load_articles(eval_path, "eval dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  require_input(gen_path, "generator checkpoint");
  Generator G = load_generator(gen_path, vocab);
  require_input(topics_path, "topics");
  TopicSet topics = TopicSet::from_json(load_json_file(topics_path));
  ensure_out_dir(c.out);

  SemanticEncoder enc(vocab, cfg.encoder_dim, cfg.encoder_seed, contents_of(tr));
  CopycatIndex index(enc, tr);
  AttackToolkit kit = make_toolkit(cfg, nullptr, &G, &enc, &index, &topics, &tr);
  write_attack_artifact(c, cfg, "attack", AttackMethod::malcom, kit, ev,
                        Json{{"train", train_path},
                             {"eval", eval_path},
                             {"vocab", vocab_path},
                             {"generator", gen_path},
                             {"topics", topics_path}});
}

void run_baseline_attack(const CommonOpts& c, const std::string& method_tag,
                         const std::string& train_path, const std::string& eval_path,
                         const std::string& vocab_path, const std::string& det_path,
                         const std::string& topics_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  const AttackMethod method = attack_method_from_tag(method_tag);
  if (method == AttackMethod::none || method == AttackMethod::malcom)
    throw SchemaError("baseline-attack: method must be one of copycat, hotflip, unitrigger, "
                      "textbugger (use `attack` for the generator)");
  Dataset tr = load_articles(train_path, "train dataset");
  Dataset ev = load_articles(eval_path, "eval dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  require_input(det_path, "detector checkpoint");
  Detector f = load_detector(det_path, vocab);
  TopicSet topics;
  if (method == AttackMethod::unitrigger) {
    require_input(topics_path, "topics");
    topics = TopicSet::from_json(load_json_file(topics_path));
  }
  ensure_out_dir(c.out);

  SemanticEncoder enc(vocab, cfg.encoder_dim, cfg.encoder_seed, contents_of(tr));
  CopycatIndex index(enc, tr);
  AttackToolkit kit = make_toolkit(cfg, &f, nullptr, &enc, &index,
                                   topics.models.empty() ? nullptr : &topics, &tr);
  Json inputs{{"train", train_path},
              {"eval", eval_path},
              {"vocab", vocab_path},
              {"detector", det_path}};
  if (!topics_path.empty()) inputs["topics"] = topics_path;
  write_attack_artifact(c, cfg, "baseline-attack", method, kit, ev, inputs);
}

void run_defend(const CommonOpts& c, const std::string& eval_path, const std::string& attack_path,
                const std::string& vocab_path, const std::string& topics_path) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset ev = load_articles(eval_path, "eval dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  require_input(topics_path, "topics");
  TopicSet topics = TopicSet::from_json(load_json_file(topics_path));
  require_input(attack_path, "attack artifact");
  Json in = load_json_file(attack_path);
  check_envelope(in, "attack", 1);
  ensure_out_dir(c.out);

  const WordRecognizer recognizer = dictionary_recognizer(vocab);
  std::map<std::string, const Article*> by_id;
  for (const auto& a : ev.articles) by_id[a.id] = &a;

  Json kept = Json::object();
  Json verdicts = Json::object();
  long long total = 0, removed = 0;
  for (const auto& [id, list] : in.at("comments").items()) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw SchemaError("defend: attack artifact names unknown article " + id);
    std::vector<std::string> comments = list.get<std::vector<std::string>>();
    DefenseResult res = defend(*it->second, comments, topics, cfg.defense, recognizer);
    kept[id] = res.kept;
    verdicts[id] = res.to_json();
    total += long(comments.size());
    removed += long(comments.size() - res.kept.size());
  }
  const double filter_out = total > 0 ? double(removed) / double(total) : 0.0;

  Json j = artifact_envelope("attack", 1);
  j["method"] = in.at("method");
  j["target_label"] = in.at("target_label");
  j["m"] = in.at("m");
  j["comments"] = std::move(kept);
  j["defended"] = true;
  j["filter_out_rate"] = filter_out;
  const std::string out_path = join_path(c.out, "defended.json");
  save_json_file(out_path, j);
  stamp_artifact(out_path, cfg, Json::object());
  write_manifest(c.out, "defend", cfg,
                 Json{{"eval", eval_path},
                      {"attack", attack_path},
                      {"vocab", vocab_path},
                      {"topics", topics_path}},
                 Json{{"defended", out_path}}, Json::object(),
                 Json{{"filter_out_rate", filter_out}, {"verdicts", std::move(verdicts)}});
}

void run_evaluate(const CommonOpts& c, const std::string& train_path, const std::string& eval_path,
                  const std::string& vocab_path, const std::string& topics_path,
                  const std::string& surrogate_path, const std::vector<std::string>& target_paths,
                  const std::string& gen_path, const std::string& methods_csv, bool with_defense) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  Dataset tr = load_articles(train_path, "train dataset");
  Dataset ev = load_articles(eval_path, "eval dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  require_input(topics_path, "topics");
  TopicSet topics = TopicSet::from_json(load_json_file(topics_path));
  require_input(surrogate_path, "surrogate detector checkpoint");
  Detector surrogate = load_detector(surrogate_path, vocab);

  std::vector<Detector> extra;
  extra.reserve(target_paths.size());
  for (const auto& p : target_paths) {
    require_input(p, "target detector checkpoint");
    extra.push_back(load_detector(p, vocab));
  }

  std::vector<AttackMethod> methods;
  for (const auto& part : [&] {
         std::vector<std::string> tags;
         std::string cur;
         for (char ch : methods_csv) {
           if (ch == ',') {
             tags.push_back(cur);
             cur.clear();
           } else {
             cur.push_back(ch);
           }
         }
         tags.push_back(cur);
         return tags;
       }()) {
    if (!part.empty()) methods.push_back(attack_method_from_tag(part));
  }
  if (methods.empty()) methods = all_attack_methods();
  const bool wants_malcom =
      std::find(methods.begin(), methods.end(), AttackMethod::malcom) != methods.end();
  if (wants_malcom && gen_path.empty())
    throw SchemaError("evaluate: the malcom method requires --generator");

  Generator G = [&] {
    if (gen_path.empty()) return Generator(cfg.generator, vocab, cfg.gen_init_seed);
    require_input(gen_path, "generator checkpoint");
    return load_generator(gen_path, vocab);
  }();
  ensure_out_dir(c.out);

  SemanticEncoder enc(vocab, cfg.encoder_dim, cfg.encoder_seed, contents_of(tr));
  CopycatIndex index(enc, tr);

  std::vector<Detector*> targets = {&surrogate};
  for (auto& f : extra) targets.push_back(&f);

  EvalOptions opts;
  opts.denominator = denominator_of(cfg);
  opts.M = cfg.eval_m;
  opts.with_defense = with_defense;
  opts.defense = cfg.defense;
  if (with_defense) opts.recognizer = dictionary_recognizer(vocab);
  for (const auto& a : ev.articles)
    for (const auto& cm : a.comments) opts.references.push_back(cm);

  Json outputs = Json::object();
  for (std::uint64_t seed : cfg.eval_seeds) {
    AttackToolkit kit =
        make_toolkit(cfg, &surrogate, wants_malcom ? &G : nullptr, &enc, &index, &topics, &tr);
    kit.attack.seed = seed;
    MetricsReport rep = evaluate_attack(methods, kit, targets, ev, opts);
    const std::string tag = "seed" + std::to_string(seed);
    const std::string json_path = join_path(c.out, "report_" + tag + ".json");
    const std::string csv_path = join_path(c.out, "report_" + tag + ".csv");
    save_json_file(json_path, rep.to_json());
    stamp_artifact(json_path, cfg, Json{{"attack", seed}, {"encoder", cfg.encoder_seed}});
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << rep.to_csv();
    outputs["report_" + tag] = json_path;
    outputs["csv_" + tag] = csv_path;
  }

  Json inputs{{"train", train_path},
              {"eval", eval_path},
              {"vocab", vocab_path},
              {"topics", topics_path},
              {"surrogate", surrogate_path}};
  if (!target_paths.empty()) inputs["targets"] = target_paths;
  if (!gen_path.empty()) inputs["generator"] = gen_path;
  write_manifest(c.out, "evaluate", cfg, inputs, outputs,
                 Json{{"eval", cfg.eval_seeds}, {"encoder", cfg.encoder_seed}});
}

void run_sweep(const CommonOpts& c, const std::string& train_path, const std::string& eval_path,
               const std::string& vocab_path, const std::string& topics_path,
               const std::string& det_path, const std::string& surrogate_path,
               const std::string& gen_path, const std::string& method_tag) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  const AttackMethod method = attack_method_from_tag(method_tag);
  if (method == AttackMethod::none) throw SchemaError("sweep: method none sweeps nothing");
  if (method == AttackMethod::malcom && gen_path.empty())
    throw SchemaError("sweep: the malcom method requires --generator");
  Dataset tr = load_articles(train_path, "train dataset");
  Dataset ev = load_articles(eval_path, "eval dataset");
  Vocabulary vocab = load_vocab(vocab_path);
  require_input(topics_path, "topics");
  TopicSet topics = TopicSet::from_json(load_json_file(topics_path));
  require_input(det_path, "detector checkpoint");
  Detector target = load_detector(det_path, vocab);
  Detector surrogate = [&] {
    if (surrogate_path.empty()) return load_detector(det_path, vocab);
    require_input(surrogate_path, "surrogate detector checkpoint");
    return load_detector(surrogate_path, vocab);
  }();
  Generator G = [&] {
    if (gen_path.empty()) return Generator(cfg.generator, vocab, cfg.gen_init_seed);
    require_input(gen_path, "generator checkpoint");
    return load_generator(gen_path, vocab);
  }();
  ensure_out_dir(c.out);

  SemanticEncoder enc(vocab, cfg.encoder_dim, cfg.encoder_seed, contents_of(tr));
  CopycatIndex index(enc, tr);
  AttackToolkit kit = make_toolkit(cfg, &surrogate,
                                   method == AttackMethod::malcom ? &G : nullptr, &enc, &index,
                                   &topics, &tr);
  Crafter crafter(method, kit);
  SweepTable tab = robustness_sweep(crafter, target, ev, cfg.sweep_ratios, cfg.sweep_n_existing);

  Json j = artifact_envelope("sweep", 1);
  const Json body = tab.to_json();
  for (const auto& [k, v] : body.items()) j[k] = v;
  const std::string out_path = join_path(c.out, "sweep_" + method_tag + ".json");
  save_json_file(out_path, j);
  const Json seeds{{"attack", cfg.attack.seed}, {"encoder", cfg.encoder_seed}};
  stamp_artifact(out_path, cfg, seeds);
  Json inputs{{"train", train_path},
              {"eval", eval_path},
              {"vocab", vocab_path},
              {"topics", topics_path},
              {"detector", det_path}};
  if (!surrogate_path.empty()) inputs["surrogate"] = surrogate_path;
  if (!gen_path.empty()) inputs["generator"] = gen_path;
  write_manifest(c.out, "sweep", cfg, inputs, Json{{"sweep", out_path}}, seeds);
}

void run_report(const CommonOpts& c, const std::vector<std::string>& in_paths) {
  RunConfig cfg = resolve_config(c.config_path, c.sets);
  if (in_paths.empty()) throw SchemaError("report: no input reports given");
  ensure_out_dir(c.out);

  struct Group {
    int n = 0;
    std::vector<double> atk;
    double bleu = 0.0, coherency = 0.0, filter_out = 0.0;
    std::vector<double> nll;
    bool all_nll = true;
  };
  std::map<std::tuple<std::string, std::string, std::string, bool>, Group> groups;
  for (const auto& p : in_paths) {
    require_input(p, "report");
    MetricsReport rep = MetricsReport::from_json(load_json_file(p));
    for (const auto& row : rep.rows) {
      Group& g = groups[{row.method, row.detector, row.condition, row.defense_on}];
      g.n += 1;
      if (row.atk.defined) g.atk.push_back(row.atk.rate);
      g.bleu += row.bleu;
      g.coherency += row.coherency;
      g.filter_out += row.filter_out_rate;
      if (row.has_nll)
        g.nll.push_back(row.nll_gen);
      else
        g.all_nll = false;
    }
  }

  const auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / double(xs.size());
  };
  const auto stddev = [&](const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / double(xs.size() - 1));
  };

  Json rows = Json::array();
  std::string csv = "method,detector,condition,defense,n_runs,atk_mean,atk_std,bleu_mean,"
                    "nll_mean,coherency_mean,filter_out_mean\n";
  char buf[64];
  const auto fmt = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return std::string(buf);
  };
  for (const auto& [key, g] : groups) {
    const auto& [method, detector, condition, defense_on] = key;
    Json row{{"method", method},
             {"detector", detector},
             {"condition", condition},
             {"defense_on", defense_on},
             {"n_runs", g.n},
             {"bleu_mean", g.bleu / double(g.n)},
             {"coherency_mean", g.coherency / double(g.n)},
             {"filter_out_mean", g.filter_out / double(g.n)}};
    row["atk_mean"] = g.atk.empty() ? Json(nullptr) : Json(mean(g.atk));
    row["atk_std"] = g.atk.empty() ? Json(nullptr) : Json(stddev(g.atk));
    row["nll_mean"] = (g.all_nll && !g.nll.empty()) ? Json(mean(g.nll)) : Json(nullptr);
    rows.push_back(row);
    csv += method + "," + detector + "," + condition + "," + (defense_on ? "on" : "off") + "," +
           std::to_string(g.n) + "," + (g.atk.empty() ? "N/A" : fmt(mean(g.atk))) + "," +
           (g.atk.empty() ? "N/A" : fmt(stddev(g.atk))) + "," + fmt(g.bleu / double(g.n)) + "," +
           ((g.all_nll && !g.nll.empty()) ? fmt(mean(g.nll)) : "N/A") + "," +
           fmt(g.coherency / double(g.n)) + "," + fmt(g.filter_out / double(g.n)) + "\n";
  }

  Json j = artifact_envelope("aggregate", 1);
  j["rows"] = std::move(rows);
  const std::string json_path = join_path(c.out, "aggregate.json");
  const std::string csv_path = join_path(c.out, "aggregate.csv");
  save_json_file(json_path, j);
  stamp_artifact(json_path, cfg, Json::object());
  std::ofstream out_csv(csv_path);
  if (!out_csv) throw IoError("cannot write " + csv_path);
  out_csv << csv;
  write_manifest(c.out, "report", cfg, Json{{"reports", in_paths}},
                 Json{{"aggregate", json_path}, {"csv", csv_path}}, Json::object());
}

void emit_error(const std::string& type, const std::string& message) {
  std::cerr << Json{{"error", Json{{"type", type}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"malicious-comment attack laboratory"};
  app.require_subcommand(1);

  std::function<void()> run;

  CommonOpts synth_o;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  add_common(synth_cmd, synth_o);
  synth_cmd->callback([&] { run = [&] { run_synth(synth_o); }; });

  CommonOpts prep_o;
  std::string prep_in;
  auto* prep_cmd = app.add_subcommand("prepare", "split a corpus and build the vocabulary");
  add_common(prep_cmd, prep_o);
  prep_cmd->add_option("--in", prep_in, "raw dataset (jsonl)")->required();
  prep_cmd->callback([&] { run = [&] { run_prepare(prep_o, prep_in); }; });

  CommonOpts topics_o;
  std::string topics_train;
  auto* topics_cmd = app.add_subcommand("fit-topics", "fit the topic model ensemble");
  add_common(topics_cmd, topics_o);
  topics_cmd->add_option("--train", topics_train, "train split (jsonl)")->required();
  topics_cmd->callback([&] { run = [&] { run_fit_topics(topics_o, topics_train); }; });

  CommonOpts pre_o;
  std::string pre_train, pre_vocab;
  auto* pre_cmd = app.add_subcommand("pretrain-gen", "likelihood-pretrain the comment generator");
  add_common(pre_cmd, pre_o);
  pre_cmd->add_option("--train", pre_train, "train split (jsonl)")->required();
  pre_cmd->add_option("--vocab", pre_vocab, "vocabulary artifact")->required();
  pre_cmd->callback([&] { run = [&] { run_pretrain_gen(pre_o, pre_train, pre_vocab); }; });

  CommonOpts det_o;
  std::string det_train, det_test, det_vocab, det_arch;
  auto* det_cmd = app.add_subcommand("train-detector", "train one detector architecture");
  add_common(det_cmd, det_o);
  det_cmd->add_option("--train", det_train, "train split (jsonl)")->required();
  det_cmd->add_option("--test", det_test, "held-out split (jsonl)")->required();
  det_cmd->add_option("--vocab", det_vocab, "vocabulary artifact")->required();
  det_cmd->add_option("--arch", det_arch, "architecture tag (default from config)");
  det_cmd->callback(
      [&] { run = [&] { run_train_detector(det_o, det_train, det_test, det_vocab, det_arch); }; });

  CommonOpts mal_o;
  std::string mal_train, mal_vocab, mal_gen, mal_det, mal_topics;
  auto* mal_cmd = app.add_subcommand("train-malcom", "adversarially fine-tune the generator");
  add_common(mal_cmd, mal_o);
  mal_cmd->add_option("--train", mal_train, "train split (jsonl)")->required();
  mal_cmd->add_option("--vocab", mal_vocab, "vocabulary artifact")->required();
  mal_cmd->add_option("--generator", mal_gen, "pretrained generator checkpoint")->required();
  mal_cmd->add_option("--detector", mal_det, "surrogate detector checkpoint")->required();
  mal_cmd->add_option("--topics", mal_topics, "topics artifact")->required();
  mal_cmd->callback([&] {
    run = [&] { run_train_malcom(mal_o, mal_train, mal_vocab, mal_gen, mal_det, mal_topics); };
  });

  CommonOpts atk_o;
  std::string atk_train, atk_eval, atk_vocab, atk_gen, atk_topics;
  auto* atk_cmd = app.add_subcommand("attack", "craft generator comments for an eval split");
  add_common(atk_cmd, atk_o);
  atk_cmd->add_option("--train", atk_train, "train split (jsonl)")->required();
  atk_cmd->add_option("--eval", atk_eval, "eval split (jsonl)")->required();
  atk_cmd->add_option("--vocab", atk_vocab, "vocabulary artifact")->required();
  atk_cmd->add_option("--generator", atk_gen, "generator checkpoint")->required();
  atk_cmd->add_option("--topics", atk_topics, "topics artifact")->required();
  atk_cmd->callback([&] {
    run = [&] { run_attack(atk_o, atk_train, atk_eval, atk_vocab, atk_gen, atk_topics); };
  });

  CommonOpts base_o;
  std::string base_method, base_train, base_eval, base_vocab, base_det, base_topics;
  auto* base_cmd = app.add_subcommand("baseline-attack", "craft baseline attack comments");
  add_common(base_cmd, base_o);
  base_cmd->add_option("--method", base_method, "copycat | hotflip | unitrigger | textbugger")
      ->required();
  base_cmd->add_option("--train", base_train, "train split (jsonl)")->required();
  base_cmd->add_option("--eval", base_eval, "eval split (jsonl)")->required();
  base_cmd->add_option("--vocab", base_vocab, "vocabulary artifact")->required();
  base_cmd->add_option("--detector", base_det, "surrogate detector checkpoint")->required();
  base_cmd->add_option("--topics", base_topics, "topics artifact (unitrigger)");
  base_cmd->callback([&] {
    run = [&] {
      run_baseline_attack(base_o, base_method, base_train, base_eval, base_vocab, base_det,
                          base_topics);
    };
  });

  CommonOpts def_o;
  std::string def_eval, def_attack, def_vocab, def_topics;
  auto* def_cmd = app.add_subcommand("defend", "filter an attack artifact's comments");
  add_common(def_cmd, def_o);
  def_cmd->add_option("--eval", def_eval, "eval split (jsonl)")->required();
  def_cmd->add_option("--attack", def_attack, "attack artifact to filter")->required();
  def_cmd->add_option("--vocab", def_vocab, "vocabulary artifact")->required();
  def_cmd->add_option("--topics", def_topics, "topics artifact")->required();
  def_cmd->callback(
      [&] { run = [&] { run_defend(def_o, def_eval, def_attack, def_vocab, def_topics); }; });

  CommonOpts ev_o;
  std::string ev_train, ev_eval, ev_vocab, ev_topics, ev_surrogate, ev_gen, ev_methods;
  std::vector<std::string> ev_targets;
  bool ev_defense = false;
  auto* ev_cmd = app.add_subcommand("evaluate", "attack metrics across methods and detectors");
  add_common(ev_cmd, ev_o);
  ev_cmd->add_option("--train", ev_train, "train split (jsonl)")->required();
  ev_cmd->add_option("--eval", ev_eval, "eval split (jsonl)")->required();
  ev_cmd->add_option("--vocab", ev_vocab, "vocabulary artifact")->required();
  ev_cmd->add_option("--topics", ev_topics, "topics artifact")->required();
  ev_cmd->add_option("--surrogate", ev_surrogate, "surrogate detector checkpoint")->required();
  ev_cmd->add_option("--target", ev_targets, "transfer detector checkpoint (repeatable)");
  ev_cmd->add_option("--generator", ev_gen, "generator checkpoint (for the malcom method)");
  ev_cmd->add_option("--methods", ev_methods, "comma list of methods (default: all)");
  ev_cmd->add_flag("--with-defense", ev_defense, "filter crafted comments before scoring");
  ev_cmd->callback([&] {
    run = [&] {
      run_evaluate(ev_o, ev_train, ev_eval, ev_vocab, ev_topics, ev_surrogate, ev_targets, ev_gen,
                   ev_methods, ev_defense);
    };
  });

  CommonOpts sw_o;
  std::string sw_train, sw_eval, sw_vocab, sw_topics, sw_det, sw_surrogate, sw_gen;
  std::string sw_method = "malcom";
  auto* sw_cmd = app.add_subcommand("sweep", "attack ratio x existing-comment grid");
  add_common(sw_cmd, sw_o);
  sw_cmd->add_option("--train", sw_train, "train split (jsonl)")->required();
  sw_cmd->add_option("--eval", sw_eval, "eval split (jsonl)")->required();
  sw_cmd->add_option("--vocab", sw_vocab, "vocabulary artifact")->required();
  sw_cmd->add_option("--topics", sw_topics, "topics artifact")->required();
  sw_cmd->add_option("--detector", sw_det, "measured detector checkpoint")->required();
  sw_cmd->add_option("--surrogate", sw_surrogate, "crafting detector (default: --detector)");
  sw_cmd->add_option("--generator", sw_gen, "generator checkpoint (for the malcom method)");
  sw_cmd->add_option("--method", sw_method, "attack method (default malcom)");
  sw_cmd->callback([&] {
    run = [&] {
      run_sweep(sw_o, sw_train, sw_eval, sw_vocab, sw_topics, sw_det, sw_surrogate, sw_gen,
                sw_method);
    };
  });

  CommonOpts rep_o;
  std::vector<std::string> rep_in;
  auto* rep_cmd = app.add_subcommand("report", "aggregate per-seed reports into mean/std tables");
  add_common(rep_cmd, rep_o);
  rep_cmd->add_option("--in", rep_in, "report json (repeatable)")->required();
  rep_cmd->callback([&] { run = [&] { run_report(rep_o, rep_in); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("UsageError", e.what());
    return 3;
  }

  try {
    if (run) run();
    return 0;
  } catch (const IoError& e) {
    emit_error("IoError", e.what());
    return 2;
  } catch (const SchemaError& e) {
    emit_error("SchemaError", e.what());
    return 3;
  } catch (const NanError& e) {
    emit_error("NanError", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    emit_error("SchemaError", e.what());
    return 3;
  } catch (const std::exception& e) {
    emit_error("InternalError", e.what());
    return 1;
  }
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(args);
}

}  // namespace malcom
