#include "malcom/generator.hpp"

#include "malcom/errors.hpp"
#include "malcom/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace malcom {

using nn::Graph;
using nn::Mat;

Json GeneratorConfig::to_json() const {
  return Json{{"embed_dim", embed_dim},
              {"hidden", hidden},
              {"z_dim", z_dim},
              {"cond_dim", cond_dim},
              {"max_len", max_len}};
}

GeneratorConfig GeneratorConfig::from_json(const Json& j) {
  GeneratorConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.z_dim = j.at("z_dim").get<int>();
  c.cond_dim = j.at("cond_dim").get<int>();
  c.max_len = j.at("max_len").get<int>();
  if (c.embed_dim < 1 || c.hidden < 1 || c.z_dim < 1 || c.cond_dim < 1 || c.max_len < 2) {
    throw SchemaError("generator config: dimensions out of range");
  }
  return c;
}

Mat gumbel_softmax_with_noise(const Mat& logits, double tau, const Mat& noise) {
  if (tau <= 0.0) {
    throw std::invalid_argument("gumbel_softmax: tau must be positive, got " + std::to_string(tau));
  }
  if (noise.rows() != logits.rows() || noise.cols() != logits.cols()) {
    throw std::invalid_argument("gumbel_softmax: noise shape mismatch");
  }
  Mat out(logits.rows(), logits.cols());
  for (int c = 0; c < logits.cols(); ++c) {
    Eigen::VectorXd v = (logits.col(c) + noise.col(c)) / tau;
    double m = v.maxCoeff();
    Eigen::VectorXd e = (v.array() - m).exp();
    out.col(c) = e / e.sum();
  }
  return out;
}

Mat gumbel_softmax_sample(const Mat& logits, double tau, Rng& rng) {
  Mat noise(logits.rows(), logits.cols());
  for (int c = 0; c < noise.cols(); ++c) {
    for (int r = 0; r < noise.rows(); ++r) {
      noise(r, c) = rng.gumbel();
    }
  }
  return gumbel_softmax_with_noise(logits, tau, noise);
}

Graph::Var gumbel_softmax_noise(Graph& g, Graph::Var logits, double tau, const Mat& noise) {
  if (tau <= 0.0) {
    throw std::invalid_argument("gumbel_softmax: tau must be positive, got " + std::to_string(tau));
  }
  if (noise.rows() != g.val(logits).rows() || noise.cols() != g.val(logits).cols()) {
    throw std::invalid_argument("gumbel_softmax: noise shape mismatch");
  }
  auto shifted = g.add(logits, g.constant(noise));
  return g.softmax_cols(g.scale(shifted, 1.0 / tau));
}

Graph::Var gumbel_softmax(Graph& g, Graph::Var logits, double tau, Rng& rng) {
  Mat noise(g.val(logits).rows(), g.val(logits).cols());
  for (int c = 0; c < noise.cols(); ++c) {
    for (int r = 0; r < noise.rows(); ++r) {
      noise(r, c) = rng.gumbel();
    }
  }
  return gumbel_softmax_noise(g, logits, tau, noise);
}

Json PretrainCurve::to_json() const {
  return Json{{"train_nll", train_nll}, {"held_nll", held_nll}};
}

Generator::Generator(GeneratorConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  Rng root(seed);
  Rng r1 = root.derive(1);
  emb_ = nn::Embedding(cfg_.embed_dim, vocab_.size(), "gen.emb", r1);
  Rng r2 = root.derive(2);
  cond_ = nn::Dense(cfg_.embed_dim, cfg_.cond_dim, "gen.cond", r2);
  Rng r3 = root.derive(3);
  init_ = nn::Dense(cfg_.cond_dim + cfg_.z_dim, cfg_.hidden, "gen.init", r3);
  Rng r4 = root.derive(4);
  gru_ = nn::GruCell(cfg_.embed_dim, cfg_.hidden, "gen.gru", r4);
  Rng r5 = root.derive(5);
  out_ = nn::Dense(cfg_.hidden, vocab_.size(), "gen.out", r5);
}

std::vector<nn::Param*> Generator::params() {
  std::vector<nn::Param*> ps;
  for (auto* p : emb_.params()) ps.push_back(p);
  for (auto* p : cond_.params()) ps.push_back(p);
  for (auto* p : init_.params()) ps.push_back(p);
  for (auto* p : gru_.params()) ps.push_back(p);
  for (auto* p : out_.params()) ps.push_back(p);
  return ps;
}

Graph::Var Generator::condition(Graph& g, const std::string& content, const Mat& z, bool frozen) {
  if (z.rows() != cfg_.z_dim || z.cols() != 1) {
    throw std::invalid_argument("generator: z must be z_dim x 1");
  }
  std::vector<int> ids = vocab_.encode(content);
  Graph::Var mean_emb;
  if (ids.empty()) {
    mean_emb = g.constant(Mat::Zero(cfg_.embed_dim, 1));
  } else {
    auto emb = emb_.lookup(g, ids, frozen);
    mean_emb = g.scale(g.rows_sum(emb), 1.0 / static_cast<double>(ids.size()));
  }
  auto cvec = g.tanh(cond_(g, mean_emb, frozen));
  auto zin = g.constant(z);
  auto joint = g.concat_rows({cvec, zin});
  return g.tanh(init_(g, joint, frozen));
}

Graph::Var Generator::step_logits(Graph& g, Graph::Var input_emb, Graph::Var& h, bool frozen) {
  h = gru_.step(g, input_emb, h, frozen);
  return out_(g, h, frozen);
}

Mat Generator::next_token_dist(const std::string& content, const std::vector<int>& prefix,
                               const Mat& z) {
  Graph g;
  auto h = condition(g, content, z, /*frozen=*/true);
  std::vector<int> inputs;
  inputs.push_back(Vocabulary::kBos);
  inputs.insert(inputs.end(), prefix.begin(), prefix.end());
  Graph::Var logits{};
  for (int id : inputs) {
    auto x = emb_.lookup(g, {id}, /*frozen=*/true);
    logits = step_logits(g, x, h, /*frozen=*/true);
  }
  Mat out = g.val(logits);
  if (!out.allFinite()) {
    throw NanError("generator: non-finite next-token logits");
  }
  return out;
}

Graph::Var Generator::sequence_nll(Graph& g, const std::string& content,
                                   const std::vector<int>& target, const Mat& z, bool frozen) {
  if (target.size() < 2 || target.front() != Vocabulary::kBos) {
    throw std::invalid_argument("generator: target must start with BOS and have >= 2 tokens");
  }
  auto h = condition(g, content, z, frozen);
  std::vector<Graph::Var> logit_cols;
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    auto x = emb_.lookup(g, {target[t]}, frozen);
    logit_cols.push_back(step_logits(g, x, h, frozen));
  }
  auto logits = g.concat_cols(logit_cols);
  auto logp = g.log_softmax_cols(logits);
  std::vector<int> next(target.begin() + 1, target.end());
  auto picked = g.pick_rows(logp, next);
  return g.neg(g.mean_all(picked));
}

std::vector<int> Generator::generate(const std::string& content, const Mat& z, double tau,
                                     std::uint64_t seed) {
  if (tau <= 0.0) {
    throw std::invalid_argument("generate: tau must be positive");
  }
  Rng rng(seed);
  Graph g;
  auto h = condition(g, content, z, /*frozen=*/true);
  std::vector<int> emitted;
  int prev = Vocabulary::kBos;
  for (int t = 0; t < cfg_.max_len; ++t) {
    auto x = emb_.lookup(g, {prev}, /*frozen=*/true);
    auto logits = step_logits(g, x, h, /*frozen=*/true);
    Eigen::VectorXd v = g.val(logits).col(0) / tau;
    v(Vocabulary::kPad) = v(Vocabulary::kBos) = v(Vocabulary::kUnk) = -1e300;
    double m = v.maxCoeff();
    Eigen::VectorXd e = (v.array() - m).exp();
    std::vector<double> w(e.data(), e.data() + e.size());
    int id = rng.categorical(w);
    if (id == Vocabulary::kEos) break;
    emitted.push_back(id);
    prev = id;
  }
  return emitted;
}

Generator::RelaxedSample Generator::generate_relaxed(Graph& g, const std::string& content,
                                                     const Mat& z, double tau, Rng& noise,
                                                     bool frozen) {
  Mat mask = Mat::Zero(vocab_.size(), 1);
  mask(Vocabulary::kPad, 0) = mask(Vocabulary::kBos, 0) = mask(Vocabulary::kUnk, 0) = -1e9;
  auto mask_var = g.constant(mask);

  auto h = condition(g, content, z, frozen);
  RelaxedSample s;
  std::vector<Graph::Var> cols;
  auto input = emb_.lookup(g, {Vocabulary::kBos}, frozen);
  bool ended = false;
  for (int t = 0; t < cfg_.max_len; ++t) {
    auto logits = g.add(step_logits(g, input, h, frozen), mask_var);
    auto y = gumbel_softmax(g, logits, tau, noise);
    cols.push_back(y);
    int arg = 0;
    g.val(y).col(0).maxCoeff(&arg);
    s.argmax_ids.push_back(arg);
    if (!ended && arg == Vocabulary::kEos) {
      s.len = t;  // columns before the terminator
      ended = true;
    }
    input = emb_.lookup_soft(g, y, frozen);
  }
  if (!ended) s.len = cfg_.max_len;
  s.one_hots = g.concat_cols(cols);
  return s;
}

std::vector<std::string> Generator::generate_best(const std::string& content,
                                                  const GenerationConfig& gen,
                                                  const TopicSet& topics) {
  if (gen.n_samples < 1 || gen.M < 1 || gen.M > gen.n_samples) {
    throw std::invalid_argument("generate_best: need 1 <= M <= n_samples");
  }
  Rng root(gen.seed);
  std::vector<std::pair<double, std::string>> scored;
  for (int i = 0; i < gen.n_samples; ++i) {
    Rng zs = root.derive(static_cast<std::uint64_t>(i) * 2 + 1);
    Mat z = sample_z(zs);
    std::vector<int> ids = generate(content, z, gen.tau, mix_seed(gen.seed, i * 2 + 2));
    std::string text = vocab_.decode(ids);
    double score = text.empty() ? -1.0 : coherency_pair(topics, content, text);
    scored.emplace_back(score, std::move(text));
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> best;
  for (int i = 0; i < gen.M; ++i) best.push_back(scored[i].second);
  return best;
}

Mat Generator::sample_z(Rng& rng) const {
  Mat z(cfg_.z_dim, 1);
  for (int i = 0; i < cfg_.z_dim; ++i) z(i, 0) = rng.normal();
  return z;
}

Json Generator::to_json() const {
  Json j = artifact_envelope("generator", 1);
  j["config"] = cfg_.to_json();
  j["vocab_hash"] = vocab_.hash();
  Json ps = Json::array();
  for (auto* p : const_cast<Generator*>(this)->params()) ps.push_back(param_to_json(*p));
  j["params"] = ps;
  return j;
}

Generator Generator::from_json(const Json& j, const Vocabulary& vocab) {
  check_envelope(j, "generator", 1);
  if (j.at("vocab_hash").get<std::uint64_t>() != vocab.hash()) {
    throw SchemaError("generator checkpoint: vocabulary hash mismatch");
  }
  Generator G(GeneratorConfig::from_json(j.at("config")), vocab, /*seed=*/0);
  auto ps = G.params();
  const Json& arr = j.at("params");
  if (arr.size() != ps.size()) {
    throw SchemaError("generator checkpoint: wrong parameter count");
  }
  for (std::size_t i = 0; i < ps.size(); ++i) param_from_json(*ps[i], arr[i]);
  return G;
}

namespace {

struct Pair {
  const std::string* content;
  std::vector<int> target;  // BOS ... EOS
};

std::vector<Pair> collect_pairs(const Dataset& d, int max_len, int comments_per_article,
                                const Vocabulary& vocab) {
  std::vector<Pair> pairs;
  for (const auto& a : d.articles) {
    int used = 0;
    for (const auto& c : a.comments) {
      if (comments_per_article > 0 && used >= comments_per_article) break;
      auto seq = vocab.encode_seq(c, max_len + 2);
      if (seq.size() < 2) continue;
      pairs.push_back(Pair{&a.content, std::move(seq)});
      ++used;
    }
  }
  return pairs;
}

double mean_token_nll(Generator& G, const std::vector<Pair>& pairs, const Mat& z) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    Graph g;
    auto nll = G.sequence_nll(g, *p.content, p.target, z, /*frozen=*/true);
    std::size_t n = p.target.size() - 1;
    total += g.val(nll)(0, 0) * static_cast<double>(n);
    tokens += n;
  }
  if (tokens == 0) return 0.0;
  return total / static_cast<double>(tokens);
}

}  // namespace

PretrainCurve pretrain_mle(Generator& G, const Dataset& train, int epochs, double lr,
                           std::uint64_t seed, int batch_size, int comments_per_article) {
  if (train.articles.empty()) {
    throw std::invalid_argument("pretrain_mle: empty dataset");
  }
  if (epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("pretrain_mle: epochs and batch_size must be positive");
  }
  const auto& vocab = G.vocab();
  int T = G.config().max_len;

  Dataset fit, held;
  for (std::size_t i = 0; i < train.articles.size(); ++i) {
    // Every tenth article is held out for the reported curve.
    ((i % 10 == 9) ? held : fit).articles.push_back(train.articles[i]);
  }
  auto fit_pairs = collect_pairs(fit, T, comments_per_article, vocab);
  auto held_pairs = collect_pairs(held, T, comments_per_article, vocab);
  if (fit_pairs.empty()) {
    throw std::invalid_argument("pretrain_mle: no usable (content, comment) pairs");
  }

  auto ps = G.params();
  nn::Adam opt(ps, lr);
  Rng root(seed);
  Mat z_eval = Mat::Zero(G.config().z_dim, 1);

  PretrainCurve curve;
  std::vector<int> order(fit_pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int ep = 0; ep < epochs; ++ep) {
    Rng er = root.derive(static_cast<std::uint64_t>(ep) + 1);
    er.shuffle(order);
    double ep_total = 0.0;
    std::size_t ep_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::size_t end = std::min(order.size(), start + batch_size);
      Graph g;
      Graph::Var total{};
      bool first = true;
      std::size_t tokens = 0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = fit_pairs[order[k]];
        Mat z = G.sample_z(er);
        std::size_t n = p.target.size() - 1;
        auto nll = g.scale(G.sequence_nll(g, *p.content, p.target, z), static_cast<double>(n));
        total = first ? nll : g.add(total, nll);
        first = false;
        tokens += n;
      }
      auto loss = g.scale(total, 1.0 / static_cast<double>(tokens));
      double lv = g.val(loss)(0, 0);
      if (!std::isfinite(lv)) {
        throw NanError("pretrain_mle: non-finite loss at epoch " + std::to_string(ep));
      }
      ep_total += lv * static_cast<double>(tokens);
      ep_tokens += tokens;
      opt.zero_grad();
      g.backward(loss);
      nn::clip_global_norm(ps, 5.0);
      opt.step();
    }
    curve.train_nll.push_back(ep_total / static_cast<double>(ep_tokens));
    if (!held_pairs.empty()) {
      curve.held_nll.push_back(mean_token_nll(G, held_pairs, z_eval));
    }
  }
  return curve;
}

double nll_of(Generator& G, const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("nll_of: empty pair list");
  }
  const auto& vocab = G.vocab();
  std::vector<Pair> ps;
  std::vector<std::string> contents;
  contents.reserve(pairs.size());
  for (const auto& [content, comment] : pairs) contents.push_back(content);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto seq = vocab.encode_seq(pairs[i].second, G.config().max_len + 2);
    if (seq.size() < 2) continue;
    ps.push_back(Pair{&contents[i], std::move(seq)});
  }
  if (ps.empty()) {
    throw std::invalid_argument("nll_of: no usable pairs after encoding");
  }
  Mat z = Mat::Zero(G.config().z_dim, 1);
  return mean_token_nll(G, ps, z);
}

void save_generator(const std::string& path, Generator& G) { save_json_file(path, G.to_json()); }

Generator load_generator(const std::string& path, const Vocabulary& vocab) {
  return Generator::from_json(load_json_file(path), vocab);
}

}  // namespace malcom
