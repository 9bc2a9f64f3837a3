#include "malcom/generator.hpp"

#include "malcom/errors.hpp"
#include "malcom/synth.hpp"
#include "malcom/topics.hpp"

#include "doctest.h"
#include "fd_check.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace malcom;
using nn::Graph;
using nn::Mat;

namespace {

Dataset tiny_corpus() {
  Dataset d;
  Article a;
  a.id = "t0";
  a.title = "the big game tonight";
  a.content = "the big game tonight was a close one for the home team";
  a.label = 0;
  a.comments = {"what a great game", "the home team played well", "close game tonight"};
  d.articles.push_back(a);
  Article b;
  b.id = "t1";
  b.title = "new album out this week";
  b.content = "the band released a new album this week with ten songs";
  b.label = 0;
  b.comments = {"love the new album", "ten songs is a lot", "the band sounds great"};
  d.articles.push_back(b);
  return d;
}

GeneratorConfig small_cfg() {
  GeneratorConfig c;
  c.embed_dim = 10;
  c.hidden = 14;
  c.z_dim = 4;
  c.cond_dim = 8;
  c.max_len = 12;
  return c;
}

struct SynthWorld {
  Dataset corpus;
  Vocabulary vocab;
  Generator G;
  std::vector<std::pair<std::string, std::string>> held_pairs;
  double nll_before = 0.0;
  PretrainCurve curve;
};

// Pretrained-on-synth generator shared by the slower checks.
SynthWorld& synth_world() {
  static SynthWorld* w = [] {
    SynthConfig sc;
    sc.articles_per_class = 30;
    sc.comments_per_article = 6;
    auto* out = new SynthWorld{synth_corpus(sc, 71), Vocabulary(),
                               Generator(GeneratorConfig{}, Vocabulary(), 0),
                               {},
                               0.0,
                               {}};
    out->vocab = Vocabulary::build(out->corpus, 4000);
    GeneratorConfig gc;
    gc.embed_dim = 16;
    gc.hidden = 24;
    gc.z_dim = 4;
    gc.cond_dim = 12;
    gc.max_len = 14;
    out->G = Generator(gc, out->vocab, 5);
    for (std::size_t i = 9; i < out->corpus.articles.size(); i += 10) {
      const auto& a = out->corpus.articles[i];
      for (const auto& c : a.comments) out->held_pairs.emplace_back(a.content, c);
    }
    out->nll_before = nll_of(out->G, out->held_pairs);
    out->curve = pretrain_mle(out->G, out->corpus, /*epochs=*/6, /*lr=*/5e-3, /*seed=*/9);
    return out;
  }();
  return *w;
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("relaxed sampling: simplex output, temperature limit, rejected tau") {
  Mat logits(3, 1);
  logits << 5.0, 0.0, 0.0;
  Mat zero = Mat::Zero(3, 1);

  auto peaked = gumbel_softmax_with_noise(logits, 0.01, zero);
  CHECK(peaked(0, 0) > 0.999);
  CHECK(std::abs(peaked.col(0).sum() - 1.0) < 1e-12);

  Rng rng(3);
  Mat wide(5, 4);
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 5; ++r) wide(r, c) = rng.normal();
  auto relaxed = gumbel_softmax_sample(wide, 0.7, rng);
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(relaxed.col(c).sum() - 1.0) < 1e-12);
    for (int r = 0; r < 5; ++r) CHECK(relaxed(r, c) >= 0.0);
  }

  CHECK_THROWS_AS(gumbel_softmax_with_noise(logits, 0.0, zero), std::invalid_argument);
  CHECK_THROWS_AS(gumbel_softmax_with_noise(logits, -1.0, zero), std::invalid_argument);
  Graph g;
  auto lv = g.constant(logits);
  CHECK_THROWS_AS(gumbel_softmax_noise(g, lv, 0.0, zero), std::invalid_argument);
}

TEST_CASE("relaxed sampling: argmax frequencies match the softmax distribution") {
  Mat logits(4, 1);
  logits << 1.0, 0.3, -0.5, 0.0;
  Eigen::VectorXd e = (logits.col(0).array() - logits.col(0).maxCoeff()).exp();
  Eigen::VectorXd p = e / e.sum();

  Rng rng(17);
  const int n = 100000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) {
    auto y = gumbel_softmax_sample(logits, 1.0, rng);
    int arg = 0;
    y.col(0).maxCoeff(&arg);
    ++counts[arg];
  }
  double tv = 0.0;
  for (int k = 0; k < 4; ++k) {
    tv += std::abs(double(counts[k]) / n - p(k));
  }
  tv *= 0.5;
  CHECK(tv < 0.01);
}

TEST_CASE("relaxed sampling is differentiable with exact finite-difference gradients") {
  Rng rng(11);
  nn::Param logits(6, 2, "logits");
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < 6; ++r) logits.value(r, c) = rng.normal();
  Mat noise(6, 2);
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < 6; ++r) noise(r, c) = rng.gumbel();

  Mat pick = Mat::Zero(1, 6);
  pick(0, 2) = 1.0;
  pick(0, 4) = -0.5;
  testutil::fd_check({&logits}, [&] {
    Graph g;
    auto y = gumbel_softmax_noise(g, g.param(logits), 0.8, noise);
    auto loss = g.sum_all(g.matmul(g.constant(pick), y));
    g.backward(loss);
    return g.val(loss)(0, 0);
  });
}

TEST_CASE("next-token logits are finite, deterministic, and respond to z") {
  auto cfg = small_cfg();
  auto vocab = Vocabulary::build(tiny_corpus(), 500);
  Mat z0 = Mat::Zero(cfg.z_dim, 1);
  Mat z1 = Mat::Ones(cfg.z_dim, 1);

  double mean_gap = 0.0;
  const int inits = 20;
  for (int s = 0; s < inits; ++s) {
    Generator G(cfg, vocab, 100 + s);
    auto prefix = vocab.encode("what a");
    Mat a = G.next_token_dist("the big game tonight", prefix, z0);
    Mat b = G.next_token_dist("the big game tonight", prefix, z0);
    Mat c = G.next_token_dist("the big game tonight", prefix, z1);
    CHECK(a.allFinite());
    CHECK(a.rows() == vocab.size());
    CHECK(a.cols() == 1);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // same inputs, same logits
    double gap = (a - c).cwiseAbs().maxCoeff();
    CHECK(gap > 0.0);
    mean_gap += gap / inits;

    // Softmax over the logits is a distribution.
    Eigen::VectorXd e = (a.col(0).array() - a.col(0).maxCoeff()).exp();
    Eigen::VectorXd p = e / e.sum();
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() > 0.0);
  }
  CHECK(mean_gap > 1e-4);
}

TEST_CASE("sequence probability factorizes into stepwise next-token probabilities") {
  auto cfg = small_cfg();
  auto vocab = Vocabulary::build(tiny_corpus(), 500);
  Generator G(cfg, vocab, 21);
  std::string content = "the band released a new album this week";
  auto target = vocab.encode_seq("love the new album", 10);
  REQUIRE(target.size() >= 4);
  Mat z(cfg.z_dim, 1);
  Rng zr(5);
  for (int i = 0; i < cfg.z_dim; ++i) z(i, 0) = zr.normal();

  Graph g;
  auto nll = G.sequence_nll(g, content, target, z, /*frozen=*/true);
  double joint_logp = -g.val(nll)(0, 0) * double(target.size() - 1);

  double stepwise = 0.0;
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    std::vector<int> prefix(target.begin() + 1, target.begin() + 1 + t);
    Mat logits = G.next_token_dist(content, prefix, z);
    double m = logits.col(0).maxCoeff();
    double lse = std::log((logits.col(0).array() - m).exp().sum()) + m;
    stepwise += logits(target[t + 1], 0) - lse;
  }
  CHECK(std::abs(joint_logp - stepwise) < 1e-9);
}

TEST_CASE("teacher-forced loss gradients match finite differences") {
  Dataset d = tiny_corpus();
  auto vocab = Vocabulary::build(d, 500);
  GeneratorConfig cfg;
  cfg.embed_dim = 5;
  cfg.hidden = 6;
  cfg.z_dim = 3;
  cfg.cond_dim = 4;
  cfg.max_len = 6;
  Generator G(cfg, vocab, 33);
  auto target = vocab.encode_seq("what a great game", 6);
  Mat z(cfg.z_dim, 1);
  z << 0.3, -0.8, 0.5;

  testutil::fd_check(G.params(), [&] {
    Graph g;
    auto loss = G.sequence_nll(g, "the big game tonight was close", target, z);
    g.backward(loss);
    return g.val(loss)(0, 0);
  }, 1e-5, 1e-5);
}

TEST_CASE("untrained generator scores near the uniform baseline") {
  auto vocab = Vocabulary::build(tiny_corpus(), 500);
  auto cfg = small_cfg();
  Generator G(cfg, vocab, 7);
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"the big game tonight", "what a great game"},
      {"new album out this week", "love the new album"}};

  double lnV = std::log(double(vocab.size()));
  // Fresh initialization: logits are small, so the NLL sits near ln |V|.
  CHECK(nll_of(G, pairs) == doctest::Approx(lnV).epsilon(0.15));

  // Exactly uniform output head: NLL equals ln |V| to machine precision.
  auto ps = G.params();
  ps[ps.size() - 2]->value.setZero();  // output projection W
  ps[ps.size() - 1]->value.setZero();  // output projection b
  CHECK(nll_of(G, pairs) == doctest::Approx(lnV).epsilon(1e-12));
}

TEST_CASE("pretraining lowers held-out NLL on the planted corpus") {
  auto& w = synth_world();
  REQUIRE(w.curve.train_nll.size() == 6);
  REQUIRE(w.curve.held_nll.size() == 6);
  double lnV = std::log(double(w.vocab.size()));
  CHECK(w.nll_before == doctest::Approx(lnV).epsilon(0.15));
  CHECK(w.curve.train_nll.back() < w.curve.train_nll.front());
  double after = nll_of(w.G, w.held_pairs);
  CHECK(after <= 0.8 * w.nll_before);  // at least a 20% drop
  CHECK(after == doctest::Approx(w.curve.held_nll.back()).epsilon(1e-9));
}

TEST_CASE("a memorizing generator drives NLL toward zero and replays the comment") {
  Dataset d;
  Article a;
  a.id = "m0";
  a.title = "city opens new park";
  a.content = "the city opened a new park near the river today";
  a.label = 0;
  a.comments = {"lovely spot for a walk"};
  d.articles.push_back(a);
  auto vocab = Vocabulary::build(d, 500);

  GeneratorConfig cfg;
  cfg.embed_dim = 12;
  cfg.hidden = 16;
  cfg.z_dim = 3;
  cfg.cond_dim = 8;
  cfg.max_len = 10;
  Generator G(cfg, vocab, 13);
  auto curve = pretrain_mle(G, d, /*epochs=*/300, /*lr=*/1e-2, /*seed=*/3, /*batch_size=*/4);
  CHECK(curve.train_nll.back() < 0.05);
  CHECK(curve.held_nll.empty());  // nothing to hold out of one article

  std::vector<std::pair<std::string, std::string>> pair = {{a.content, a.comments[0]}};
  CHECK(nll_of(G, pair) < 0.05);

  Mat z = Mat::Zero(cfg.z_dim, 1);
  auto ids = G.generate(a.content, z, /*tau=*/0.2, /*seed=*/88);
  CHECK(vocab.decode(ids) == "lovely spot for a walk");
}

TEST_CASE("a collapsed generator scores held-out pairs worse than a pretrained one") {
  auto& w = synth_world();
  Dataset collapsed_corpus;
  for (std::size_t i = 0; i < 10; ++i) {
    Article a = w.corpus.articles[i];
    a.comments = {"hoax hoax hoax hoax hoax"};
    collapsed_corpus.articles.push_back(a);
  }
  Generator collapsed(w.G.config(), w.vocab, 55);
  pretrain_mle(collapsed, collapsed_corpus, /*epochs=*/150, /*lr=*/1e-2, /*seed=*/4);

  std::vector<std::pair<std::string, std::string>> probe = {
      {collapsed_corpus.articles[0].content, "hoax hoax hoax hoax hoax"}};
  CHECK(nll_of(collapsed, probe) < 0.2);  // it really collapsed
  CHECK(nll_of(collapsed, w.held_pairs) > nll_of(w.G, w.held_pairs));
}

TEST_CASE("hard generation terminates, avoids reserved tokens, and repeats per seed") {
  auto& w = synth_world();
  const auto& content = w.corpus.articles[0].content;
  Rng zr(2);
  Mat z = w.G.sample_z(zr);

  auto ids = w.G.generate(content, z, 1.0, 42);
  auto again = w.G.generate(content, z, 1.0, 42);
  CHECK(ids == again);
  CHECK(int(ids.size()) <= w.G.config().max_len);
  for (int id : ids) {
    CHECK(id >= Vocabulary::kReserved);
  }

  bool any_diff = false;
  for (int s = 0; s < 5; ++s) {
    if (w.G.generate(content, z, 1.0, 1000 + s) != ids) any_diff = true;
  }
  CHECK(any_diff);  // sampling, not a constant function
}

TEST_CASE("relaxed rollout yields simplex columns and a consistent length") {
  auto& w = synth_world();
  const auto& content = w.corpus.articles[1].content;
  Rng zr(6);
  Mat z = w.G.sample_z(zr);
  Rng noise(9);

  Graph g;
  auto s = w.G.generate_relaxed(g, content, z, /*tau=*/0.8, noise);
  const Mat& y = g.val(s.one_hots);
  int T = w.G.config().max_len;
  CHECK(y.cols() == T);
  CHECK(y.rows() == w.vocab.size());
  CHECK(int(s.argmax_ids.size()) == T);
  for (int c = 0; c < T; ++c) {
    CHECK(std::abs(y.col(c).sum() - 1.0) < 1e-9);
    CHECK(y.col(c).minCoeff() >= 0.0);
    CHECK(s.argmax_ids[c] != Vocabulary::kPad);
    CHECK(s.argmax_ids[c] != Vocabulary::kBos);
    CHECK(s.argmax_ids[c] != Vocabulary::kUnk);
  }
  CHECK(s.len >= 0);
  CHECK(s.len <= T);
  auto first_eos = std::find(s.argmax_ids.begin(), s.argmax_ids.end(), Vocabulary::kEos);
  int expect_len = first_eos == s.argmax_ids.end() ? T : int(first_eos - s.argmax_ids.begin());
  CHECK(s.len == expect_len);

  // Gradients reach the generator through the relaxed sample.
  auto loss = g.mean_all(s.one_hots);
  for (auto* p : w.G.params()) p->zero_grad();
  g.backward(loss);
  double gnorm = 0.0;
  for (auto* p : w.G.params()) gnorm += p->grad.squaredNorm();
  CHECK(gnorm > 0.0);
  for (auto* p : w.G.params()) p->zero_grad();

  // Frozen wiring computes the identical forward values.
  Rng noise2(9);
  Graph g2;
  auto s2 = w.G.generate_relaxed(g2, content, z, 0.8, noise2, /*frozen=*/true);
  CHECK((g2.val(s2.one_hots) - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("candidate ranking returns the most article-coherent samples") {
  auto& w = synth_world();
  std::vector<std::string> contents;
  for (const auto& a : w.corpus.articles) contents.push_back(a.content);
  auto topics = fit_topic_set(contents, {4}, 19);

  const auto& content = w.corpus.articles[2].content;
  GenerationConfig gen;
  gen.n_samples = 6;
  gen.M = 2;
  gen.seed = 31;
  CHECK(gen.tau == 1.0);

  auto best = w.G.generate_best(content, gen, topics);
  auto best2 = w.G.generate_best(content, gen, topics);
  REQUIRE(best.size() == 2);
  CHECK(best == best2);

  // Rebuild the candidate pool the same way and verify the subset and
  // ranking properties.
  Rng root(gen.seed);
  std::vector<std::string> pool;
  std::vector<double> scores;
  for (int i = 0; i < gen.n_samples; ++i) {
    Rng zs = root.derive(std::uint64_t(i) * 2 + 1);
    Mat z = w.G.sample_z(zs);
    auto ids = w.G.generate(content, z, gen.tau, mix_seed(gen.seed, i * 2 + 2));
    pool.push_back(w.vocab.decode(ids));
    scores.push_back(pool.back().empty() ? -1.0 : coherency_pair(topics, content, pool.back()));
  }
  double top_score = *std::max_element(scores.begin(), scores.end());
  for (const auto& b : best) {
    CHECK(std::count(pool.begin(), pool.end(), b) > 0);
  }
  double got = best[0].empty() ? -1.0 : coherency_pair(topics, content, best[0]);
  CHECK(got == doctest::Approx(top_score).epsilon(1e-12));

  GenerationConfig bad = gen;
  bad.M = 7;  // more than n_samples
  CHECK_THROWS_AS(w.G.generate_best(content, bad, topics), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip and refuse a mismatched vocabulary") {
  auto vocab = Vocabulary::build(tiny_corpus(), 500);
  auto cfg = small_cfg();
  Generator G(cfg, vocab, 61);
  Mat z = Mat::Zero(cfg.z_dim, 1);
  Mat before = G.next_token_dist("the big game tonight", vocab.encode("what"), z);

  std::string path = "/tmp/malcom_test_generator.json";
  save_generator(path, G);
  Generator loaded = load_generator(path, vocab);
  Mat after = loaded.next_token_dist("the big game tonight", vocab.encode("what"), z);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.config().hidden == cfg.hidden);

  SynthConfig sc;
  sc.articles_per_class = 5;
  sc.comments_per_article = 2;
  auto other_vocab = Vocabulary::build(synth_corpus(sc, 1), 4000);
  CHECK_THROWS_AS(load_generator(path, other_vocab), SchemaError);

  auto j = load_json_file(path);
  j["version"] = 99;
  std::string bad = "/tmp/malcom_test_generator_bad.json";
  save_json_file(bad, j);
  CHECK_THROWS_AS(load_generator(bad, vocab), SchemaError);
}

TEST_CASE("a divergent pretraining run raises instead of returning garbage") {
  Dataset d = tiny_corpus();
  auto vocab = Vocabulary::build(d, 500);
  GeneratorConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden = 8;
  cfg.z_dim = 2;
  cfg.cond_dim = 4;
  cfg.max_len = 8;
  Generator G(cfg, vocab, 3);
  CHECK_THROWS_AS(
      pretrain_mle(G, d, /*epochs=*/3, /*lr=*/1e300, /*seed=*/1, /*batch_size=*/1),
      NanError);
}

TEST_CASE("degenerate pretraining inputs are rejected") {
  Dataset empty;
  auto vocab = Vocabulary::build(tiny_corpus(), 500);
  Generator G(small_cfg(), vocab, 1);
  CHECK_THROWS_AS(pretrain_mle(G, empty, 1, 1e-3, 0), std::invalid_argument);
  CHECK_THROWS_AS(pretrain_mle(G, tiny_corpus(), 0, 1e-3, 0), std::invalid_argument);
  CHECK_THROWS_AS(nll_of(G, {}), std::invalid_argument);
}

}  // TEST_SUITE
