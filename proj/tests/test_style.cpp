#include "malcom/style.hpp"

#include "malcom/errors.hpp"
#include "malcom/synth.hpp"

#include "doctest.h"
#include "fd_check.hpp"

#include <cmath>
#include <numeric>

using namespace malcom;
using nn::Graph;
using nn::Mat;

namespace {

Dataset style_corpus() {
  SynthConfig sc;
  sc.articles_per_class = 12;
  sc.comments_per_article = 4;
  return synth_corpus(sc, 77);
}

// One-hot relaxed column block for a token id sequence, as a graph constant.
Graph::Var hard_as_relaxed(Graph& g, int vocab_size, const std::vector<int>& ids) {
  return g.constant(nn::one_hot(vocab_size, ids));
}

}  // namespace

TEST_SUITE("style") {

TEST_CASE("relativistic losses match hand-computed oracles") {
  auto run = [](std::vector<double> real, std::vector<double> fake, bool printed) {
    Graph g;
    Mat r(1, int(real.size())), f(1, int(fake.size()));
    for (int i = 0; i < int(real.size()); ++i) r(0, i) = real[size_t(i)];
    for (int i = 0; i < int(fake.size()); ++i) f(0, i) = fake[size_t(i)];
    auto L = rsgan_losses(g, g.constant(r), g.constant(f), printed);
    return std::pair<double, double>{g.val(L.loss_G)(0, 0), g.val(L.loss_D)(0, 0)};
  };

  auto [g0, d0] = run({0.7, -1.2}, {0.7, -1.2}, false);
  CHECK(g0 == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(d0 == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto [g1, d1] = run({1.0}, {0.0}, false);
  CHECK(d1 == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));  // 0.3133
  CHECK(d1 == doctest::Approx(0.31326168751822286).epsilon(1e-9));
  CHECK(g1 == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));   // 1.3133

  // A huge real-minus-fake margin sends loss_D to 0 and loss_G to the margin.
  auto [g2, d2] = run({50.0}, {0.0}, false);
  CHECK(d2 < 1e-20);
  CHECK(g2 == doctest::Approx(50.0).epsilon(1e-9));

  // The transposed form swaps the two directions.
  auto [g3, d3] = run({1.0}, {0.0}, true);
  CHECK(g3 == doctest::Approx(d1).epsilon(1e-12));
  CHECK(d3 == doctest::Approx(g1).epsilon(1e-12));

  // Extreme scores stay finite (stabilized log-sigmoid).
  auto [g4, d4] = run({1000.0}, {-1000.0}, false);
  CHECK(std::isfinite(g4));
  CHECK(std::isfinite(d4));
  CHECK(g4 == doctest::Approx(2000.0).epsilon(1e-9));

  // Batch mean over three pairs.
  auto [g5, d5] = run({1.0, 0.0, -2.0}, {0.0, 0.0, 1.0}, false);
  double want_d = (std::log(1 + std::exp(-1.0)) + std::log(2.0) + std::log(1 + std::exp(3.0))) / 3;
  double want_g = (std::log(1 + std::exp(1.0)) + std::log(2.0) + std::log(1 + std::exp(-3.0))) / 3;
  CHECK(d5 == doctest::Approx(want_d).epsilon(1e-12));
  CHECK(g5 == doctest::Approx(want_g).epsilon(1e-12));
}

TEST_CASE("relativistic loss gradients match finite differences") {
  Rng rng(4);
  nn::Param r(1, 4, "d_real");
  nn::Param f(1, 4, "d_fake");
  r.value = testutil::filled(1, 4, rng, -2.0, 2.0);
  f.value = testutil::filled(1, 4, rng, -2.0, 2.0);

  for (bool printed : {false, true}) {
    for (bool gen_side : {false, true}) {
      testutil::fd_check({&r, &f}, [&] {
        Graph g;
        auto L = rsgan_losses(g, g.param(r), g.param(f), printed);
        auto loss = gen_side ? L.loss_G : L.loss_D;
        g.backward(loss);
        return g.val(loss)(0, 0);
      }, 1e-5, 1e-5);
    }
  }
}

TEST_CASE("gaussian kernel closed forms") {
  Eigen::VectorXd a(3), b(3);
  a << 0.3, -0.7, 1.1;
  b = a;
  CHECK(gaussian_kernel(a, b, 0.9) == doctest::Approx(1.0).epsilon(1e-15));

  Eigen::VectorXd c = Eigen::VectorXd::Zero(2), d(2);
  d << 2.0, 0.0;  // squared distance 4 = 2 * sigma^2 with sigma = sqrt(2)
  CHECK(gaussian_kernel(c, d, std::sqrt(2.0)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  Eigen::VectorXd e(2), ff(2);
  e << 0.4, -1.3;
  ff << -0.2, 0.8;
  CHECK(gaussian_kernel(e, ff, 0.7) == doctest::Approx(gaussian_kernel(ff, e, 0.7)).epsilon(1e-15));
  CHECK(gaussian_kernel(e, ff, 0.7) > 0.0);
  CHECK(gaussian_kernel(e, ff, 0.7) <= 1.0);

  CHECK_THROWS_AS(gaussian_kernel(a, b, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(a, b, -2.0), std::invalid_argument);
  Eigen::VectorXd wrong(4);
  wrong.setZero();
  CHECK_THROWS_AS(gaussian_kernel(a, wrong, 1.0), std::invalid_argument);
}

TEST_CASE("kernel two-sample distance matches a naive double-loop oracle") {
  Rng rng(9);
  auto draw_set = [&](int n, int dim, double shift) {
    std::vector<Eigen::VectorXd> xs;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd v(dim);
      for (int k = 0; k < dim; ++k) v(k) = rng.normal() + shift;
      xs.push_back(v);
    }
    return xs;
  };
  auto naive = [](const std::vector<Eigen::VectorXd>& X, const std::vector<Eigen::VectorXd>& Y,
                  double sigma) {
    double xx = 0, yy = 0, xy = 0;
    for (const auto& a : X)
      for (const auto& b : X) xx += gaussian_kernel(a, b, sigma);
    for (const auto& a : Y)
      for (const auto& b : Y) yy += gaussian_kernel(a, b, sigma);
    for (const auto& a : X)
      for (const auto& b : Y) xy += gaussian_kernel(a, b, sigma);
    xx /= double(X.size()) * double(X.size());
    yy /= double(Y.size()) * double(Y.size());
    xy /= double(X.size()) * double(Y.size());
    return std::sqrt(std::max(0.0, xx + yy - 2 * xy));
  };

  auto X = draw_set(50, 8, 0.0);
  auto Y = draw_set(37, 8, 0.6);
  for (double sigma : {0.5, 1.0, 2.3}) {
    double got = mmd(X, Y, sigma);
    CHECK(got == doctest::Approx(naive(X, Y, sigma)).epsilon(1e-9));
    CHECK(got == doctest::Approx(mmd(Y, X, sigma)).epsilon(1e-12));  // symmetry
    CHECK(got > 0.0);  // distinct point sets separate
  }

  CHECK(mmd(X, X, 1.0) == doctest::Approx(0.0).epsilon(1e-9));

  // Singleton closed form: MMD^2 = 2 - 2 k(a, b).
  Eigen::VectorXd a(3), b(3);
  a << 0.2, -0.4, 1.0;
  b << -0.9, 0.3, 0.5;
  double sigma = 1.3;
  double want = std::sqrt(2.0 - 2.0 * gaussian_kernel(a, b, sigma));
  CHECK(mmd({a}, {b}, sigma) == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(mmd({}, {a}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mmd({a}, {b}, 0.0), std::invalid_argument);
}

TEST_CASE("median bandwidth heuristic") {
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(1), p1(1), p2(1);
  p1 << 1.0;
  p2 << 4.0;
  // Pairwise distances {1, 4, 3} -> median 3.
  CHECK(median_bandwidth({p0, p1, p2}) == doctest::Approx(3.0).epsilon(1e-12));
  // Degenerate sets fall back to 1.
  CHECK(median_bandwidth({p0, p0, p0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(median_bandwidth({p0}) == doctest::Approx(1.0).epsilon(1e-12));
  // Even count: mean of the two middle distances {1,2,3,4,5,6} -> 3.5.
  Eigen::VectorXd q0(1), q1(1), q2(1), q3(1);
  q0 << 0.0;
  q1 << 1.0;
  q2 << 3.0;
  q3 << 6.0;
  // dists: 1,3,6,2,5,3 sorted 1,2,3,3,5,6 -> (3+3)/2 = 3.
  CHECK(median_bandwidth({q0, q1, q2, q3}) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("graph-side distance agrees with the plain routine and is differentiable") {
  Rng rng(21);
  nn::Param Y(4, 3, "Y");
  Y.value = testutil::filled(4, 3, rng);
  Mat Xv = testutil::filled(4, 5, rng, -0.5, 1.5);

  std::vector<Eigen::VectorXd> Xs, Ys;
  for (int c = 0; c < 5; ++c) Xs.push_back(Xv.col(c));
  for (int c = 0; c < 3; ++c) Ys.push_back(Y.value.col(c));

  Graph g;
  auto v = mmd_loss(g, g.constant(Xv), g.constant(Y.value), 1.1);
  CHECK(g.val(v)(0, 0) == doctest::Approx(mmd(Xs, Ys, 1.1)).epsilon(1e-12));

  testutil::fd_check({&Y}, [&] {
    Graph gg;
    auto loss = mmd_loss(gg, gg.constant(Xv), gg.param(Y), 1.1);
    gg.backward(loss);
    return gg.val(loss)(0, 0);
  }, 1e-5, 1e-5);

  Graph gbad;
  CHECK_THROWS_AS(mmd_loss(gbad, gbad.constant(Xv), gbad.constant(Y.value), 0.0),
                  std::invalid_argument);
}

TEST_CASE("discriminator scores are scalar, finite, and ignore trailing padding") {
  auto d = style_corpus();
  auto vocab = Vocabulary::build(d, 4000);
  DiscriminatorConfig cfg;
  cfg.max_tokens = 12;
  Discriminator D(cfg, vocab, 15);

  Graph g;
  auto c1 = hard_comment(vocab, "the coach praised the squad", cfg.max_tokens);
  auto s1 = D.score(g, c1);
  CHECK(g.val(s1).rows() == 1);
  CHECK(g.val(s1).cols() == 1);
  CHECK(std::isfinite(g.val(s1)(0, 0)));

  // Hard input: padding ids beyond len are never read.
  CommentInput padded = c1;
  padded.ids.push_back(Vocabulary::kPad);
  padded.ids.push_back(Vocabulary::kPad);
  auto s2 = D.score(g, padded);
  CHECK(g.val(s2)(0, 0) == doctest::Approx(g.val(s1)(0, 0)).epsilon(1e-15));

  // Relaxed input: columns after len are never read.
  std::vector<int> ids = vocab.encode("the coach praised the squad");
  auto oh = hard_as_relaxed(g, vocab.size(), ids);
  CommentInput r1;
  r1.relaxed = oh;
  r1.len = int(ids.size());
  auto ids_padded = ids;
  ids_padded.push_back(Vocabulary::kPad);
  ids_padded.push_back(Vocabulary::kEos);
  CommentInput r2;
  r2.relaxed = hard_as_relaxed(g, vocab.size(), ids_padded);
  r2.len = int(ids.size());
  auto sr1 = D.score(g, r1);
  auto sr2 = D.score(g, r2);
  CHECK(g.val(sr2)(0, 0) == doctest::Approx(g.val(sr1)(0, 0)).epsilon(1e-15));

  // Hard and relaxed agree when the relaxed input is exactly one-hot.
  CHECK(g.val(sr1)(0, 0) == doctest::Approx(g.val(s1)(0, 0)).epsilon(1e-12));

  // Empty comment still yields a finite scalar.
  CommentInput empty;
  auto se = D.score(g, empty);
  CHECK(std::isfinite(g.val(se)(0, 0)));

  // Batch scoring stacks into a row.
  auto row = D.score_batch(g, {c1, padded, empty});
  CHECK(g.val(row).rows() == 1);
  CHECK(g.val(row).cols() == 3);
}

TEST_CASE("repeated discriminator updates separate a disjoint toy batch") {
  auto d = style_corpus();
  auto vocab = Vocabulary::build(d, 4000);
  DiscriminatorConfig cfg;
  cfg.max_tokens = 8;
  Discriminator D(cfg, vocab, 33);

  // Real comments use the credibility pool, fakes the sensational pool —
  // disjoint token distributions.
  std::vector<std::string> real_texts = {
      "official confirmed verified statement", "documented sourced accurate evidence",
      "reported announced factual credible"};
  std::vector<std::string> fake_texts = {"hoax shocking exposed secret",
                                         "banned miracle conspiracy scandal",
                                         "rumored clickbait fabricated outrage"};
  std::vector<CommentInput> reals;
  for (const auto& t : real_texts) reals.push_back(hard_comment(vocab, t, cfg.max_tokens));

  auto ps = D.params();
  nn::Adam opt_D(ps, 5e-3);
  std::vector<double> losses;
  for (int step = 0; step < 10; ++step) {
    Graph g;
    std::vector<CommentInput> fakes;
    for (const auto& t : fake_texts) {
      std::vector<int> ids = vocab.encode(t);
      CommentInput c;
      c.relaxed = hard_as_relaxed(g, vocab.size(), ids);
      c.len = int(ids.size());
      fakes.push_back(c);
    }
    losses.push_back(discriminator_step(D, reals, fakes, opt_D, g));
  }
  for (std::size_t i = 1; i < losses.size(); ++i) {
    CHECK(losses[i] < losses[i - 1]);  // strict decrease on separable data
  }
  CHECK(losses.back() < std::log(2.0));  // better than the coin-flip fixed point
}

TEST_CASE("alternating style updates stay finite and honor weight gates") {
  auto d = style_corpus();
  auto vocab = Vocabulary::build(d, 4000);

  GeneratorConfig gc;
  gc.embed_dim = 12;
  gc.hidden = 16;
  gc.z_dim = 3;
  gc.cond_dim = 8;
  gc.max_len = 8;
  Generator G(gc, vocab, 3);
  DiscriminatorConfig dc;
  dc.embed_dim = 12;
  dc.max_tokens = 8;
  Discriminator D(dc, vocab, 4);

  std::vector<StyleExample> batch;
  for (int i = 0; i < 4; ++i) {
    const auto& a = d.articles[std::size_t(i * 5)];
    batch.push_back({a.content, a.title, a.comments[0]});
  }

  auto gps = G.params();
  auto dps = D.params();
  nn::Adam opt_G(gps, 1e-3), opt_D(dps, 1e-3);
  Rng rng(8);
  StyleOpts opts;

  for (int step = 0; step < 100; ++step) {
    auto r = style_step(G, D, batch, opts, opt_G, opt_D, rng);
    CHECK(std::isfinite(r.loss_G_D));
    CHECK(std::isfinite(r.loss_D));
    CHECK(std::isfinite(r.loss_G_H));
    CHECK(r.loss_G_H >= 0.0);
  }

  // Zeroed weights: losses still reported, generator untouched; the
  // discriminator phase still trains.
  std::vector<Mat> g_before;
  for (auto* p : gps) g_before.push_back(p->value);
  std::vector<Mat> d_before;
  for (auto* p : dps) d_before.push_back(p->value);
  StyleOpts gated = opts;
  gated.weight_gan = 0.0;
  gated.weight_mmd = 0.0;
  auto r = style_step(G, D, batch, gated, opt_G, opt_D, rng);
  CHECK(std::isfinite(r.loss_G_D));
  CHECK(r.loss_G_H >= 0.0);
  for (std::size_t i = 0; i < gps.size(); ++i) {
    CHECK((gps[i]->value - g_before[i]).cwiseAbs().maxCoeff() == 0.0);
  }
  bool d_moved = false;
  for (std::size_t i = 0; i < dps.size(); ++i) {
    if ((dps[i]->value - d_before[i]).cwiseAbs().maxCoeff() > 0.0) d_moved = true;
  }
  CHECK(d_moved);

  CHECK_THROWS_AS(style_step(G, D, {}, opts, opt_G, opt_D, rng), std::invalid_argument);
  StyleOpts bad = opts;
  bad.tau = 0.0;
  CHECK_THROWS_AS(style_step(G, D, batch, bad, opt_G, opt_D, rng), std::invalid_argument);
}

TEST_CASE("a poisoned discriminator parameter raises instead of training on NaN") {
  auto d = style_corpus();
  auto vocab = Vocabulary::build(d, 4000);
  DiscriminatorConfig cfg;
  Discriminator D(cfg, vocab, 5);
  D.params()[0]->value(0, 0) = std::nan("");

  std::vector<CommentInput> reals = {hard_comment(vocab, "official statement today", 8)};
  auto ps = D.params();
  nn::Adam opt(ps, 1e-3);
  Graph g;
  std::vector<int> ids = vocab.encode("hoax shocking");
  CommentInput fake;
  fake.relaxed = hard_as_relaxed(g, vocab.size(), ids);
  fake.len = int(ids.size());
  CHECK_THROWS_AS(discriminator_step(D, reals, {fake}, opt, g), NanError);
}

TEST_CASE("discriminator checkpoints round-trip and refuse a mismatched vocabulary") {
  auto d = style_corpus();
  auto vocab = Vocabulary::build(d, 4000);
  DiscriminatorConfig cfg;
  cfg.filters = 7;
  cfg.widths = {2, 3, 4};
  Discriminator D(cfg, vocab, 91);

  std::string path = "/tmp/malcom_test_discriminator.json";
  save_discriminator(path, D);
  auto loaded = load_discriminator(path, vocab);

  Graph g;
  auto c = hard_comment(vocab, "the investor watched the market rally", cfg.max_tokens);
  auto s0 = D.score(g, c);
  auto s1 = loaded.score(g, c);
  CHECK(g.val(s1)(0, 0) == doctest::Approx(g.val(s0)(0, 0)).epsilon(1e-15));

  SynthConfig sc;
  sc.articles_per_class = 4;
  sc.comments_per_article = 2;
  auto other = Vocabulary::build(synth_corpus(sc, 123), 4000);
  CHECK_THROWS_AS(load_discriminator(path, other), SchemaError);
}

}  // TEST_SUITE
