#include "malcom/style.hpp"

#include "malcom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace malcom {

using nn::Graph;
using nn::Mat;

Json DiscriminatorConfig::to_json() const {
  return Json{{"embed_dim", embed_dim},
              {"filters", filters},
              {"widths", widths},
              {"max_tokens", max_tokens}};
}

DiscriminatorConfig DiscriminatorConfig::from_json(const Json& j) {
  DiscriminatorConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.filters = j.at("filters").get<int>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.max_tokens = j.at("max_tokens").get<int>();
  if (c.embed_dim < 1 || c.filters < 1 || c.widths.empty() || c.max_tokens < 1) {
    throw SchemaError("discriminator config: dimensions out of range");
  }
  return c;
}

Discriminator::Discriminator(DiscriminatorConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  Rng root(seed);
  Rng r1 = root.derive(1);
  emb_ = nn::Embedding(cfg_.embed_dim, vocab_.size(), "disc.emb", r1);
  Rng r2 = root.derive(2);
  bank_ = nn::ConvBank(cfg_.embed_dim, cfg_.filters, cfg_.widths, "disc.bank", r2);
  Rng r3 = root.derive(3);
  head_ = nn::Dense(bank_.out_dim(), 1, "disc.head", r3);
}

std::vector<nn::Param*> Discriminator::params() {
  std::vector<nn::Param*> ps;
  for (auto* p : emb_.params()) ps.push_back(p);
  for (auto* p : bank_.params()) ps.push_back(p);
  for (auto* p : head_.params()) ps.push_back(p);
  return ps;
}

Graph::Var Discriminator::score(Graph& g, const CommentInput& c, bool frozen) {
  const int L = std::min(c.len, cfg_.max_tokens);
  Graph::Var seq;
  int eff = 1;
  if (L <= 0) {
    seq = g.constant(Mat::Zero(cfg_.embed_dim, 1));
  } else if (c.is_relaxed()) {
    if (g.val(c.relaxed).rows() != vocab_.size()) {
      throw std::invalid_argument("discriminator: relaxed input rows != vocabulary size");
    }
    const int take = std::min(L, static_cast<int>(g.val(c.relaxed).cols()));
    std::vector<int> idx(static_cast<std::size_t>(take));
    std::iota(idx.begin(), idx.end(), 0);
    seq = emb_.lookup_soft(g, g.select_cols(c.relaxed, idx), frozen);
    eff = take;
  } else {
    const auto take = std::min(static_cast<std::size_t>(L), c.ids.size());
    std::vector<int> ids(c.ids.begin(), c.ids.begin() + static_cast<long>(take));
    if (ids.empty()) {
      seq = g.constant(Mat::Zero(cfg_.embed_dim, 1));
    } else {
      seq = emb_.lookup(g, ids, frozen);
      eff = static_cast<int>(ids.size());
    }
  }
  auto feat = bank_(g, seq, eff, frozen);
  return head_(g, feat, frozen);
}

Graph::Var Discriminator::score_batch(Graph& g, const std::vector<CommentInput>& cs, bool frozen) {
  if (cs.empty()) {
    throw std::invalid_argument("discriminator: empty batch");
  }
  std::vector<Graph::Var> cols;
  cols.reserve(cs.size());
  for (const auto& c : cs) cols.push_back(score(g, c, frozen));
  return cols.size() == 1 ? cols[0] : g.concat_cols(cols);
}

Json Discriminator::to_json() const {
  Json j = artifact_envelope("discriminator", 1);
  j["config"] = cfg_.to_json();
  j["vocab_hash"] = vocab_.hash();
  Json ps = Json::array();
  for (auto* p : const_cast<Discriminator*>(this)->params()) ps.push_back(param_to_json(*p));
  j["params"] = ps;
  return j;
}

Discriminator Discriminator::from_json(const Json& j, const Vocabulary& vocab) {
  check_envelope(j, "discriminator", 1);
  if (j.at("vocab_hash").get<std::uint64_t>() != vocab.hash()) {
    throw SchemaError("discriminator checkpoint: vocabulary hash mismatch");
  }
  Discriminator D(DiscriminatorConfig::from_json(j.at("config")), vocab, /*seed=*/0);
  auto ps = D.params();
  const Json& arr = j.at("params");
  if (arr.size() != ps.size()) {
    throw SchemaError("discriminator checkpoint: wrong parameter count");
  }
  for (std::size_t i = 0; i < ps.size(); ++i) param_from_json(*ps[i], arr[i]);
  return D;
}

RsganLosses rsgan_losses(Graph& g, Graph::Var d_real, Graph::Var d_fake, bool printed_form) {
  auto diff = g.sub(d_real, d_fake);
  auto real_above = g.mean_all(g.softplus(g.neg(diff)));  // -mean log sigmoid(real - fake)
  auto fake_above = g.mean_all(g.softplus(diff));         // -mean log sigmoid(fake - real)
  RsganLosses out;
  if (printed_form) {
    out.loss_D = fake_above;
    out.loss_G = real_above;
  } else {
    out.loss_D = real_above;
    out.loss_G = fake_above;
  }
  return out;
}

double gaussian_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double sigma) {
  if (sigma <= 0.0) {
    throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  }
  if (a.size() != b.size()) {
    throw std::invalid_argument("gaussian_kernel: dimension mismatch");
  }
  return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

namespace {

Mat pack_cols(const std::vector<Eigen::VectorXd>& xs) {
  Mat m(xs.front().size(), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != m.rows()) {
      throw std::invalid_argument("mmd: inconsistent embedding dims");
    }
    m.col(static_cast<Eigen::Index>(i)) = xs[i];
  }
  return m;
}

Mat gram(const Mat& A, const Mat& B, double sigma) {
  Eigen::VectorXd an = A.colwise().squaredNorm();
  Eigen::VectorXd bn = B.colwise().squaredNorm();
  Mat d2 = (-2.0 * (A.transpose() * B));
  d2.colwise() += an;
  d2.rowwise() += bn.transpose();
  return ((-d2 / (2.0 * sigma * sigma)).array().exp()).matrix();
}

}  // namespace

double mmd(const std::vector<Eigen::VectorXd>& X, const std::vector<Eigen::VectorXd>& Y,
           double sigma) {
  if (X.empty() || Y.empty()) {
    throw std::invalid_argument("mmd: both sets must be nonempty");
  }
  if (sigma <= 0.0) {
    throw std::invalid_argument("mmd: sigma must be positive");
  }
  Mat Xm = pack_cols(X);
  Mat Ym = pack_cols(Y);
  if (Xm.rows() != Ym.rows()) {
    throw std::invalid_argument("mmd: dimension mismatch between sets");
  }
  const double xx = gram(Xm, Xm, sigma).mean();
  const double yy = gram(Ym, Ym, sigma).mean();
  const double xy = gram(Xm, Ym, sigma).mean();
  return std::sqrt(std::max(0.0, xx + yy - 2.0 * xy));
}

Graph::Var mmd_loss(Graph& g, Graph::Var X, Graph::Var Y, double sigma) {
  if (sigma <= 0.0) {
    throw std::invalid_argument("mmd_loss: sigma must be positive");
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto pair_mean = [&](Graph::Var A, Graph::Var B) {
    auto an = g.transpose(g.cols_sum(g.square(A)));  // n x 1
    auto bn = g.cols_sum(g.square(B));               // 1 x m
    auto d2 = g.add(g.add(g.scale(g.matmul(g.transpose(A), B), -2.0), an), bn);
    return g.mean_all(g.exp(g.scale(d2, -inv)));
  };
  auto m2 = g.add(g.add(pair_mean(X, X), pair_mean(Y, Y)), g.scale(pair_mean(X, Y), -2.0));
  return g.sqrt_clamped(m2);
}

double median_bandwidth(const std::vector<Eigen::VectorXd>& points) {
  std::vector<double> d;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      d.push_back((points[i] - points[j]).norm());
    }
  }
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const double med = n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return med > 0.0 ? med : 1.0;
}

double discriminator_step(Discriminator& D, const std::vector<CommentInput>& reals,
                          const std::vector<CommentInput>& fakes, nn::Adam& opt_D, Graph& g,
                          bool printed_form) {
  if (reals.size() != fakes.size() || reals.empty()) {
    throw std::invalid_argument("discriminator_step: need equal nonempty real/fake batches");
  }
  auto d_real = D.score_batch(g, reals, /*frozen=*/false);
  auto d_fake = D.score_batch(g, fakes, /*frozen=*/false);
  auto losses = rsgan_losses(g, d_real, d_fake, printed_form);
  const double lv = g.val(losses.loss_D)(0, 0);
  if (!std::isfinite(lv)) {
    throw NanError("discriminator_step: non-finite loss");
  }
  opt_D.zero_grad();
  g.backward(losses.loss_D);
  auto ps = D.params();
  nn::clip_global_norm(ps, 5.0);
  opt_D.step();
  return lv;
}

namespace {

CommentInput relaxed_input(const Generator::RelaxedSample& s) {
  CommentInput c;
  c.relaxed = s.one_hots;
  c.len = s.len;
  return c;
}

}  // namespace

StyleStepResult style_step(Generator& G, Discriminator& D, const std::vector<StyleExample>& batch,
                           const StyleOpts& opts, nn::Adam& opt_G, nn::Adam& opt_D, Rng& rng) {
  if (batch.empty()) {
    throw std::invalid_argument("style_step: empty batch");
  }
  if (opts.tau <= 0.0) {
    throw std::invalid_argument("style_step: tau must be positive");
  }
  const auto& vocab = G.vocab();
  const int T = G.config().max_len;
  StyleStepResult out;

  std::vector<CommentInput> reals;
  reals.reserve(batch.size());
  for (const auto& ex : batch) {
    reals.push_back(hard_comment(vocab, ex.real_comment, D.config().max_tokens));
  }

  {  // Discriminator update; the generator stays frozen here.
    Graph g;
    std::vector<CommentInput> fakes;
    fakes.reserve(batch.size());
    for (const auto& ex : batch) {
      Mat z = G.sample_z(rng);
      fakes.push_back(relaxed_input(G.generate_relaxed(g, ex.content, z, opts.tau, rng,
                                                       /*frozen=*/true)));
    }
    out.loss_D = discriminator_step(D, reals, fakes, opt_D, g, opts.printed_rsgan);
  }

  {  // Generator adversarial update against the frozen discriminator.
    const bool live = opts.weight_gan != 0.0;
    Graph g;
    std::vector<CommentInput> fakes;
    fakes.reserve(batch.size());
    for (const auto& ex : batch) {
      Mat z = G.sample_z(rng);
      fakes.push_back(relaxed_input(G.generate_relaxed(g, ex.content, z, opts.tau, rng,
                                                       /*frozen=*/!live)));
    }
    auto d_real = D.score_batch(g, reals, /*frozen=*/true);
    auto d_fake = D.score_batch(g, fakes, /*frozen=*/true);
    auto losses = rsgan_losses(g, d_real, d_fake, opts.printed_rsgan);
    out.loss_G_D = g.val(losses.loss_G)(0, 0);
    if (!std::isfinite(out.loss_G_D)) {
      throw NanError("style_step: non-finite adversarial generator loss");
    }
    if (live) {
      auto weighted = g.scale(losses.loss_G, opts.weight_gan);
      opt_G.zero_grad();
      g.backward(weighted);
      auto ps = G.params();
      nn::clip_global_norm(ps, 5.0);
      opt_G.step();
    }
  }

  {  // Generator coherency update: titles vs sampled comments in the shared
     // token-embedding space.
    const bool live = opts.weight_mmd != 0.0;
    Graph g;
    auto table = live ? g.param(G.embedding_table()) : g.constant(G.embedding_table().value);
    const int E = G.config().embed_dim;
    std::vector<Graph::Var> title_cols, fake_cols;
    for (const auto& ex : batch) {
      std::vector<int> tids = vocab.encode(ex.title);
      if (tids.empty()) {
        title_cols.push_back(g.constant(Mat::Zero(E, 1)));
      } else {
        auto seq = g.select_cols(table, tids);
        title_cols.push_back(g.scale(g.rows_sum(seq), 1.0 / static_cast<double>(tids.size())));
      }
      Mat z = G.sample_z(rng);
      auto s = G.generate_relaxed(g, ex.content, z, opts.tau, rng, /*frozen=*/!live);
      if (s.len <= 0) {
        fake_cols.push_back(g.constant(Mat::Zero(E, 1)));
      } else {
        std::vector<int> idx(static_cast<std::size_t>(std::min(s.len, T)));
        std::iota(idx.begin(), idx.end(), 0);
        auto soft = g.matmul(table, g.select_cols(s.one_hots, idx));
        fake_cols.push_back(
            g.scale(g.rows_sum(soft), 1.0 / static_cast<double>(idx.size())));
      }
    }
    auto X = title_cols.size() == 1 ? title_cols[0] : g.concat_cols(title_cols);
    auto Y = fake_cols.size() == 1 ? fake_cols[0] : g.concat_cols(fake_cols);

    double sigma = opts.sigma;
    if (sigma <= 0.0) {
      std::vector<Eigen::VectorXd> pooled;
      for (int c = 0; c < g.val(X).cols(); ++c) pooled.push_back(g.val(X).col(c));
      for (int c = 0; c < g.val(Y).cols(); ++c) pooled.push_back(g.val(Y).col(c));
      sigma = median_bandwidth(pooled);
    }
    auto loss = mmd_loss(g, X, Y, sigma);
    out.loss_G_H = g.val(loss)(0, 0);
    if (!std::isfinite(out.loss_G_H)) {
      throw NanError("style_step: non-finite coherency loss");
    }
    if (live) {
      auto weighted = g.scale(loss, opts.weight_mmd);
      opt_G.zero_grad();
      g.backward(weighted);
      auto ps = G.params();
      nn::clip_global_norm(ps, 5.0);
      opt_G.step();
    }
  }

  return out;
}

void save_discriminator(const std::string& path, Discriminator& D) {
  save_json_file(path, D.to_json());
}

Discriminator load_discriminator(const std::string& path, const Vocabulary& vocab) {
  return Discriminator::from_json(load_json_file(path), vocab);
}

}  // namespace malcom
