#include "malcom/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace malcom::nn {

void xavier_init(Param& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.rows(); ++i)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = rng.uniform(-limit, limit);
}

void gaussian_init(Param& p, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < p.value.rows(); ++i)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = rng.normal(0.0, stddev);
}

Mat one_hot(int vocab_size, const std::vector<int>& ids) {
  Mat m = Mat::Zero(vocab_size, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= vocab_size) throw std::invalid_argument("one_hot: id out of range");
    m(ids[t], static_cast<Eigen::Index>(t)) = 1.0;
  }
  return m;
}

GruCell::GruCell(int in, int hidden, const std::string& name, Rng& rng)
    : Wz(hidden, in, name + ".Wz"),
      Uz(hidden, hidden, name + ".Uz"),
      bz(hidden, 1, name + ".bz"),
      Wr(hidden, in, name + ".Wr"),
      Ur(hidden, hidden, name + ".Ur"),
      br(hidden, 1, name + ".br"),
      Wh(hidden, in, name + ".Wh"),
      Uh(hidden, hidden, name + ".Uh"),
      bh(hidden, 1, name + ".bh") {
  for (Param* p : {&Wz, &Uz, &Wr, &Ur, &Wh, &Uh}) xavier_init(*p, rng);
}

Graph::Var GruCell::step(Graph& g, Graph::Var x, Graph::Var h, bool frozen) {
  auto P = [&](Param& p) { return frozen ? g.constant(p.value) : g.param(p); };
  auto z = g.sigmoid(g.add(g.add(g.matmul(P(Wz), x), g.matmul(P(Uz), h)), P(bz)));
  auto r = g.sigmoid(g.add(g.add(g.matmul(P(Wr), x), g.matmul(P(Ur), h)), P(br)));
  auto hh = g.tanh(g.add(g.add(g.matmul(P(Wh), x), g.matmul(P(Uh), g.cmul(r, h))), P(bh)));
  // h' = (1 - z) .* h + z .* hh
  auto one_minus_z = g.add_scalar(g.neg(z), 1.0);
  return g.add(g.cmul(one_minus_z, h), g.cmul(z, hh));
}

std::vector<Param*> GruCell::params() { return {&Wz, &Uz, &bz, &Wr, &Ur, &br, &Wh, &Uh, &bh}; }

ConvBank::ConvBank(int embed_dim, int filters, std::vector<int> widths_, const std::string& name,
                   Rng& rng)
    : widths(std::move(widths_)) {
  W.reserve(widths.size());
  b.reserve(widths.size());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    W.emplace_back(filters, embed_dim * widths[i], name + ".W" + std::to_string(widths[i]));
    b.emplace_back(filters, 1, name + ".b" + std::to_string(widths[i]));
    xavier_init(W.back(), rng);
  }
}

Graph::Var ConvBank::operator()(Graph& g, Graph::Var emb, int len, bool frozen) {
  auto P = [&](Param& p) { return frozen ? g.constant(p.value) : g.param(p); };
  const int T = static_cast<int>(g.val(emb).cols());
  const int E = static_cast<int>(g.val(emb).rows());
  if (len < 1) len = 1;
  if (len > T) len = T;
  std::vector<Graph::Var> pooled;
  pooled.reserve(widths.size());
  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    const int w = widths[wi];
    const int n_windows = len - w + 1;
    Graph::Var feat;
    if (n_windows < 1) {
      // Sequence shorter than the filter: single window padded conceptually
      // with zero columns; build it by stacking what exists plus zeros.
      std::vector<Graph::Var> parts;
      for (int t = 0; t < w; ++t)
        parts.push_back(t < len ? g.select_cols(emb, {t}) : g.constant(Mat::Zero(E, 1)));
      auto window = g.concat_rows(parts);  // (E*w) x 1
      feat = g.relu(g.add(g.matmul(P(W[wi]), window), P(b[wi])));
    } else {
      // im2col: each valid window becomes one column of an (E*w) x n matrix.
      std::vector<Graph::Var> rows;
      rows.reserve(static_cast<std::size_t>(w));
      for (int t = 0; t < w; ++t) {
        std::vector<int> cols(static_cast<std::size_t>(n_windows));
        for (int s = 0; s < n_windows; ++s) cols[static_cast<std::size_t>(s)] = s + t;
        rows.push_back(g.select_cols(emb, cols));
      }
      auto windows = g.concat_rows(rows);  // (E*w) x n_windows
      auto conv = g.relu(g.add(g.matmul(P(W[wi]), windows), P(b[wi])));
      feat = g.scale(g.rows_sum(conv), 1.0 / double(n_windows));  // masked mean pool
    }
    pooled.push_back(feat);
  }
  return pooled.size() == 1 ? pooled[0] : g.concat_rows(pooled);
}

int ConvBank::out_dim() const {
  int d = 0;
  for (const auto& w : W) d += static_cast<int>(w.value.rows());
  return d;
}

std::vector<Param*> ConvBank::params() {
  std::vector<Param*> out;
  for (std::size_t i = 0; i < W.size(); ++i) {
    out.push_back(&W[i]);
    out.push_back(&b[i]);
  }
  return out;
}

}  // namespace malcom::nn
