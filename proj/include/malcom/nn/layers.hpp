#pragma once

#include "malcom/nn/graph.hpp"
#include "malcom/rng.hpp"

#include <string>
#include <vector>

namespace malcom::nn {

void xavier_init(Param& p, Rng& rng);
void gaussian_init(Param& p, Rng& rng, double stddev);

// One-hot column matrix (vocab_size x ids.size()).
Mat one_hot(int vocab_size, const std::vector<int>& ids);

struct Dense {
  Param W, b;

  Dense() = default;
  Dense(int in, int out, const std::string& name, Rng& rng)
      : W(out, in, name + ".W"), b(out, 1, name + ".b") {
    xavier_init(W, rng);
  }

  // `frozen` feeds the weights as constants: gradients pass through to the
  // inputs but never reach the parameters.
  Graph::Var operator()(Graph& g, Graph::Var x, bool frozen = false) {
    auto w = frozen ? g.constant(W.value) : g.param(W);
    auto bb = frozen ? g.constant(b.value) : g.param(b);
    return g.add(g.matmul(w, x), bb);
  }

  std::vector<Param*> params() { return {&W, &b}; }
};

// Token embedding table, dim x vocab. Hard lookup for token ids, soft lookup
// (a matmul) for relaxed one-hot sequences so gradients reach the inputs.
struct Embedding {
  Param table;

  Embedding() = default;
  Embedding(int dim, int vocab, const std::string& name, Rng& rng) : table(dim, vocab, name) {
    gaussian_init(table, rng, 0.1);
  }

  Graph::Var lookup(Graph& g, const std::vector<int>& ids, bool frozen = false) {
    return g.select_cols(frozen ? g.constant(table.value) : g.param(table), ids);
  }

  Graph::Var lookup_soft(Graph& g, Graph::Var one_hots, bool frozen = false) {
    return g.matmul(frozen ? g.constant(table.value) : g.param(table), one_hots);
  }

  int dim() const { return static_cast<int>(table.value.rows()); }
  std::vector<Param*> params() { return {&table}; }
};

struct GruCell {
  Param Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;

  GruCell() = default;
  GruCell(int in, int hidden, const std::string& name, Rng& rng);

  // x: in x B, h: hidden x B -> hidden x B
  Graph::Var step(Graph& g, Graph::Var x, Graph::Var h, bool frozen = false);

  int hidden() const { return static_cast<int>(Uz.value.rows()); }
  std::vector<Param*> params();
};

// A bank of 1-d convolutions over a token-embedding sequence with masked mean
// pooling over valid windows; output is the concatenation across widths.
struct ConvBank {
  std::vector<int> widths;
  std::vector<Param> W;  // filters x (embed * width)
  std::vector<Param> b;

  ConvBank() = default;
  ConvBank(int embed_dim, int filters, std::vector<int> widths_, const std::string& name, Rng& rng);

  // emb: embed x T (T >= 1), len: number of real (unpadded) positions.
  Graph::Var operator()(Graph& g, Graph::Var emb, int len, bool frozen = false);

  int out_dim() const;
  std::vector<Param*> params();
};

}  // namespace malcom::nn
