#include "malcom/nn/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace malcom::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("graph: " + what);
}

std::string shape_of(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Graph::Var Graph::make(Mat value, bool needs_grad, std::function<void(Graph&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Mat& Graph::grad_ref(Var v) {
  Node& n = nodes_[v];
  if (!n.grad_ready) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

void Graph::accumulate(Var v, const Mat& g) {
  if (!nodes_[v].needs_grad) return;
  grad_ref(v) += g;
}

const Mat& Graph::grad(Var v) const {
  require(nodes_[v].grad_ready, "gradient not computed for this node (run backward first)");
  return nodes_[v].grad;
}

Graph::Var Graph::param(Param& p) {
  Param* pp = &p;
  Var v = make(p.value, true, nullptr);
  nodes_[v].back = [v, pp](Graph& g) { pp->grad += g.grad_ref(v); };
  return v;
}

Graph::Var Graph::constant(Mat value) { return make(std::move(value), false, nullptr); }

Graph::Var Graph::input(Mat value) { return make(std::move(value), true, nullptr); }

Graph::Var Graph::matmul(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  require(A.cols() == B.rows(), "matmul shapes " + shape_of(A) + " * " + shape_of(B));
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Var v = make(A * B, ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a, b](Graph& g) {
      const Mat& d = g.grad_ref(v);
      if (g.nodes_[a].needs_grad) g.accumulate(a, d * g.val(b).transpose());
      if (g.nodes_[b].needs_grad) g.accumulate(b, g.val(a).transpose() * d);
    };
  }
  return v;
}

namespace {
enum class Bcast { none, col, row };
}

Graph::Var Graph::add(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  Bcast bc = Bcast::none;
  Mat out;
  if (A.rows() == B.rows() && A.cols() == B.cols()) {
    out = A + B;
  } else if (B.cols() == 1 && B.rows() == A.rows()) {
    bc = Bcast::col;
    out = A.colwise() + B.col(0);
  } else if (B.rows() == 1 && B.cols() == A.cols()) {
    bc = Bcast::row;
    out = A.rowwise() + B.row(0);
  } else {
    require(false, "add shapes " + shape_of(A) + " + " + shape_of(B));
  }
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Var v = make(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a, b, bc](Graph& g) {
      const Mat& d = g.grad_ref(v);
      g.accumulate(a, d);
      if (!g.nodes_[b].needs_grad) return;
      switch (bc) {
        case Bcast::none: g.accumulate(b, d); break;
        case Bcast::col: g.accumulate(b, d.rowwise().sum()); break;
        case Bcast::row: g.accumulate(b, d.colwise().sum()); break;
      }
    };
  }
  return v;
}

Graph::Var Graph::sub(Var a, Var b) { return add(a, neg(b)); }

Graph::Var Graph::cmul(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  Bcast bc = Bcast::none;
  Mat out;
  if (A.rows() == B.rows() && A.cols() == B.cols()) {
    out = A.cwiseProduct(B);
  } else if (B.cols() == 1 && B.rows() == A.rows()) {
    bc = Bcast::col;
    out = A.array().colwise() * B.col(0).array();
  } else if (B.rows() == 1 && B.cols() == A.cols()) {
    bc = Bcast::row;
    out = A.array().rowwise() * B.row(0).array();
  } else {
    require(false, "cmul shapes " + shape_of(A) + " * " + shape_of(B));
  }
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Var v = make(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a, b, bc](Graph& g) {
      const Mat& d = g.grad_ref(v);
      const Mat& A2 = g.val(a);
      const Mat& B2 = g.val(b);
      if (g.nodes_[a].needs_grad) {
        switch (bc) {
          case Bcast::none: g.accumulate(a, d.cwiseProduct(B2)); break;
          case Bcast::col: g.accumulate(a, d.array().colwise() * B2.col(0).array()); break;
          case Bcast::row: g.accumulate(a, d.array().rowwise() * B2.row(0).array()); break;
        }
      }
      if (g.nodes_[b].needs_grad) {
        Mat full = d.cwiseProduct(A2);
        switch (bc) {
          case Bcast::none: g.accumulate(b, full); break;
          case Bcast::col: g.accumulate(b, full.rowwise().sum()); break;
          case Bcast::row: g.accumulate(b, full.colwise().sum()); break;
        }
      }
    };
  }
  return v;
}

Graph::Var Graph::scale(Var a, double s) {
  bool ng = nodes_[a].needs_grad;
  Var v = make(val(a) * s, ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a, s](Graph& g) { g.accumulate(a, g.grad_ref(v) * s); };
  }
  return v;
}

Graph::Var Graph::add_scalar(Var a, double s) {
  bool ng = nodes_[a].needs_grad;
  Var v = make(val(a).array() + s, ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) { g.accumulate(a, g.grad_ref(v)); };
  }
  return v;
}

Graph::Var Graph::sigmoid(Var a) {
  Mat y = val(a).unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& yv = g.val(v);
      g.accumulate(a, g.grad_ref(v).cwiseProduct(yv.cwiseProduct(Mat::Ones(yv.rows(), yv.cols()) - yv)));
    };
  }
  return v;
}

Graph::Var Graph::tanh(Var a) {
  Mat y = val(a).array().tanh();
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& yv = g.val(v);
      g.accumulate(a, (g.grad_ref(v).array() * (1.0 - yv.array().square())).matrix());
    };
  }
  return v;
}

Graph::Var Graph::relu(Var a) {
  Mat y = val(a).cwiseMax(0.0);
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      Mat mask = (g.val(a).array() > 0.0).cast<double>();
      g.accumulate(a, g.grad_ref(v).cwiseProduct(mask));
    };
  }
  return v;
}

Graph::Var Graph::exp(Var a) {
  Mat y = val(a).array().exp();
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) { g.accumulate(a, g.grad_ref(v).cwiseProduct(g.val(v))); };
  }
  return v;
}

Graph::Var Graph::log(Var a) {
  Mat y = val(a).array().log();
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      g.accumulate(a, (g.grad_ref(v).array() / g.val(a).array()).matrix());
    };
  }
  return v;
}

Graph::Var Graph::softplus(Var a) {
  Mat y = val(a).unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      Mat s = g.val(a).unaryExpr([](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
      g.accumulate(a, g.grad_ref(v).cwiseProduct(s));
    };
  }
  return v;
}

Graph::Var Graph::square(Var a) {
  Mat y = val(a).array().square();
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      g.accumulate(a, 2.0 * g.grad_ref(v).cwiseProduct(g.val(a)));
    };
  }
  return v;
}

Graph::Var Graph::sqrt_clamped(Var a) {
  Mat y = val(a).unaryExpr([](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; });
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& yv = g.val(v);
      Mat d = g.grad_ref(v);
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
          d(i, j) = yv(i, j) > 1e-12 ? d(i, j) / (2.0 * yv(i, j)) : 0.0;
        }
      }
      g.accumulate(a, d);
    };
  }
  return v;
}

Graph::Var Graph::softmax_cols(Var a) {
  const Mat& A = val(a);
  Mat y(A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    Eigen::VectorXd c = A.col(j);
    double m = c.maxCoeff();
    Eigen::VectorXd e = (c.array() - m).exp();
    y.col(j) = e / e.sum();
  }
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& yv = g.val(v);
      const Mat& d = g.grad_ref(v);
      Mat out(yv.rows(), yv.cols());
      for (Eigen::Index j = 0; j < yv.cols(); ++j) {
        double dot = yv.col(j).dot(d.col(j));
        out.col(j) = yv.col(j).cwiseProduct(d.col(j).array().matrix() - Eigen::VectorXd::Constant(yv.rows(), dot));
      }
      g.accumulate(a, out);
    };
  }
  return v;
}

Graph::Var Graph::log_softmax_cols(Var a) {
  const Mat& A = val(a);
  Mat y(A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    Eigen::VectorXd c = A.col(j);
    double m = c.maxCoeff();
    double lse = m + std::log((c.array() - m).exp().sum());
    y.col(j) = c.array() - lse;
  }
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(y), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& yv = g.val(v);
      const Mat& d = g.grad_ref(v);
      Mat out(yv.rows(), yv.cols());
      for (Eigen::Index j = 0; j < yv.cols(); ++j) {
        double dsum = d.col(j).sum();
        out.col(j) = d.col(j) - yv.col(j).array().exp().matrix() * dsum;
      }
      g.accumulate(a, out);
    };
  }
  return v;
}

Graph::Var Graph::softmax_rows(Var a) { return transpose(softmax_cols(transpose(a))); }

Graph::Var Graph::sum_all(Var a) {
  bool ng = nodes_[a].needs_grad;
  Var v = make(Mat::Constant(1, 1, val(a).sum()), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& A = g.val(a);
      g.accumulate(a, Mat::Constant(A.rows(), A.cols(), g.grad_ref(v)(0, 0)));
    };
  }
  return v;
}

Graph::Var Graph::mean_all(Var a) {
  double n = static_cast<double>(val(a).size());
  return scale(sum_all(a), 1.0 / n);
}

Graph::Var Graph::rows_sum(Var a) {
  bool ng = nodes_[a].needs_grad;
  Var v = make(val(a).rowwise().sum(), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& d = g.grad_ref(v);
      g.accumulate(a, d * Eigen::RowVectorXd::Ones(g.val(a).cols()));
    };
  }
  return v;
}

Graph::Var Graph::cols_sum(Var a) {
  bool ng = nodes_[a].needs_grad;
  Var v = make(val(a).colwise().sum(), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) {
      const Mat& d = g.grad_ref(v);
      g.accumulate(a, Eigen::VectorXd::Ones(g.val(a).rows()) * d);
    };
  }
  return v;
}

Graph::Var Graph::transpose(Var a) {
  bool ng = nodes_[a].needs_grad;
  Var v = make(val(a).transpose(), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a](Graph& g) { g.accumulate(a, g.grad_ref(v).transpose()); };
  }
  return v;
}

Graph::Var Graph::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  Eigen::Index cols = val(parts[0]).cols();
  Eigen::Index rows = 0;
  bool ng = false;
  for (Var p : parts) {
    require(val(p).cols() == cols, "concat_rows: column mismatch");
    rows += val(p).rows();
    ng = ng || nodes_[p].needs_grad;
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  Var v = make(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<Var> ps = parts;
    nodes_[v].back = [v, ps](Graph& g) {
      const Mat& d = g.grad_ref(v);
      Eigen::Index at2 = 0;
      for (Var p : ps) {
        g.accumulate(p, d.middleRows(at2, g.val(p).rows()));
        at2 += g.val(p).rows();
      }
    };
  }
  return v;
}

Graph::Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  Eigen::Index rows = val(parts[0]).rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (Var p : parts) {
    require(val(p).rows() == rows, "concat_cols: row mismatch");
    cols += val(p).cols();
    ng = ng || nodes_[p].needs_grad;
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
  }
  Var v = make(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<Var> ps = parts;
    nodes_[v].back = [v, ps](Graph& g) {
      const Mat& d = g.grad_ref(v);
      Eigen::Index at2 = 0;
      for (Var p : ps) {
        g.accumulate(p, d.middleCols(at2, g.val(p).cols()));
        at2 += g.val(p).cols();
      }
    };
  }
  return v;
}

Graph::Var Graph::select_cols(Var a, std::vector<int> idx) {
  const Mat& A = val(a);
  Mat out(A.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    require(idx[j] >= 0 && idx[j] < A.cols(), "select_cols: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = A.col(idx[j]);
  }
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a, idx = std::move(idx)](Graph& g) {
      const Mat& d = g.grad_ref(v);
      Mat acc = Mat::Zero(g.val(a).rows(), g.val(a).cols());
      for (std::size_t j = 0; j < idx.size(); ++j) {
        acc.col(idx[j]) += d.col(static_cast<Eigen::Index>(j));
      }
      g.accumulate(a, acc);
    };
  }
  return v;
}

Graph::Var Graph::pick_rows(Var a, std::vector<int> ids) {
  const Mat& A = val(a);
  require(static_cast<Eigen::Index>(ids.size()) == A.cols(), "pick_rows: one id per column");
  Mat out(1, A.cols());
  for (std::size_t j = 0; j < ids.size(); ++j) {
    require(ids[j] >= 0 && ids[j] < A.rows(), "pick_rows: id out of range");
    out(0, static_cast<Eigen::Index>(j)) = A(ids[j], static_cast<Eigen::Index>(j));
  }
  bool ng = nodes_[a].needs_grad;
  Var v = make(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[v].back = [v, a, ids = std::move(ids)](Graph& g) {
      const Mat& d = g.grad_ref(v);
      Mat acc = Mat::Zero(g.val(a).rows(), g.val(a).cols());
      for (std::size_t j = 0; j < ids.size(); ++j) {
        acc(ids[j], static_cast<Eigen::Index>(j)) = d(0, static_cast<Eigen::Index>(j));
      }
      g.accumulate(a, acc);
    };
  }
  return v;
}

void Graph::backward(Var loss) {
  require(!ran_backward_, "backward already ran on this graph");
  require(val(loss).rows() == 1 && val(loss).cols() == 1, "backward target must be scalar");
  require(nodes_[loss].needs_grad, "backward target does not depend on any tracked input");
  ran_backward_ = true;
  grad_ref(loss)(0, 0) = 1.0;
  for (Var v = loss; v >= 0; --v) {
    Node& n = nodes_[v];
    if (n.needs_grad && n.grad_ready && n.back) n.back(*this);
  }
}

}  // namespace malcom::nn
