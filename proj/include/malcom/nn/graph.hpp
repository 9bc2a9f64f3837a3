#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace malcom::nn {

using Mat = Eigen::MatrixXd;

// A trainable tensor. Gradients accumulate into `grad` across backward passes
// until the optimizer consumes and clears them.
struct Param {
  Mat value;
  Mat grad;
  std::string name;

  Param() = default;
  Param(int rows, int cols, std::string name_)
      : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)), name(std::move(name_)) {}

  void zero_grad() { grad.setZero(); }
};

// Reverse-mode tape over Eigen matrices. A Graph is built fresh for every
// forward pass; backward() walks the tape once in reverse creation order.
// Shapes are validated eagerly so a mismatch fails at the op that caused it.
class Graph {
 public:
  using Var = int;

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var param(Param& p);              // gradient flows into p.grad
  Var constant(Mat value);          // no gradient
  Var input(Mat value);             // gradient tracked but kept on the tape

  // Arithmetic. add/sub/cmul broadcast a column vector (r x 1) over columns
  // or a row vector (1 x c) over rows when shapes differ.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var neg(Var a) { return scale(a, -1.0); }

  // Elementwise nonlinearities.
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softplus(Var a);   // log(1 + e^x), stable
  Var square(Var a);
  Var sqrt_clamped(Var a);  // sqrt(max(x, 0)); derivative 0 on the clamped branch

  // Softmax family (numerically stabilized).
  Var softmax_cols(Var a);
  Var log_softmax_cols(Var a);
  Var softmax_rows(Var a);

  // Reductions.
  Var sum_all(Var a);    // 1 x 1
  Var mean_all(Var a);   // 1 x 1
  Var rows_sum(Var a);   // r x 1
  Var cols_sum(Var a);   // 1 x c

  // Structure.
  Var transpose(Var a);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var select_cols(Var a, std::vector<int> idx);
  // out(0, j) = a(ids[j], j); one picked entry per column.
  Var pick_rows(Var a, std::vector<int> ids);

  void backward(Var loss);

  const Mat& val(Var v) const { return nodes_[v].value; }
  const Mat& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    bool grad_ready = false;
    std::function<void(Graph&)> back;  // adds into parent grads
  };

  Var make(Mat value, bool needs_grad, std::function<void(Graph&)> back);
  Mat& grad_ref(Var v);
  void accumulate(Var v, const Mat& g);

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace malcom::nn
