#pragma once

#include "malcom/nn/graph.hpp"

#include <vector>

namespace malcom::nn {

// Rescale gradients in place so their joint L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const std::vector<Param*>& params, double max_norm);

class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  std::vector<Mat> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace malcom::nn
