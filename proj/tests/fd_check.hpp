#pragma once

#include "doctest.h"

#include "malcom/nn/graph.hpp"
#include "malcom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

inline double rel_err(double a, double b) {
  const double denom = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

// fn() must rebuild a fresh graph reading `params`, run backward, and return
// the loss. Tape gradients are compared entrywise against central finite
// differences.
inline void fd_check(const std::vector<malcom::nn::Param*>& params,
                     const std::function<double()>& fn, double h = 1e-5, double tol = 1e-6) {
  using malcom::nn::Mat;
  for (malcom::nn::Param* p : params) p->zero_grad();
  (void)fn();
  std::vector<Mat> ad;
  ad.reserve(params.size());
  for (malcom::nn::Param* p : params) ad.push_back(p->grad);
  for (std::size_t k = 0; k < params.size(); ++k) {
    malcom::nn::Param& p = *params[k];
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
        const double keep = p.value(i, j);
        p.value(i, j) = keep + h;
        for (malcom::nn::Param* q : params) q->zero_grad();
        const double up = fn();
        p.value(i, j) = keep - h;
        for (malcom::nn::Param* q : params) q->zero_grad();
        const double dn = fn();
        p.value(i, j) = keep;
        const double fd = (up - dn) / (2.0 * h);
        INFO("param ", p.name, " entry (", int(i), ",", int(j), ") fd=", fd, " ad=", ad[k](i, j));
        CHECK(rel_err(fd, ad[k](i, j)) < tol);
      }
  }
}

inline malcom::nn::Mat filled(int r, int c, malcom::Rng& rng, double lo = -1.0, double hi = 1.0) {
  malcom::nn::Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace testutil
