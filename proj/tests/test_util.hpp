#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "attrgan/nn/gradcheck.hpp"
#include "attrgan/nn/ops.hpp"
#include "attrgan/rng.hpp"

namespace attrgan::testutil {

using nn::Shape;
using nn::Tensor;

inline std::vector<double> uniform_values(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor random_param(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::parameter(shape, uniform_values(static_cast<int>(nn::numel(shape)), rng, lo, hi));
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::from(shape, uniform_values(static_cast<int>(nn::numel(shape)), rng, lo, hi));
}

// Weighted sum makes every output coordinate matter to the scalar.
inline Tensor weighted_sum(const Tensor& y, unsigned seed) {
  Rng rng(seed);
  return nn::sum(nn::mul(y, Tensor::from(y.shape(), uniform_values(y.size(), rng))));
}

inline void expect_grad_ok(const std::function<Tensor()>& f, const nn::NamedTensors& wrt,
                           double tol, int max_coords = 0) {
  nn::GradCheckOptions opt;
  opt.rel_tol = tol;
  opt.max_coords = max_coords;
  auto r = nn::check_gradients(f, wrt, opt);
  EXPECT_TRUE(r.ok) << r.worst_name << "[" << r.worst_index << "] analytic " << r.worst_analytic
                    << " numeric " << r.worst_numeric << " rel " << r.worst_rel;
  EXPECT_GT(r.checked, 0);
}

}  // namespace attrgan::testutil
