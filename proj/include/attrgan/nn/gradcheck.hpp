#pragma once

#include <functional>
#include <string>
#include <vector>

#include "attrgan/nn/tensor.hpp"

namespace attrgan::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-3;
  // Pairs where both |analytic| and |numeric| are below this pass outright.
  double abs_floor = 1e-8;
  // Coordinates checked per tensor (<= 0 means every coordinate).
  int max_coords = 0;
  unsigned seed = 0;
};

struct GradCheckResult {
  bool ok = true;
  double worst_rel = 0.0;
  int checked = 0;
  std::string worst_name;
  int worst_index = -1;
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

// Compares backward() gradients of `loss` against central differences for
// every tensor in `wrt`. `loss` must rebuild the graph on each call.
GradCheckResult check_gradients(const std::function<Tensor()>& loss, const NamedTensors& wrt,
                                const GradCheckOptions& options = {});

}  // namespace attrgan::nn
