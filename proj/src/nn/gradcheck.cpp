#include "attrgan/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attrgan/rng.hpp"

namespace attrgan::nn {

GradCheckResult check_gradients(const std::function<Tensor()>& loss, const NamedTensors& wrt,
                                const GradCheckOptions& options) {
  for (const auto& p : wrt) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
  }
  loss().backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& p : wrt) {
    auto g = p.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(static_cast<size_t>(p.tensor.size()), 0.0);
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (size_t k = 0; k < wrt.size(); ++k) {
    Tensor t = wrt[k].tensor;
    std::vector<int> coords(static_cast<size_t>(t.size()));
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords > 0 && static_cast<int>(coords.size()) > options.max_coords) {
      for (size_t i = 0; i < static_cast<size_t>(options.max_coords); ++i)
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      coords.resize(static_cast<size_t>(options.max_coords));
    }
    auto data = t.mutable_data();
    for (int i : coords) {
      const double saved = data[static_cast<size_t>(i)];
      double plus, minus;
      {
        NoGradGuard guard;
        data[static_cast<size_t>(i)] = saved + options.step;
        plus = loss().item();
        data[static_cast<size_t>(i)] = saved - options.step;
        minus = loss().item();
      }
      data[static_cast<size_t>(i)] = saved;
      const double numeric = (plus - minus) / (2 * options.step);
      const double a = analytic[k][static_cast<size_t>(i)];
      ++result.checked;
      const double scale = std::max(std::abs(a), std::abs(numeric));
      if (scale < options.abs_floor) continue;
      const double rel = std::abs(a - numeric) / scale;
      if (rel > result.worst_rel) {
        result.worst_rel = rel;
        result.worst_name = wrt[k].name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  result.ok = result.worst_rel <= options.rel_tol;
  return result;
}

}  // namespace attrgan::nn
