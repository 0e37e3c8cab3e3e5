#include "attrgan/nn/optim.hpp"

#include <cmath>

namespace attrgan::nn {

Adam::Adam(NamedTensors params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.tensor.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.tensor.size()), 0.0);
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  const double clip =
      (options_.clip_norm > 0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    auto grad = t.grad();
    if (grad.empty()) continue;
    auto value = t.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * clip;
      m[i] = options_.beta1 * m[i] + (1 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1 - options_.beta2) * g * g;
      value[i] -= options_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
  return norm;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace attrgan::nn
