#pragma once

#include <vector>

#include "attrgan/nn/tensor.hpp"

namespace attrgan::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // global gradient norm; <= 0 disables
};

class Adam {
 public:
  Adam() = default;
  Adam(NamedTensors params, AdamOptions options);

  // Clips, applies one update, and returns the pre-clip global gradient norm.
  double step();
  void zero_grad();

  long steps() const { return steps_; }
  const NamedTensors& params() const { return params_; }
  const AdamOptions& options() const { return options_; }

  // Moments exposed for checkpointing, in parameter order.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(long steps) { steps_ = steps; }

 private:
  NamedTensors params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  long steps_ = 0;
};

}  // namespace attrgan::nn
