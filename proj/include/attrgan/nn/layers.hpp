#pragma once

#include <string>
#include <vector>

#include "attrgan/nn/ops.hpp"
#include "attrgan/nn/tensor.hpp"
#include "attrgan/rng.hpp"

namespace attrgan::nn {

// Anything owning learnable tensors. Names are hierarchical ("gen.decoder.0.w")
// and are the keys of the checkpoint archive.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect_parameters(const std::string& prefix, NamedTensors& out) const = 0;
  // Non-learnable state (running statistics); default none.
  virtual void collect_buffers(const std::string& prefix, NamedTensors& out) const;

  NamedTensors parameters(const std::string& prefix = "") const;
  NamedTensors buffers(const std::string& prefix = "") const;
};

std::string join_name(const std::string& prefix, const std::string& name);

void set_requires_grad(const NamedTensors& params, bool flag);
void zero_grad(const NamedTensors& params);
size_t parameter_count(const NamedTensors& params);

// Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<double> uniform_init(int count, int fan_in, Rng& rng);

class Linear : public Module {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight_, bias_); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  int in_features() const { return weight_.dim(1); }
  int out_features() const { return weight_.dim(0); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_, bias_;
};

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  int in_channels() const { return weight_.dim(1); }
  int out_channels() const { return weight_.dim(0); }
  int stride() const { return stride_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_, bias_;
  int stride_ = 1, pad_ = 0;
};

}  // namespace attrgan::nn
