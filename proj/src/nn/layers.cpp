#include "attrgan/nn/layers.hpp"

#include <cmath>

namespace attrgan::nn {

void Module::collect_buffers(const std::string&, NamedTensors&) const {}

NamedTensors Module::parameters(const std::string& prefix) const {
  NamedTensors out;
  collect_parameters(prefix, out);
  return out;
}

NamedTensors Module::buffers(const std::string& prefix) const {
  NamedTensors out;
  collect_buffers(prefix, out);
  return out;
}

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

void set_requires_grad(const NamedTensors& params, bool flag) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(flag);
  }
}

void zero_grad(const NamedTensors& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

size_t parameter_count(const NamedTensors& params) {
  size_t n = 0;
  for (const auto& p : params) n += static_cast<size_t>(p.tensor.size());
  return n;
}

std::vector<double> uniform_init(int count, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<size_t>(count));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

Linear::Linear(int in, int out, Rng& rng)
    : weight_(Tensor::parameter({out, in}, uniform_init(out * in, in, rng))),
      bias_(Tensor::parameter({out}, uniform_init(out, in, rng))) {}

void Linear::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
  out.push_back({join_name(prefix, "bias"), bias_});
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, Rng& rng)
    : weight_(Tensor::parameter({out, in, kernel, kernel},
                                uniform_init(out * in * kernel * kernel, in * kernel * kernel, rng))),
      bias_(Tensor::parameter({out}, uniform_init(out, in * kernel * kernel, rng))),
      stride_(stride),
      pad_(pad) {}

void Conv2d::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
  out.push_back({join_name(prefix, "bias"), bias_});
}

}  // namespace attrgan::nn
