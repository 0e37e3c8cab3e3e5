#pragma once

#include <span>
#include <vector>

#include "attrgan/config.hpp"
#include "attrgan/nn/layers.hpp"

namespace attrgan {

using nn::Tensor;

// Multi-hot vector of length `num_attributes`.
std::vector<double> encode_attributes(std::span<const int> attributes, int num_attributes);
// Rows of encode_attributes -> [n, num_attributes].
Tensor encode_attribute_batch(const std::vector<std::vector<int>>& attributes, int num_attributes);

// Category table plus the three-layer MLP M(w ⊕ e).
class Embedding : public nn::Module {
 public:
  Embedding() = default;
  Embedding(const ModelConfig& config, Rng& rng);

  // [n, embed_dim] for categories[i] with multi-hot rows of `attributes`.
  Tensor operator()(std::span<const int> categories, const Tensor& attributes) const;
  Tensor joint(int category, std::span<const int> attributes) const;

  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;
  Tensor& table() { return table_; }
  int num_attributes() const { return num_attributes_; }

 private:
  Tensor table_;
  std::vector<nn::Linear> mlp_;
  int num_attributes_ = 0;
};

// m x latent_dim standard normal codes.
Tensor sample_latent_prior(int m, int latent_dim, Rng& rng);

struct Posterior {
  Tensor mu;      // [n, latent_dim]
  Tensor logvar;  // [n, latent_dim], clamped to [-10, 10]
};

// Q: object crop -> Gaussian over z.
class CropEncoder : public nn::Module {
 public:
  CropEncoder() = default;
  CropEncoder(const ModelConfig& config, Rng& rng);

  // crops [n, 3, object_size, object_size]
  Posterior operator()(const Tensor& crops) const;

  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;

 private:
  std::vector<nn::Conv2d> convs_;
  nn::Linear mu_, logvar_;
  int object_size_ = 0;
};

// z = mu + exp(0.5 * logvar) * eps.
Tensor reparameterize(const Posterior& p, const Tensor& eps);

}  // namespace attrgan
