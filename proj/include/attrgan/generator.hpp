#pragma once

#include <optional>
#include <span>
#include <vector>

#include "attrgan/config.hpp"
#include "attrgan/embedding.hpp"
#include "attrgan/layout.hpp"
#include "attrgan/nn/layers.hpp"

namespace attrgan {

// Per-object inputs for a batch of layouts, objects concatenated in layout
// order. counts[b] objects belong to image b.
struct GenBatch {
  std::vector<int> categories;
  std::vector<std::vector<int>> attributes;
  std::vector<BBox> boxes;
  std::vector<int> counts;
  int size() const { return static_cast<int>(categories.size()); }
  int images() const { return static_cast<int>(counts.size()); }
};

using AttributeOverrides = std::vector<std::optional<std::vector<int>>>;

GenBatch make_gen_batch(std::span<const Layout> layouts);
// `overrides[i]`, when set, replaces the attributes of object i of `layout`.
GenBatch make_gen_batch(const Layout& layout, const AttributeOverrides& overrides);

// F_i: v [1, D] written into bbox_to_grid(obj.bbox, S) -> [1, D, S, S].
Tensor compose_feature_map(const ObjectSpec& obj, const Tensor& v, int grid);

// Parameter-free normalization followed by (1 + gamma(H)) and beta(H), with
// gamma/beta from convolutions of H resized (nearest) to x's resolution.
class Spade : public nn::Module {
 public:
  Spade() = default;
  Spade(int channels, int h_channels, int hidden, Rng& rng);

  // `mode` selects the statistics; under kBatch with `update_running`, the
  // running buffers move toward the batch statistics by `momentum`.
  Tensor operator()(const Tensor& x, const Tensor& h, nn::NormMode mode, bool update_running,
                    double momentum) const;
  // Normalized activations only (no modulation), same statistics rule.
  Tensor normalized(const Tensor& x, nn::NormMode mode) const;

  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, nn::NamedTensors& out) const override;

  nn::Conv2d& shared() { return shared_; }
  nn::Conv2d& modulation() { return modulation_; }

 private:
  nn::Conv2d shared_;
  nn::Conv2d modulation_;  // 2*channels outputs: gamma then beta
  Tensor running_mean_, running_var_;
  int channels_ = 0;
};

class Generator : public nn::Module {
 public:
  Generator() = default;
  Generator(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  // Training mode uses batch statistics (kBatch config) and updates running
  // buffers when gradients are enabled; eval mode uses running statistics.
  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  Embedding& embedding() { return embedding_; }
  const Embedding& embedding() const { return embedding_; }

  // [n, embed_dim + latent_dim]: joint embedding concatenated with z.
  Tensor object_vectors(const GenBatch& batch, const Tensor& z) const;
  // Object encoder on explicit canvases [n, D, S, S] -> [n, C_H, g, g].
  Tensor encode_objects(const Tensor& canvases) const;
  // Same result as encode_objects(compose of every object) without building
  // the canvases.
  Tensor encode_boxes(const Tensor& vectors, std::span<const BBox> boxes) const;
  // cLSTM over each image's objects in order; encoded rows grouped by counts.
  Tensor fuse_objects(const Tensor& encoded, std::span<const int> counts) const;
  // H [b, C_H, g, g] -> H^g [b, C_H + C_g, g, g].
  Tensor encode_global_context(const Tensor& h) const;
  // Pooled context vector g [b, C_g].
  Tensor global_context_vector(const Tensor& h) const;
  Tensor decode(const Tensor& hg, const Tensor& h) const;

  // Full pipeline -> [b, 3, canvas, canvas] in [-1, 1].
  Tensor forward(const GenBatch& batch, const Tensor& z) const;
  Tensor generate(const Layout& layout, const Tensor& z, const AttributeOverrides& overrides = {}) const;

  std::vector<Spade>& spades() { return spades_; }
  nn::NormMode active_norm() const;

  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, nn::NamedTensors& out) const override;

 private:
  Tensor spade_block(size_t index, const Tensor& x, const Tensor& h) const;

  ModelConfig config_;
  bool training_ = false;
  Embedding embedding_;
  std::vector<nn::Conv2d> object_encoder_;
  nn::Conv2d lstm_;  // [x, h] -> 4*C_H gates (input, forget, output, candidate)
  nn::Conv2d context1_, context2_;
  nn::Conv2d decoder_in_;
  std::vector<nn::Conv2d> decoder_;
  std::vector<Spade> spades_;
  nn::Conv2d to_rgb_;
};

}  // namespace attrgan
