#pragma once

#include <span>
#include <vector>

#include "attrgan/config.hpp"
#include "attrgan/layout.hpp"
#include "attrgan/nn/layers.hpp"

namespace attrgan {

using nn::Tensor;

// One crop per object of each layout, in order; images [b,3,H,W] with
// image b described by layouts[b]. Bilinear resize to `size`.
Tensor crop_objects(const Tensor& images, std::span<const Layout> layouts, int size);
Tensor crop_objects(const Tensor& images, std::span<const int> source, std::span<const BBox> boxes,
                    int size);

// Stride-2 conv stack with leaky ReLU, global average pooling at the end.
class ConvTrunk : public nn::Module {
 public:
  ConvTrunk() = default;
  ConvTrunk(int in_channels, const std::vector<int>& widths, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  // Activation after every conv block (pre-pooling), for feature extraction.
  std::vector<Tensor> features(const Tensor& x) const;
  int out_features() const { return out_; }

  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;

 private:
  std::vector<nn::Conv2d> convs_;
  int out_ = 0;
};

class ImageDiscriminator : public nn::Module {
 public:
  ImageDiscriminator() = default;
  ImageDiscriminator(const ModelConfig& config, Rng& rng);

  Tensor logits(const Tensor& images) const;  // [b]
  Tensor realness(const Tensor& images) const { return nn::sigmoid(logits(images)); }

  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;

 private:
  ConvTrunk trunk_;
  nn::Linear head_;
  int canvas_ = 0;
};

struct ObjectHeads {
  Tensor realness;    // [n] logits
  Tensor categories;  // [n, |C|] logits
  Tensor attributes;  // [n, |A|] logits
};

// Object discriminator plus the category and attribute classifiers. With
// shared_trunk the three heads read one feature vector; otherwise each head
// has its own trunk.
class ObjectDiscriminator : public nn::Module {
 public:
  ObjectDiscriminator() = default;
  ObjectDiscriminator(const ModelConfig& config, Rng& rng);

  ObjectHeads operator()(const Tensor& crops) const;
  Tensor realness(const Tensor& crops) const { return nn::sigmoid((*this)(crops).realness); }
  Tensor classify_object(const Tensor& crops) const { return (*this)(crops).categories; }
  Tensor classify_attributes(const Tensor& crops) const { return (*this)(crops).attributes; }

  // Per-layer activations of the classifier trunk.
  std::vector<Tensor> features(const Tensor& crops) const;

  nn::NamedTensors classifier_parameters(const std::string& prefix = "") const;
  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;
  bool shared_trunk() const { return trunks_.size() == 1; }

 private:
  void check(const Tensor& crops) const;

  std::vector<ConvTrunk> trunks_;  // 1 (shared) or 3: realness, category, attribute
  nn::Linear real_head_, category_head_, attribute_head_;
  int object_size_ = 0;
};

}  // namespace attrgan
