#include "attrgan/discriminator.hpp"

#include "attrgan/errors.hpp"

namespace attrgan {

using namespace nn;

Tensor crop_objects(const Tensor& images, std::span<const int> source, std::span<const BBox> boxes,
                    int size) {
  std::vector<Box> b;
  b.reserve(boxes.size());
  for (const auto& x : boxes) b.push_back({x.x0, x.y0, x.x1, x.y1});
  return crop_resize(images, source, b, size);
}

Tensor crop_objects(const Tensor& images, std::span<const Layout> layouts, int size) {
  require(images.rank() == 4 && images.dim(0) == static_cast<int>(layouts.size()),
          ErrorCode::kShapeMismatch,
          "crop_objects: " + shape_string(images.shape()) + " for " +
              std::to_string(layouts.size()) + " layouts");
  std::vector<int> src;
  std::vector<BBox> boxes;
  for (size_t i = 0; i < layouts.size(); ++i) {
    require(layouts[i].canvas.width == images.dim(3) && layouts[i].canvas.height == images.dim(2),
            ErrorCode::kShapeMismatch, "crop_objects: image does not match the layout canvas");
    for (const auto& o : layouts[i].objects) {
      src.push_back(static_cast<int>(i));
      boxes.push_back(o.bbox);
    }
  }
  return crop_objects(images, src, boxes, size);
}

ConvTrunk::ConvTrunk(int in_channels, const std::vector<int>& widths, Rng& rng) {
  int in = in_channels;
  for (int w : widths) {
    convs_.emplace_back(in, w, 3, 2, 1, rng);
    in = w;
  }
  out_ = in;
}

Tensor ConvTrunk::operator()(const Tensor& x) const {
  Tensor y = x;
  for (const auto& c : convs_) y = leaky_relu(c(y));
  return global_avg_pool(y);
}

std::vector<Tensor> ConvTrunk::features(const Tensor& x) const {
  std::vector<Tensor> out;
  Tensor y = x;
  for (const auto& c : convs_) {
    y = leaky_relu(c(y));
    out.push_back(y);
  }
  return out;
}

void ConvTrunk::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].collect_parameters(join_name(prefix, "conv." + std::to_string(i)), out);
}

ImageDiscriminator::ImageDiscriminator(const ModelConfig& config, Rng& rng)
    : trunk_(3, config.image_disc_channels, rng), canvas_(config.canvas) {
  head_ = Linear(trunk_.out_features(), 1, rng);
}

Tensor ImageDiscriminator::logits(const Tensor& images) const {
  require(images.rank() == 4 && images.dim(1) == 3 && images.dim(2) == canvas_ &&
              images.dim(3) == canvas_,
          ErrorCode::kShapeMismatch,
          "image discriminator expects [b,3," + std::to_string(canvas_) + "," +
              std::to_string(canvas_) + "], got " + shape_string(images.shape()));
  Tensor y = head_(trunk_(images));
  return y.reshape({y.dim(0)});
}

void ImageDiscriminator::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  trunk_.collect_parameters(join_name(prefix, "trunk"), out);
  head_.collect_parameters(join_name(prefix, "head"), out);
}

ObjectDiscriminator::ObjectDiscriminator(const ModelConfig& config, Rng& rng)
    : object_size_(config.object_size) {
  const int trunks = config.shared_trunk ? 1 : 3;
  for (int i = 0; i < trunks; ++i) trunks_.emplace_back(3, config.object_disc_channels, rng);
  const int f = trunks_[0].out_features();
  real_head_ = Linear(f, 1, rng);
  category_head_ = Linear(f, config.num_categories, rng);
  attribute_head_ = Linear(f, config.num_attributes, rng);
}

void ObjectDiscriminator::check(const Tensor& crops) const {
  require(crops.rank() == 4 && crops.dim(1) == 3 && crops.dim(2) == object_size_ &&
              crops.dim(3) == object_size_,
          ErrorCode::kShapeMismatch,
          "object discriminator expects [n,3," + std::to_string(object_size_) + "," +
              std::to_string(object_size_) + "], got " + shape_string(crops.shape()));
}

ObjectHeads ObjectDiscriminator::operator()(const Tensor& crops) const {
  check(crops);
  ObjectHeads h;
  if (trunks_.size() == 1) {
    Tensor f = trunks_[0](crops);
    h.realness = real_head_(f);
    h.categories = category_head_(f);
    h.attributes = attribute_head_(f);
  } else {
    h.realness = real_head_(trunks_[0](crops));
    h.categories = category_head_(trunks_[1](crops));
    h.attributes = attribute_head_(trunks_[2](crops));
  }
  h.realness = h.realness.reshape({h.realness.dim(0)});
  return h;
}

std::vector<Tensor> ObjectDiscriminator::features(const Tensor& crops) const {
  check(crops);
  return trunks_[trunks_.size() == 1 ? 0 : 1].features(crops);
}

NamedTensors ObjectDiscriminator::classifier_parameters(const std::string& prefix) const {
  NamedTensors out;
  if (trunks_.size() == 1) {
    trunks_[0].collect_parameters(join_name(prefix, "trunk.0"), out);
  } else {
    trunks_[1].collect_parameters(join_name(prefix, "trunk.1"), out);
    trunks_[2].collect_parameters(join_name(prefix, "trunk.2"), out);
  }
  category_head_.collect_parameters(join_name(prefix, "category_head"), out);
  attribute_head_.collect_parameters(join_name(prefix, "attribute_head"), out);
  return out;
}

void ObjectDiscriminator::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  for (size_t i = 0; i < trunks_.size(); ++i)
    trunks_[i].collect_parameters(join_name(prefix, "trunk." + std::to_string(i)), out);
  real_head_.collect_parameters(join_name(prefix, "real_head"), out);
  category_head_.collect_parameters(join_name(prefix, "category_head"), out);
  attribute_head_.collect_parameters(join_name(prefix, "attribute_head"), out);
}

}  // namespace attrgan
