#include "attrgan/generator.hpp"

#include "attrgan/errors.hpp"

namespace attrgan {

using namespace nn;

GenBatch make_gen_batch(std::span<const Layout> layouts) {
  GenBatch b;
  for (const auto& l : layouts) {
    require(!l.objects.empty(), ErrorCode::kEmptyLayout, "layout has no objects");
    for (const auto& o : l.objects) {
      b.categories.push_back(o.category);
      b.attributes.push_back(o.attributes);
      b.boxes.push_back(o.bbox);
    }
    b.counts.push_back(l.size());
  }
  return b;
}

GenBatch make_gen_batch(const Layout& layout, const AttributeOverrides& overrides) {
  GenBatch b = make_gen_batch(std::span<const Layout>(&layout, 1));
  require(overrides.empty() || overrides.size() == layout.objects.size(), ErrorCode::kLengthMismatch,
          "attribute overrides must match the object count");
  for (size_t i = 0; i < overrides.size(); ++i)
    if (overrides[i]) b.attributes[i] = *overrides[i];
  return b;
}

Tensor compose_feature_map(const ObjectSpec& obj, const Tensor& v, int grid) {
  require(v.rank() == 2 && v.dim(0) == 1, ErrorCode::kShapeMismatch,
          "compose_feature_map expects one [1,D] vector");
  const CellRect r = bbox_to_grid(obj.bbox, grid);
  return fill_boxes(v, std::span<const CellRect>(&r, 1), grid);
}

Spade::Spade(int channels, int h_channels, int hidden, Rng& rng)
    : shared_(h_channels, hidden, 3, 1, 1, rng),
      modulation_(hidden, 2 * channels, 3, 1, 1, rng),
      running_mean_(Tensor::zeros({channels})),
      running_var_(Tensor::full({channels}, 1.0)),
      channels_(channels) {}

Tensor Spade::normalized(const Tensor& x, NormMode mode) const {
  require(x.rank() == 4 && x.dim(1) == channels_, ErrorCode::kShapeMismatch,
          "spade: input " + shape_string(x.shape()) + " for " + std::to_string(channels_) +
              " channels");
  return normalize(x, mode, running_mean_.data(), running_var_.data());
}

Tensor Spade::operator()(const Tensor& x, const Tensor& h, NormMode mode, bool update_running,
                         double momentum) const {
  require(x.rank() == 4 && x.dim(1) == channels_, ErrorCode::kShapeMismatch,
          "spade: input " + shape_string(x.shape()) + " for " + std::to_string(channels_) +
              " channels");
  require(h.rank() == 4 && h.dim(0) == x.dim(0), ErrorCode::kShapeMismatch,
          "spade: layout map " + shape_string(h.shape()) + " vs input " + shape_string(x.shape()));
  NormStats stats;
  Tensor xhat = normalize(x, mode, running_mean_.data(), running_var_.data(),
                          mode == NormMode::kBatch ? &stats : nullptr);
  if (update_running && mode == NormMode::kBatch) {
    // Unbiased variance for the running estimate.
    const double count = static_cast<double>(x.dim(0)) * x.dim(2) * x.dim(3);
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    Tensor mean_buf = running_mean_, var_buf = running_var_;  // shared storage
    auto rm = mean_buf.mutable_data();
    auto rv = var_buf.mutable_data();
    for (int c = 0; c < channels_; ++c) {
      rm[static_cast<size_t>(c)] =
          (1 - momentum) * rm[static_cast<size_t>(c)] + momentum * stats.mean[static_cast<size_t>(c)];
      rv[static_cast<size_t>(c)] = (1 - momentum) * rv[static_cast<size_t>(c)] +
                                   momentum * stats.var[static_cast<size_t>(c)] * unbias;
    }
  }
  // shared_(resize_nearest(h)) without materializing the resized map
  Tensor a = relu(resized_conv2d(h, x.dim(2), x.dim(3), shared_.weight(), shared_.bias(), 1));
  Tensor gb = modulation_(a);
  Tensor gamma = narrow(gb, 0, channels_);
  Tensor beta = narrow(gb, channels_, channels_);
  return add(mul(xhat, add_scalar(gamma, 1.0)), beta);
}

void Spade::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  shared_.collect_parameters(join_name(prefix, "shared"), out);
  modulation_.collect_parameters(join_name(prefix, "modulation"), out);
}

void Spade::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "running_mean"), running_mean_});
  out.push_back({join_name(prefix, "running_var"), running_var_});
}

Generator::Generator(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  embedding_ = Embedding(config_, rng);
  const int d = config_.embed_dim + config_.latent_dim;
  std::vector<int> widths = config_.object_encoder_channels;
  widths.push_back(config_.channels_h);
  int in = d;
  for (int w : widths) {
    object_encoder_.emplace_back(in, w, 3, 2, 1, rng);
    in = w;
  }
  const int ch = config_.channels_h, cg = config_.channels_g;
  lstm_ = Conv2d(2 * ch, 4 * ch, 3, 1, 1, rng);
  context1_ = Conv2d(ch, cg, 3, 2, 1, rng);
  context2_ = Conv2d(cg, cg, 3, 2, 1, rng);
  const auto& dc = config_.decoder_channels;
  decoder_in_ = Conv2d(ch + cg, dc[0], 3, 1, 1, rng);
  spades_.emplace_back(dc[0], ch, config_.spade_hidden, rng);
  for (size_t s = 1; s < dc.size(); ++s) {
    decoder_.emplace_back(dc[s - 1], dc[s], 3, 1, 1, rng);
    spades_.emplace_back(dc[s], ch, config_.spade_hidden, rng);
  }
  to_rgb_ = Conv2d(dc.back(), 3, 3, 1, 1, rng);
}

NormMode Generator::active_norm() const {
  if (config_.norm == NormMode::kBatch) return training_ ? NormMode::kBatch : NormMode::kRunning;
  return config_.norm;
}

Tensor Generator::object_vectors(const GenBatch& batch, const Tensor& z) const {
  require(z.rank() == 2 && z.dim(0) == batch.size() && z.dim(1) == config_.latent_dim,
          ErrorCode::kLengthMismatch,
          "latent codes " + shape_string(z.shape()) + " for " + std::to_string(batch.size()) +
              " objects");
  Tensor e = encode_attribute_batch(batch.attributes, config_.num_attributes);
  return concat({embedding_(batch.categories, e), z}, 1);
}

Tensor Generator::encode_objects(const Tensor& canvases) const {
  const int d = config_.embed_dim + config_.latent_dim, s = config_.compose_grid;
  require(canvases.rank() == 4 && canvases.dim(1) == d && canvases.dim(2) == s && canvases.dim(3) == s,
          ErrorCode::kShapeMismatch,
          "object encoder expects [n," + std::to_string(d) + "," + std::to_string(s) + "," +
              std::to_string(s) + "], got " + shape_string(canvases.shape()));
  Tensor x = canvases;
  for (size_t i = 0; i < object_encoder_.size(); ++i) {
    x = object_encoder_[i](x);
    if (i + 1 < object_encoder_.size()) x = leaky_relu(x);
  }
  return x;
}

Tensor Generator::encode_boxes(const Tensor& vectors, std::span<const BBox> boxes) const {
  require(vectors.rank() == 2 && vectors.dim(0) == static_cast<int>(boxes.size()),
          ErrorCode::kLengthMismatch, "one box per object vector");
  std::vector<CellRect> rects;
  rects.reserve(boxes.size());
  for (const auto& b : boxes) rects.push_back(bbox_to_grid(b, config_.compose_grid));
  const Conv2d& first = object_encoder_[0];
  Tensor x = box_conv2d(vectors, rects, config_.compose_grid, first.weight(), first.bias(), 2, 1);
  for (size_t i = 1; i < object_encoder_.size(); ++i) {
    x = object_encoder_[i](leaky_relu(x));
  }
  return x;
}

Tensor Generator::fuse_objects(const Tensor& encoded, std::span<const int> counts) const {
  require(!counts.empty(), ErrorCode::kEmptyObjectList, "no images to fuse");
  const int ch = config_.channels_h, g = config_.fused_grid;
  require(encoded.rank() == 4 && encoded.dim(1) == ch && encoded.dim(2) == g && encoded.dim(3) == g,
          ErrorCode::kShapeMismatch, "fuser input " + shape_string(encoded.shape()));
  std::vector<int> offsets;
  int total = 0, longest = 0;
  for (int c : counts) {
    require(c >= 1, ErrorCode::kEmptyObjectList, "an image has no objects to fuse");
    offsets.push_back(total);
    total += c;
    longest = std::max(longest, c);
  }
  require(total == encoded.dim(0), ErrorCode::kLengthMismatch,
          "fuser: counts sum to " + std::to_string(total) + " for " + std::to_string(encoded.dim(0)) +
              " encoded objects");
  const int b = static_cast<int>(counts.size());
  const int plane = ch * g * g;
  Tensor h = Tensor::zeros({b, ch, g, g});
  Tensor c = Tensor::zeros({b, ch, g, g});
  for (int t = 0; t < longest; ++t) {
    std::vector<int> rows(static_cast<size_t>(b));
    std::vector<char> active(static_cast<size_t>(b) * plane);
    bool all = true;
    for (int i = 0; i < b; ++i) {
      const bool on = t < counts[static_cast<size_t>(i)];
      rows[static_cast<size_t>(i)] = on ? offsets[static_cast<size_t>(i)] + t : -1;
      std::fill_n(active.begin() + static_cast<long>(i) * plane, plane, on ? 1 : 0);
      all = all && on;
    }
    Tensor x = gather_rows(encoded, rows);
    Tensor gates = lstm_(concat({x, h}, 1));
    Tensor in = sigmoid(narrow(gates, 0, ch));
    Tensor forget = sigmoid(narrow(gates, ch, ch));
    Tensor out = sigmoid(narrow(gates, 2 * ch, ch));
    Tensor cand = tanh(narrow(gates, 3 * ch, ch));
    Tensor c_new = add(mul(forget, c), mul(in, cand));
    Tensor h_new = mul(out, tanh(c_new));
    if (all) {
      c = c_new;
      h = h_new;
    } else {
      c = select(active, c_new, c);
      h = select(active, h_new, h);
    }
  }
  return h;
}

Tensor Generator::global_context_vector(const Tensor& h) const {
  require(h.rank() == 4 && h.dim(1) == config_.channels_h && h.dim(2) == config_.fused_grid &&
              h.dim(3) == config_.fused_grid,
          ErrorCode::kShapeMismatch, "context encoder input " + shape_string(h.shape()));
  return global_avg_pool(leaky_relu(context2_(leaky_relu(context1_(h)))));
}

Tensor Generator::encode_global_context(const Tensor& h) const {
  Tensor g = global_context_vector(h);
  return concat({h, broadcast_spatial(g, h.dim(2), h.dim(3))}, 1);
}

Tensor Generator::spade_block(size_t index, const Tensor& x, const Tensor& h) const {
  const bool update = training_ && grad_enabled() && config_.norm == NormMode::kBatch;
  return leaky_relu(spades_[index](x, h, active_norm(), update, config_.norm_momentum));
}

Tensor Generator::decode(const Tensor& hg, const Tensor& h) const {
  const int ch = config_.channels_h, cg = config_.channels_g, g = config_.fused_grid;
  require(hg.rank() == 4 && hg.dim(1) == ch + cg && hg.dim(2) == g && hg.dim(3) == g,
          ErrorCode::kShapeMismatch, "decoder input " + shape_string(hg.shape()));
  require(h.rank() == 4 && h.dim(0) == hg.dim(0) && h.dim(1) == ch, ErrorCode::kShapeMismatch,
          "decoder layout map " + shape_string(h.shape()));
  Tensor x = spade_block(0, decoder_in_(hg), h);
  for (size_t s = 0; s < decoder_.size(); ++s)
    x = spade_block(s + 1, decoder_[s](upsample_nearest(x, 2)), h);
  return tanh(to_rgb_(x));
}

Tensor Generator::forward(const GenBatch& batch, const Tensor& z) const {
  require(batch.size() > 0, ErrorCode::kEmptyObjectList, "no objects to generate");
  Tensor v = object_vectors(batch, z);
  Tensor h = fuse_objects(encode_boxes(v, batch.boxes), batch.counts);
  return decode(encode_global_context(h), h);
}

Tensor Generator::generate(const Layout& layout, const Tensor& z,
                           const AttributeOverrides& overrides) const {
  validate_layout(layout, config_.num_categories, config_.num_attributes);
  require(layout.canvas.width == config_.canvas, ErrorCode::kInvalidCanvas,
          "layout canvas " + std::to_string(layout.canvas.width) + " but model canvas " +
              std::to_string(config_.canvas));
  GenBatch b = make_gen_batch(layout, overrides);
  for (const auto& a : b.attributes) {
    require(static_cast<int>(a.size()) <= kMaxAttributes, ErrorCode::kTooManyAttributes,
            "attribute override has " + std::to_string(a.size()) + " attributes");
  }
  return forward(b, z);
}

void Generator::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  embedding_.collect_parameters(join_name(prefix, "embedding"), out);
  for (size_t i = 0; i < object_encoder_.size(); ++i)
    object_encoder_[i].collect_parameters(join_name(prefix, "object_encoder." + std::to_string(i)), out);
  lstm_.collect_parameters(join_name(prefix, "fuser"), out);
  context1_.collect_parameters(join_name(prefix, "context.0"), out);
  context2_.collect_parameters(join_name(prefix, "context.1"), out);
  decoder_in_.collect_parameters(join_name(prefix, "decoder.in"), out);
  for (size_t i = 0; i < decoder_.size(); ++i)
    decoder_[i].collect_parameters(join_name(prefix, "decoder." + std::to_string(i)), out);
  for (size_t i = 0; i < spades_.size(); ++i)
    spades_[i].collect_parameters(join_name(prefix, "spade." + std::to_string(i)), out);
  to_rgb_.collect_parameters(join_name(prefix, "to_rgb"), out);
}

void Generator::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  for (size_t i = 0; i < spades_.size(); ++i)
    spades_[i].collect_buffers(join_name(prefix, "spade." + std::to_string(i)), out);
}

}  // namespace attrgan
