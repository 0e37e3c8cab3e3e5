#include "attrgan/embedding.hpp"

#include "attrgan/errors.hpp"

namespace attrgan {

using namespace nn;

std::vector<double> encode_attributes(std::span<const int> attributes, int num_attributes) {
  std::vector<double> e(static_cast<size_t>(num_attributes), 0.0);
  for (int a : attributes) {
    require(a >= 0 && a < num_attributes, ErrorCode::kUnknownIndex,
            "attribute " + std::to_string(a) + " outside vocabulary of " +
                std::to_string(num_attributes));
    require(e[static_cast<size_t>(a)] == 0.0, ErrorCode::kDuplicateAttribute,
            "attribute " + std::to_string(a) + " repeated");
    e[static_cast<size_t>(a)] = 1.0;
  }
  return e;
}

Tensor encode_attribute_batch(const std::vector<std::vector<int>>& attributes, int num_attributes) {
  std::vector<double> out;
  out.reserve(attributes.size() * static_cast<size_t>(num_attributes));
  for (const auto& a : attributes) {
    auto row = encode_attributes(a, num_attributes);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::from({static_cast<int>(attributes.size()), num_attributes}, std::move(out));
}

Embedding::Embedding(const ModelConfig& config, Rng& rng) : num_attributes_(config.num_attributes) {
  std::vector<double> t(static_cast<size_t>(config.num_categories) * config.embed_dim);
  for (double& v : t) v = 0.02 * rng.normal();
  table_ = Tensor::parameter({config.num_categories, config.embed_dim}, std::move(t));
  int in = config.embed_dim + config.num_attributes;
  for (int h : config.mlp_hidden) {
    mlp_.emplace_back(in, h, rng);
    in = h;
  }
  mlp_.emplace_back(in, config.embed_dim, rng);
}

Tensor Embedding::operator()(std::span<const int> categories, const Tensor& attributes) const {
  require(attributes.rank() == 2 && attributes.dim(0) == static_cast<int>(categories.size()) &&
              attributes.dim(1) == num_attributes_,
          ErrorCode::kShapeMismatch,
          "embedding: attributes " + shape_string(attributes.shape()) + " for " +
              std::to_string(categories.size()) + " categories");
  for (int c : categories)
    require(c >= 0 && c < table_.dim(0), ErrorCode::kUnknownIndex,
            "category " + std::to_string(c) + " outside vocabulary of " + std::to_string(table_.dim(0)));
  Tensor x = concat({gather_rows(table_, categories), attributes}, 1);
  for (size_t i = 0; i < mlp_.size(); ++i) {
    x = mlp_[i](x);
    if (i + 1 < mlp_.size()) x = leaky_relu(x);
  }
  return x;
}

Tensor Embedding::joint(int category, std::span<const int> attributes) const {
  return (*this)(std::span<const int>(&category, 1),
                 Tensor::from({1, num_attributes_}, encode_attributes(attributes, num_attributes_)));
}

void Embedding::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  out.push_back({join_name(prefix, "table"), table_});
  for (size_t i = 0; i < mlp_.size(); ++i)
    mlp_[i].collect_parameters(join_name(prefix, "mlp." + std::to_string(i)), out);
}

Tensor sample_latent_prior(int m, int latent_dim, Rng& rng) {
  require(m >= 1, ErrorCode::kEmptyObjectList, "need at least one latent code");
  std::vector<double> z(static_cast<size_t>(m) * latent_dim);
  for (double& v : z) v = rng.normal();
  return Tensor::from({m, latent_dim}, std::move(z));
}

CropEncoder::CropEncoder(const ModelConfig& config, Rng& rng) : object_size_(config.object_size) {
  int in = 3;
  for (int c : config.crop_encoder_channels) {
    convs_.emplace_back(in, c, 3, 2, 1, rng);
    in = c;
  }
  mu_ = Linear(in, config.latent_dim, rng);
  logvar_ = Linear(in, config.latent_dim, rng);
}

Posterior CropEncoder::operator()(const Tensor& crops) const {
  require(crops.rank() == 4 && crops.dim(1) == 3 && crops.dim(2) == object_size_ &&
              crops.dim(3) == object_size_,
          ErrorCode::kShapeMismatch,
          "crop encoder expects [n,3," + std::to_string(object_size_) + "," +
              std::to_string(object_size_) + "], got " + shape_string(crops.shape()));
  Tensor x = crops;
  for (const auto& c : convs_) x = leaky_relu(c(x));
  Tensor f = global_avg_pool(x);
  return {mu_(f), clamp(logvar_(f), -10.0, 10.0)};
}

void CropEncoder::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].collect_parameters(join_name(prefix, "conv." + std::to_string(i)), out);
  mu_.collect_parameters(join_name(prefix, "mu"), out);
  logvar_.collect_parameters(join_name(prefix, "logvar"), out);
}

Tensor reparameterize(const Posterior& p, const Tensor& eps) {
  require(p.mu.shape() == eps.shape() && p.logvar.shape() == eps.shape(), ErrorCode::kShapeMismatch,
          "reparameterize: eps " + shape_string(eps.shape()) + " vs mu " +
              shape_string(p.mu.shape()));
  return add(p.mu, mul(exp(scale(p.logvar, 0.5)), eps));
}

}  // namespace attrgan
