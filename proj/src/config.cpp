#include "attrgan/config.hpp"

#include <cstdio>
#include <nlohmann/json.hpp>

#include "attrgan/errors.hpp"

namespace attrgan {

using nlohmann::json;
using nlohmann::ordered_json;

int ModelConfig::halvings(int from, int to) {
  require(from > 0 && to > 0 && from >= to && from % to == 0, ErrorCode::kInvalidArgument,
          "sizes " + std::to_string(from) + " -> " + std::to_string(to) + " are not a halving chain");
  int n = 0;
  while (from > to) {
    require(from % 2 == 0, ErrorCode::kInvalidArgument,
            "size " + std::to_string(from) + " is not a power-of-two multiple of " + std::to_string(to));
    from /= 2;
    ++n;
  }
  return n;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    require(v > 0, ErrorCode::kInvalidArgument, std::string(name) + " must be positive");
  };
  positive(canvas, "canvas");
  positive(object_size, "object_size");
  positive(num_categories, "num_categories");
  positive(num_attributes, "num_attributes");
  positive(embed_dim, "embed_dim");
  positive(latent_dim, "latent_dim");
  positive(channels_h, "channels_h");
  positive(channels_g, "channels_g");
  positive(spade_hidden, "spade_hidden");
  const int enc = halvings(compose_grid, fused_grid);
  require(enc >= 1, ErrorCode::kInvalidArgument, "compose_grid must exceed fused_grid");
  require(static_cast<int>(object_encoder_channels.size()) == enc - 1, ErrorCode::kInvalidArgument,
          "object_encoder_channels needs " + std::to_string(enc - 1) + " entries");
  const int dec = halvings(canvas, fused_grid);
  require(static_cast<int>(decoder_channels.size()) == dec + 1, ErrorCode::kInvalidArgument,
          "decoder_channels needs " + std::to_string(dec + 1) + " entries");
  require(!crop_encoder_channels.empty() && !image_disc_channels.empty() &&
              !object_disc_channels.empty(),
          ErrorCode::kInvalidArgument, "encoder/discriminator channel lists must be non-empty");
  for (const auto* list : {&mlp_hidden, &object_encoder_channels, &decoder_channels,
                           &crop_encoder_channels, &image_disc_channels, &object_disc_channels})
    for (int v : *list) positive(v, "channel width");
  require(norm_momentum > 0 && norm_momentum <= 1, ErrorCode::kInvalidArgument,
          "norm_momentum must lie in (0,1]");
}

ModelConfig paper64_model() { return ModelConfig{}; }

ModelConfig paper128_model() {
  ModelConfig c;
  c.canvas = 128;
  c.object_size = 64;
  c.compose_grid = 128;
  c.object_encoder_channels = {32, 64, 128};
  c.decoder_channels = {512, 256, 128, 64, 32};
  c.crop_encoder_channels = {32, 64, 128, 256, 256};
  c.image_disc_channels = {32, 64, 128, 256, 512};
  c.object_disc_channels = {32, 64, 128, 256};
  return c;
}

ModelConfig desk_model() {
  ModelConfig c;
  c.canvas = 32;
  c.object_size = 16;
  c.num_categories = 3;
  c.num_attributes = 7;
  c.compose_grid = 32;
  c.fused_grid = 4;
  c.object_encoder_channels = {32, 32};
  c.channels_h = 32;
  c.channels_g = 16;
  c.decoder_channels = {64, 64, 32, 16};
  c.spade_hidden = 32;
  c.crop_encoder_channels = {32, 64, 64, 64};
  c.image_disc_channels = {32, 64, 64};
  c.object_disc_channels = {32, 64, 64};
  return c;
}

ModelConfig miniature_model() {
  ModelConfig c;
  c.canvas = 8;
  c.object_size = 4;
  c.num_categories = 3;
  c.num_attributes = 4;
  c.embed_dim = 8;
  c.latent_dim = 8;
  c.mlp_hidden = {8, 8};
  c.compose_grid = 8;
  c.fused_grid = 4;
  c.object_encoder_channels = {};
  c.channels_h = 8;
  c.channels_g = 4;
  c.decoder_channels = {8, 4};
  c.spade_hidden = 4;
  c.norm = nn::NormMode::kInstance;
  c.crop_encoder_channels = {4, 4};
  c.image_disc_channels = {4, 4};
  c.object_disc_channels = {4, 4};
  return c;
}

void TrainingConfig::validate() const {
  model.validate();
  weights.validate();
  require(batch_size > 0, ErrorCode::kInvalidArgument, "batch_size must be positive");
  require(learning_rate > 0 && disc_learning_rate > 0, ErrorCode::kInvalidArgument,
          "learning rates must be positive");
  require(iterations >= 0, ErrorCode::kInvalidArgument, "iterations must be nonnegative");
  require(p_replace >= 0 && p_replace <= 1, ErrorCode::kInvalidArgument, "p_replace outside [0,1]");
  require(shift_magnitude >= 0 && shift_magnitude <= 1, ErrorCode::kInvalidArgument,
          "shift_magnitude outside [0,1]");
  require(checkpoint_every > 0, ErrorCode::kInvalidArgument, "checkpoint_every must be positive");
}

TrainingConfig preset_training(const std::string& preset) {
  TrainingConfig c;
  c.preset = preset;
  if (preset == "desk") {
    c.model = desk_model();
    c.batch_size = 8;
    c.learning_rate = 1e-3;
    c.disc_learning_rate = 1e-3;
    c.iterations = 2000;
  } else if (preset == "paper64") {
    c.model = paper64_model();
    c.batch_size = 6;
    c.iterations = 300000;
    c.checkpoint_every = 10000;
  } else if (preset == "paper128") {
    c.model = paper128_model();
    c.batch_size = 6;
    c.iterations = 300000;
    c.checkpoint_every = 10000;
  } else if (preset == "miniature") {
    c.model = miniature_model();
    c.batch_size = 2;
    c.iterations = 100;
    c.checkpoint_every = 50;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown preset '" + preset + "'");
  }
  return c;
}

namespace {

const char* norm_name(nn::NormMode m) {
  switch (m) {
    case nn::NormMode::kBatch: return "batch";
    case nn::NormMode::kInstance: return "instance";
    case nn::NormMode::kRunning: return "running";
  }
  return "batch";
}

nn::NormMode norm_from(const std::string& s) {
  if (s == "batch") return nn::NormMode::kBatch;
  if (s == "instance") return nn::NormMode::kInstance;
  if (s == "running") return nn::NormMode::kRunning;
  fail(ErrorCode::kSchemaError, "unknown norm mode '" + s + "'");
}

ordered_json model_json(const ModelConfig& c) {
  ordered_json j;
  j["canvas"] = c.canvas;
  j["object_size"] = c.object_size;
  j["num_categories"] = c.num_categories;
  j["num_attributes"] = c.num_attributes;
  j["embed_dim"] = c.embed_dim;
  j["latent_dim"] = c.latent_dim;
  j["mlp_hidden"] = c.mlp_hidden;
  j["compose_grid"] = c.compose_grid;
  j["fused_grid"] = c.fused_grid;
  j["object_encoder_channels"] = c.object_encoder_channels;
  j["channels_h"] = c.channels_h;
  j["channels_g"] = c.channels_g;
  j["decoder_channels"] = c.decoder_channels;
  j["spade_hidden"] = c.spade_hidden;
  j["norm"] = norm_name(c.norm);
  j["norm_momentum"] = c.norm_momentum;
  j["crop_encoder_channels"] = c.crop_encoder_channels;
  j["image_disc_channels"] = c.image_disc_channels;
  j["object_disc_channels"] = c.object_disc_channels;
  j["shared_trunk"] = c.shared_trunk;
  return j;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, std::string("config field '") + key + "': " + e.what());
  }
}

ModelConfig model_from(const json& j, ModelConfig c) {
  if (!j.is_object()) fail(ErrorCode::kSchemaError, "model config must be an object");
  read(j, "canvas", c.canvas);
  read(j, "object_size", c.object_size);
  read(j, "num_categories", c.num_categories);
  read(j, "num_attributes", c.num_attributes);
  read(j, "embed_dim", c.embed_dim);
  read(j, "latent_dim", c.latent_dim);
  read(j, "mlp_hidden", c.mlp_hidden);
  read(j, "compose_grid", c.compose_grid);
  read(j, "fused_grid", c.fused_grid);
  read(j, "object_encoder_channels", c.object_encoder_channels);
  read(j, "channels_h", c.channels_h);
  read(j, "channels_g", c.channels_g);
  read(j, "decoder_channels", c.decoder_channels);
  read(j, "spade_hidden", c.spade_hidden);
  std::string norm = norm_name(c.norm);
  read(j, "norm", norm);
  c.norm = norm_from(norm);
  read(j, "norm_momentum", c.norm_momentum);
  read(j, "crop_encoder_channels", c.crop_encoder_channels);
  read(j, "image_disc_channels", c.image_disc_channels);
  read(j, "object_disc_channels", c.object_disc_channels);
  read(j, "shared_trunk", c.shared_trunk);
  return c;
}

json parse_or_fail(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, std::string("config: ") + e.what());
  }
}

}  // namespace

std::string model_config_json(const ModelConfig& c) { return model_json(c).dump(); }

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c = model_from(parse_or_fail(text), ModelConfig{});
  c.validate();
  return c;
}

std::string training_config_json(const TrainingConfig& c) {
  ordered_json j;
  j["preset"] = c.preset;
  j["model"] = model_json(c.model);
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["disc_learning_rate"] = c.disc_learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["clip_norm"] = c.clip_norm;
  j["iterations"] = c.iterations;
  j["weights"] = {{"adv_img", c.weights.adv_img},     {"adv_obj", c.weights.adv_obj},
                  {"obj_cls", c.weights.obj_cls},     {"attr_cls", c.weights.attr_cls},
                  {"kl", c.weights.kl},               {"img_recon", c.weights.img_recon},
                  {"latent_recon", c.weights.latent_recon}};
  j["p_replace"] = c.p_replace;
  j["shift_magnitude"] = c.shift_magnitude;
  j["global_shift"] = c.global_shift;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  return j.dump();
}

TrainingConfig parse_training_config(const std::string& text, const TrainingConfig& base) {
  const json j = parse_or_fail(text);
  if (!j.is_object()) fail(ErrorCode::kSchemaError, "training config must be an object");
  TrainingConfig c = base;
  if (auto it = j.find("preset"); it != j.end() && it->is_string() && it->get<std::string>() != c.preset)
    c = preset_training(it->get<std::string>());
  if (auto it = j.find("model"); it != j.end()) c.model = model_from(*it, c.model);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "disc_learning_rate", c.disc_learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "clip_norm", c.clip_norm);
  read(j, "iterations", c.iterations);
  if (auto it = j.find("weights"); it != j.end()) {
    read(*it, "adv_img", c.weights.adv_img);
    read(*it, "adv_obj", c.weights.adv_obj);
    read(*it, "obj_cls", c.weights.obj_cls);
    read(*it, "attr_cls", c.weights.attr_cls);
    read(*it, "kl", c.weights.kl);
    read(*it, "img_recon", c.weights.img_recon);
    read(*it, "latent_recon", c.weights.latent_recon);
  }
  read(j, "p_replace", c.p_replace);
  read(j, "shift_magnitude", c.shift_magnitude);
  read(j, "global_shift", c.global_shift);
  read(j, "seed", c.seed);
  read(j, "checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace attrgan
