#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrgan/losses.hpp"
#include "attrgan/nn/ops.hpp"

namespace attrgan {

struct ModelConfig {
  int canvas = 64;
  int object_size = 32;
  int num_categories = 178;
  int num_attributes = 106;

  int embed_dim = 64;   // category table width and joint embedding output
  int latent_dim = 64;  // z
  std::vector<int> mlp_hidden{128, 96};

  int compose_grid = 64;  // S
  int fused_grid = 8;     // spatial size of H
  std::vector<int> object_encoder_channels{64, 128};  // then C_H at the fused grid
  int channels_h = 256;
  int channels_g = 128;
  // decoder_channels[0] is the width at the fused grid, then one entry per
  // upsampling stage up to the canvas.
  std::vector<int> decoder_channels{512, 256, 128, 64};
  int spade_hidden = 128;
  nn::NormMode norm = nn::NormMode::kBatch;
  double norm_momentum = 0.1;

  std::vector<int> crop_encoder_channels{64, 128, 256, 256};
  std::vector<int> image_disc_channels{64, 128, 256, 512};
  std::vector<int> object_disc_channels{64, 128, 256};
  bool shared_trunk = true;

  // Number of stride-2 steps between two power-of-two sizes; throws otherwise.
  static int halvings(int from, int to);
  void validate() const;
};

ModelConfig paper64_model();
ModelConfig paper128_model();
ModelConfig desk_model();
// Tiny shapes for gradient checks.
ModelConfig miniature_model();

struct TrainingConfig {
  std::string preset = "desk";
  ModelConfig model = desk_model();
  int batch_size = 8;
  double learning_rate = 1e-4;
  double disc_learning_rate = 1e-4;
  double beta1 = 0.5, beta2 = 0.999;
  double clip_norm = 10.0;
  int iterations = 2000;
  LossWeights weights;
  double p_replace = 0.3;
  double shift_magnitude = 0.3;
  bool global_shift = false;
  std::uint64_t seed = 0;
  int checkpoint_every = 500;

  void validate() const;
};

TrainingConfig preset_training(const std::string& preset);

std::string model_config_json(const ModelConfig& c);
ModelConfig parse_model_config(const std::string& text);
std::string training_config_json(const TrainingConfig& c);
// Fields present in `text` override `base`.
TrainingConfig parse_training_config(const std::string& text, const TrainingConfig& base);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace attrgan
