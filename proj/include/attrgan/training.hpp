#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "attrgan/config.hpp"
#include "attrgan/discriminator.hpp"
#include "attrgan/embedding.hpp"
#include "attrgan/example.hpp"
#include "attrgan/generator.hpp"
#include "attrgan/layout.hpp"
#include "attrgan/losses.hpp"
#include "attrgan/nn/optim.hpp"

namespace attrgan {

// Replaces each object's attribute set, independently with probability
// p_replace, by sample_attributes(prior, category, original count). The
// optional `replaced` receives one flag per object.
GenBatch disentangle_attributes(const GenBatch& batch, const AttributePrior& prior, double p_replace,
                                Rng& rng, std::vector<char>* replaced = nullptr);

struct PathInput {
  GenBatch batch;
  Tensor z;
};

// Set 1 reconstructs the image from posterior codes with GT attributes;
// sets 2 and 3 share one prior code tensor and one resampled attribute
// assignment, set 3 on the shifted layout.
struct TrainingTriple {
  PathInput rec, rand, shift;
  std::vector<Layout> layouts, shifted_layouts;
  Posterior posterior;
  Tensor real_crops;
};

// Every model the training procedure owns.
struct Models {
  Generator generator;
  CropEncoder encoder;
  ImageDiscriminator image_disc;
  ObjectDiscriminator object_disc;

  Models() = default;
  Models(const ModelConfig& config, Rng& rng);

  nn::NamedTensors generator_side() const;      // generator (incl. embedding) + encoder
  nn::NamedTensors discriminator_side() const;  // both discriminators + classifiers
  nn::NamedTensors all_parameters() const;
  nn::NamedTensors all_buffers() const;
};

// images [b,3,canvas,canvas] with layouts[i] describing image i. Randomness is
// drawn in a fixed order: shifts, posterior noise, prior codes, resampling.
TrainingTriple build_triple(const Tensor& images, std::span<const Layout> layouts,
                            const TrainingConfig& config, const Models& models,
                            const AttributePrior& prior, Rng& rng);

struct GeneratedPaths {
  Tensor rec, rand, shift;  // [b,3,canvas,canvas] each
};

// One generator pass over the three sets stacked along the batch.
GeneratedPaths generate_paths(const Generator& generator, const TrainingTriple& triple);

// Terms minimized by the discriminator side, evaluated on `fakes` as given
// (pass detached images). adv_* hold the minimax values.
LossTerms discriminator_terms(const Models& models, const Tensor& real_images,
                              const GeneratedPaths& fakes, const TrainingTriple& triple,
                              std::span<const double> attr_weights);
// Terms minimized by the generator side; adv_* hold the non-saturating form.
LossTerms generator_terms(const Models& models, const Tensor& real_images, const GeneratedPaths& fakes,
                          const TrainingTriple& triple, std::span<const double> attr_weights);

// One line of the metrics log.
struct StepReport {
  long step = 0;
  LossParts parts;  // generator-side values
  double generator_total = 0;
  double discriminator_total = 0;
  // Event order inside the step: "d_update", "g_backward", "g_update".
  std::vector<std::string> events;
};

std::string report_json(const StepReport& report);

class Trainer {
 public:
  Trainer(TrainingConfig config, Vocabularies vocab, AttributePrior prior);

  // Consumes one batch. Throws kNonFiniteLoss naming the first bad term.
  StepReport step(std::span<const Example> batch);
  // Draws the next batch from `data` (shuffled per epoch with the trainer's
  // data stream) and steps.
  StepReport step(std::span<const Example> data, std::vector<const Example*>* used);

  // Runs until `config.iterations`, appending one JSON line per step to `log`
  // and writing checkpoints every `checkpoint_every` steps (and at the end)
  // into `out_dir`. `on_step` may be empty.
  void train(std::span<const Example> data, const std::filesystem::path& out_dir, std::ostream& log,
             const std::function<void(const StepReport&)>& on_step = {});

  void save(const std::filesystem::path& path) const;
  static Trainer load(const std::filesystem::path& path);

  long iteration() const { return iteration_; }
  const TrainingConfig& config() const { return config_; }
  const Vocabularies& vocab() const { return vocab_; }
  const AttributePrior& prior() const { return prior_; }
  Models& models() { return models_; }
  const Models& models() const { return models_; }
  long discriminator_updates() const { return d_opt_.steps(); }
  long generator_updates() const { return g_opt_.steps(); }

 private:
  Trainer() = default;
  void init_optimizers();
  std::vector<const Example*> next_batch(std::span<const Example> data);

  TrainingConfig config_;
  Vocabularies vocab_;
  AttributePrior prior_;
  std::vector<double> attr_weights_;
  Models models_;
  nn::Adam g_opt_, d_opt_;
  Rng rng_, data_rng_;
  std::vector<int> order_;
  size_t cursor_ = 0;
  long iteration_ = 0;
};

// Checkpoint archive: 8-byte little-endian header length, a JSON header
// {"tensors": {name: {"shape", "offset"}}, "__metadata__": {...}}, then the
// float64 payload in little-endian order.
struct Archive {
  nn::NamedTensors tensors;
  std::string metadata;  // JSON text
};
void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

// Generator-only view of a checkpoint, for inference.
struct LoadedModel {
  TrainingConfig config;
  Vocabularies vocab;
  AttributePrior prior;
  Models models;
  long iteration = 0;
  std::string config_hash;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace attrgan
