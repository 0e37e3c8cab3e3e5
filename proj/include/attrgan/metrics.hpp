#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrgan/discriminator.hpp"
#include "attrgan/example.hpp"
#include "attrgan/layout.hpp"
#include "attrgan/nn/layers.hpp"

namespace attrgan {

// One layer of features for one image, [channels, height, width].
struct FeatureGrid {
  int channels = 0, height = 0, width = 0;
  std::vector<double> values;
  int cells() const { return height * width; }
};

// Fixed image -> per-layer features map. Deterministic; at least one layer.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // image [1,3,H,W] in [-1,1].
  virtual std::vector<FeatureGrid> extract(const Tensor& image) const = 0;
  // Side length object crops are resized to before extraction.
  virtual int crop_size() const = 0;
};

// Raw pixels followed by `levels - 1` successive 2x2 average poolings.
// Stand-in extractor when no trained classifier is available.
class PixelFeatures : public FeatureExtractor {
 public:
  explicit PixelFeatures(int crop_size = 16, int levels = 3);
  std::vector<FeatureGrid> extract(const Tensor& image) const override;
  int crop_size() const override { return crop_size_; }

 private:
  int crop_size_, levels_;
};

// Per layer: unit-normalize each cell over channels, squared L2 per cell,
// mean over cells; then mean over layers. `masks`, when given, holds one
// keep-flag per cell per layer; dropped cells leave the spatial mean and
// layers without any kept cell leave the layer mean.
double perceptual_distance(std::span<const FeatureGrid> a, std::span<const FeatureGrid> b,
                           const std::vector<std::vector<char>>* masks = nullptr);
double perceptual_distance(const Tensor& image_a, const Tensor& image_b, const FeatureExtractor& fx);

struct MeanStd {
  double mean = 0, std = 0;  // population standard deviation
};

// Paired images (each [1,3,H,W]).
MeanStd diversity_score(std::span<const Tensor> set_a, std::span<const Tensor> set_b,
                        const FeatureExtractor& fx);

struct Consistency {
  double bg = 1, fg = 1;
  bool has_background = true;  // false when the boxes leave no background cell
};

// fg: mean over objects of 1 - d(crop(I, box_i), crop(I_shift, shifted box_i)).
// bg: 1 - d over the cells outside every original and shifted box. Both
// clamped to [0, 1].
Consistency consistency_score(const Tensor& image, const Tensor& shifted_image, const Layout& layout,
                              const ShiftSpec& shifts, const FeatureExtractor& fx);
// Same, with the shifted layout already computed.
Consistency consistency_score(const Tensor& image, const Tensor& shifted_image, const Layout& layout,
                              const Layout& shifted_layout, const FeatureExtractor& fx);

struct RecallPrecision {
  double recall = 0, precision = 0;
  long true_positives = 0, predicted = 0, actual = 0;
};

// Micro-averaged over (object, attribute) pairs; present iff
// sigmoid(logit) > threshold. Ratios with a zero denominator are 0.
RecallPrecision attribute_recall_precision(const Tensor& attribute_logits,
                                           std::span<const std::vector<int>> ground_truth,
                                           double threshold = 0.5);

// Fraction of rows whose argmax equals the label.
double object_accuracy(const Tensor& category_logits, std::span<const int> labels);

struct FrechetResult {
  double distance = 0;
  bool regularized = false;  // covariances were rank deficient; +1e-6 I added
};

// Rows are samples. ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
FrechetResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// ---- attribute classifier ----

struct ClassifierConfig {
  int object_size = 16;
  std::vector<int> widths{32, 64, 128};
  int steps = 1500;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// Category and attribute classifier on object crops, trained on real crops
// only. Its trunk doubles as the feature extractor for the perceptual
// metrics.
class AttributeClassifier : public nn::Module, public FeatureExtractor {
 public:
  AttributeClassifier() = default;
  AttributeClassifier(const ClassifierConfig& config, int num_categories, int num_attributes, Rng& rng);

  struct Logits {
    Tensor categories, attributes;
  };
  Logits operator()(const Tensor& crops) const;

  std::vector<FeatureGrid> extract(const Tensor& image) const override;
  int crop_size() const override { return config_.object_size; }

  const ClassifierConfig& config() const { return config_; }
  void collect_parameters(const std::string& prefix, nn::NamedTensors& out) const override;

 private:
  ClassifierConfig config_;
  ConvTrunk trunk_;
  nn::Linear category_head_, attribute_head_;
};

AttributeClassifier train_classifier(std::span<const Example> data, const Vocabularies& vocab,
                                     const ClassifierConfig& config, std::ostream* log = nullptr);

void save_classifier(const AttributeClassifier& classifier, const Vocabularies& vocab,
                     const std::filesystem::path& path);
struct LoadedClassifier {
  AttributeClassifier classifier;
  Vocabularies vocab;
};
LoadedClassifier load_classifier(const std::filesystem::path& path);

// ---- evaluation over image sets ----

struct ClassificationScores {
  double object_accuracy = 0;
  RecallPrecision attributes;
  int objects = 0;
};

// Crops every object of layouts[i] out of images[i] ([1,3,H,W] each).
ClassificationScores classify_objects(std::span<const Tensor> images, std::span<const Layout> layouts,
                                      const AttributeClassifier& classifier, double threshold = 0.5);

struct EvalReport {
  double object_accuracy = 0;
  double attribute_recall = 0, attribute_precision = 0;
  std::optional<MeanStd> diversity;
  std::optional<Consistency> consistency;           // means over images
  std::optional<Consistency> consistency_baseline;  // against unrelated images
  std::optional<double> frechet;
  int images = 0, objects = 0;
};

std::string eval_report_json(const EvalReport& report);

// Scores images generated by `generator` (used as is; put it in eval mode)
// for `layouts` with GT attributes. Per layout: an image from prior codes, a
// second image with fresh codes (diversity) and one for a shifted layout with
// the same codes (consistency). The baseline pairs each image with the
// shifted image of the next layout.
class Generator;
EvalReport evaluate_generator(const Generator& generator, std::span<const Layout> layouts,
                              const AttributeClassifier& classifier, std::uint64_t seed,
                              double shift_magnitude = 0.3);

// ---- exported feature files ----

// Binary little-endian array dump plus a JSON sidecar `<file>.json`:
// {"dtype": "float32" | "float64", "layers": [{"name": ..., "shape": [n, d]}, ...]}
// with the layers stored one after another, row major.
struct FeatureFile {
  std::vector<std::string> layers;
  std::vector<Eigen::MatrixXd> values;  // one [n, d] matrix per layer
};
FeatureFile read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureFile& file);

}  // namespace attrgan
