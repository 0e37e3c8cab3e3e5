#include "attrgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "attrgan/embedding.hpp"
#include "attrgan/errors.hpp"
#include "attrgan/generator.hpp"
#include "attrgan/losses.hpp"
#include "attrgan/nn/ops.hpp"
#include "attrgan/nn/optim.hpp"
#include "attrgan/training.hpp"

namespace attrgan {

using nlohmann::json;
using nlohmann::ordered_json;
using nn::NamedTensors;

namespace {

void check_image(const Tensor& t, const char* what) {
  require(t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 3, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected [1,3,H,W], got " + nn::shape_string(t.shape()));
}

// Mean over kept cells of the squared distance between channel-normalized
// feature vectors. Returns -1 when no cell is kept.
double layer_distance(const FeatureGrid& a, const FeatureGrid& b, const std::vector<char>* keep) {
  const int cells = a.cells();
  double total = 0;
  int kept = 0;
  for (int p = 0; p < cells; ++p) {
    if (keep && !(*keep)[static_cast<size_t>(p)]) continue;
    double na = 0, nb = 0;
    for (int c = 0; c < a.channels; ++c) {
      const double va = a.values[static_cast<size_t>(c * cells + p)];
      const double vb = b.values[static_cast<size_t>(c * cells + p)];
      na += va * va;
      nb += vb * vb;
    }
    na = std::sqrt(na) + 1e-10;
    nb = std::sqrt(nb) + 1e-10;
    double d = 0;
    for (int c = 0; c < a.channels; ++c) {
      const double diff = a.values[static_cast<size_t>(c * cells + p)] / na -
                          b.values[static_cast<size_t>(c * cells + p)] / nb;
      d += diff * diff;
    }
    total += d;
    ++kept;
  }
  return kept == 0 ? -1.0 : total / kept;
}

// Distance restricted by masks; nullopt when every layer is fully masked.
std::optional<double> masked_distance(std::span<const FeatureGrid> a, std::span<const FeatureGrid> b,
                                      const std::vector<std::vector<char>>* masks) {
  require(!a.empty(), ErrorCode::kEmptyInput, "perceptual_distance: no feature layers");
  require(a.size() == b.size(), ErrorCode::kShapeMismatch,
          "perceptual_distance: layer counts differ (" + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()) + ")");
  if (masks)
    require(masks->size() == a.size(), ErrorCode::kShapeMismatch, "perceptual_distance: one mask per layer");
  double total = 0;
  int layers = 0;
  for (size_t l = 0; l < a.size(); ++l) {
    require(a[l].channels == b[l].channels && a[l].height == b[l].height && a[l].width == b[l].width &&
                a[l].values.size() == static_cast<size_t>(a[l].channels) * a[l].cells() &&
                b[l].values.size() == a[l].values.size(),
            ErrorCode::kShapeMismatch, "perceptual_distance: layer " + std::to_string(l) + " shapes differ");
    const std::vector<char>* keep = masks ? &(*masks)[l] : nullptr;
    if (keep)
      require(keep->size() == static_cast<size_t>(a[l].cells()), ErrorCode::kShapeMismatch,
              "perceptual_distance: mask size does not match layer " + std::to_string(l));
    const double d = layer_distance(a[l], b[l], keep);
    if (d < 0) continue;
    total += d;
    ++layers;
  }
  if (layers == 0) return std::nullopt;
  return total / layers;
}

Tensor single(const Tensor& batch, int i) { return nn::gather_rows(batch, std::vector<int>{i}); }

// Pixel is background when its center lies outside every box.
std::vector<char> background_pixels(int w, int h, std::span<const Layout* const> layouts) {
  std::vector<char> bg(static_cast<size_t>(w) * h, 1);
  for (const Layout* l : layouts)
    for (const auto& o : l->objects)
      for (int y = 0; y < h; ++y) {
        const double cy = (y + 0.5) / h;
        if (cy < o.bbox.y0 || cy > o.bbox.y1) continue;
        for (int x = 0; x < w; ++x) {
          const double cx = (x + 0.5) / w;
          if (cx >= o.bbox.x0 && cx <= o.bbox.x1) bg[static_cast<size_t>(y) * w + x] = 0;
        }
      }
  return bg;
}

// A feature cell is kept when every pixel of its footprint is background.
std::vector<char> cell_mask(const std::vector<char>& pixels, int w, int h, int gw, int gh) {
  std::vector<char> keep(static_cast<size_t>(gw) * gh, 1);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      const int y0 = gy * h / gh, y1 = std::max(y0 + 1, (gy + 1) * h / gh);
      const int x0 = gx * w / gw, x1 = std::max(x0 + 1, (gx + 1) * w / gw);
      bool all = true;
      for (int y = y0; y < y1 && all; ++y)
        for (int x = x0; x < x1 && all; ++x) all = pixels[static_cast<size_t>(y) * w + x] != 0;
      keep[static_cast<size_t>(gy) * gw + gx] = all;
    }
  return keep;
}

}  // namespace

PixelFeatures::PixelFeatures(int crop_size, int levels) : crop_size_(crop_size), levels_(levels) {
  require(crop_size > 0 && levels > 0, ErrorCode::kInvalidArgument, "PixelFeatures: bad arguments");
}

std::vector<FeatureGrid> PixelFeatures::extract(const Tensor& image) const {
  check_image(image, "PixelFeatures");
  std::vector<FeatureGrid> out{{3, image.dim(2), image.dim(3), image.values()}};
  for (int l = 1; l < levels_; ++l) {
    const FeatureGrid& prev = out.back();
    const int h = prev.height / 2, w = prev.width / 2;
    if (h == 0 || w == 0) break;
    FeatureGrid g{3, h, w, {}};
    g.values.reserve(static_cast<size_t>(3 * h * w));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double s = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              s += prev.values[static_cast<size_t>((c * prev.height + 2 * y + dy) * prev.width + 2 * x + dx)];
          g.values.push_back(s / 4);
        }
    out.push_back(std::move(g));
  }
  return out;
}

double perceptual_distance(std::span<const FeatureGrid> a, std::span<const FeatureGrid> b,
                           const std::vector<std::vector<char>>* masks) {
  auto d = masked_distance(a, b, masks);
  require(d.has_value(), ErrorCode::kEmptyInput, "perceptual_distance: every cell is masked");
  return *d;
}

double perceptual_distance(const Tensor& image_a, const Tensor& image_b, const FeatureExtractor& fx) {
  check_image(image_a, "perceptual_distance");
  require(image_a.shape() == image_b.shape(), ErrorCode::kShapeMismatch,
          "perceptual_distance: images " + nn::shape_string(image_a.shape()) + " and " +
              nn::shape_string(image_b.shape()));
  auto fa = fx.extract(image_a), fb = fx.extract(image_b);
  return perceptual_distance(fa, fb);
}

MeanStd diversity_score(std::span<const Tensor> set_a, std::span<const Tensor> set_b,
                        const FeatureExtractor& fx) {
  require(set_a.size() == set_b.size(), ErrorCode::kLengthMismatch,
          "diversity_score: " + std::to_string(set_a.size()) + " vs " + std::to_string(set_b.size()) +
              " images");
  require(!set_a.empty(), ErrorCode::kEmptyInput, "diversity_score: no image pairs");
  std::vector<double> d;
  for (size_t i = 0; i < set_a.size(); ++i) d.push_back(perceptual_distance(set_a[i], set_b[i], fx));
  MeanStd r;
  for (double v : d) r.mean += v;
  r.mean /= static_cast<double>(d.size());
  for (double v : d) r.std += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(d.size()));
  return r;
}

Consistency consistency_score(const Tensor& image, const Tensor& shifted_image, const Layout& layout,
                              const ShiftSpec& shifts, const FeatureExtractor& fx) {
  return consistency_score(image, shifted_image, layout, shift_layout(layout, shifts), fx);
}

Consistency consistency_score(const Tensor& image, const Tensor& shifted_image, const Layout& layout,
                              const Layout& shifted_layout, const FeatureExtractor& fx) {
  check_image(image, "consistency_score");
  require(image.shape() == shifted_image.shape(), ErrorCode::kShapeMismatch,
          "consistency_score: images " + nn::shape_string(image.shape()) + " and " +
              nn::shape_string(shifted_image.shape()));
  require(layout.size() == shifted_layout.size() && layout.size() > 0, ErrorCode::kLengthMismatch,
          "consistency_score: layouts must have the same nonzero object count");
  nn::NoGradGuard no_grad;
  Consistency c;

  std::vector<BBox> a_boxes, b_boxes;
  for (const auto& o : layout.objects) a_boxes.push_back(o.bbox);
  for (const auto& o : shifted_layout.objects) b_boxes.push_back(o.bbox);
  const std::vector<int> src(a_boxes.size(), 0);
  const Tensor ca = crop_objects(image, src, a_boxes, fx.crop_size());
  const Tensor cb = crop_objects(shifted_image, src, b_boxes, fx.crop_size());
  double fg = 0;
  for (int i = 0; i < layout.size(); ++i) {
    auto fa = fx.extract(single(ca, i)), fb = fx.extract(single(cb, i));
    fg += std::clamp(1.0 - perceptual_distance(fa, fb), 0.0, 1.0);
  }
  c.fg = fg / layout.size();

  const int h = image.dim(2), w = image.dim(3);
  const Layout* both[] = {&layout, &shifted_layout};
  const auto bg_pixels = background_pixels(w, h, both);
  auto fa = fx.extract(image), fb = fx.extract(shifted_image);
  std::vector<std::vector<char>> masks;
  for (const auto& g : fa) masks.push_back(cell_mask(bg_pixels, w, h, g.width, g.height));
  auto d = masked_distance(fa, fb, &masks);
  c.has_background = d.has_value();
  c.bg = d ? std::clamp(1.0 - *d, 0.0, 1.0) : 1.0;
  return c;
}

RecallPrecision attribute_recall_precision(const Tensor& logits, std::span<const std::vector<int>> gt,
                                           double threshold) {
  require(logits.rank() == 2, ErrorCode::kShapeMismatch, "attribute_recall_precision: logits must be [n, A]");
  const int n = logits.dim(0), a = logits.dim(1);
  require(static_cast<size_t>(n) == gt.size(), ErrorCode::kLengthMismatch,
          "attribute_recall_precision: " + std::to_string(n) + " rows but " + std::to_string(gt.size()) +
              " attribute sets");
  RecallPrecision r;
  for (int i = 0; i < n; ++i) {
    std::vector<char> truth(static_cast<size_t>(a), 0);
    for (int k : gt[static_cast<size_t>(i)]) {
      require(k >= 0 && k < a, ErrorCode::kLabelOutOfRange,
              "attribute_recall_precision: attribute " + std::to_string(k) + " out of range");
      truth[static_cast<size_t>(k)] = 1;
    }
    for (int j = 0; j < a; ++j) {
      const bool pred = 1.0 / (1.0 + std::exp(-logits.at(i * a + j))) > threshold;
      const bool t = truth[static_cast<size_t>(j)];
      r.predicted += pred;
      r.actual += t;
      r.true_positives += pred && t;
    }
  }
  r.recall = r.actual ? static_cast<double>(r.true_positives) / r.actual : 0.0;
  r.precision = r.predicted ? static_cast<double>(r.true_positives) / r.predicted : 0.0;
  return r;
}

double object_accuracy(const Tensor& logits, std::span<const int> labels) {
  require(!labels.empty(), ErrorCode::kEmptyInput, "object_accuracy: no crops");
  require(logits.rank() == 2 && static_cast<size_t>(logits.dim(0)) == labels.size(),
          ErrorCode::kLengthMismatch, "object_accuracy: logits and labels disagree in length");
  const int k = logits.dim(1);
  int correct = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.data().subspan(i * static_cast<size_t>(k), static_cast<size_t>(k));
    correct += std::max_element(row.begin(), row.end()) - row.begin() == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

struct Moments {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd cov;
};

Moments moments(const Eigen::MatrixXd& x) {
  Moments m;
  m.mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - m.mean;
  m.cov = c.transpose() * c / (static_cast<double>(x.rows()) - 1.0);
  return m;
}

bool rank_deficient(const Eigen::VectorXd& eig) {
  const double hi = eig.cwiseAbs().maxCoeff();
  return hi == 0.0 || eig.minCoeff() <= 1e-10 * hi;
}

}  // namespace

FrechetResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require(a.rows() >= 2 && b.rows() >= 2, ErrorCode::kEmptyInput,
          "frechet_distance: need at least 2 samples per set");
  require(a.cols() == b.cols() && a.cols() > 0, ErrorCode::kShapeMismatch,
          "frechet_distance: feature dimensions differ (" + std::to_string(a.cols()) + " vs " +
              std::to_string(b.cols()) + ")");
  require(a.allFinite() && b.allFinite(), ErrorCode::kDegenerateCovariance,
          "frechet_distance: features contain non-finite values");
  Moments ma = moments(a), mb = moments(b);
  FrechetResult r;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(ma.cov), eb(mb.cov);
  if (rank_deficient(ea.eigenvalues()) || rank_deficient(eb.eigenvalues())) {
    const auto eye = Eigen::MatrixXd::Identity(a.cols(), a.cols());
    ma.cov += 1e-6 * eye;
    mb.cov += 1e-6 * eye;
    ea.compute(ma.cov);
    r.regularized = true;
  }
  const Eigen::VectorXd sa = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root_a = ea.eigenvectors() * sa.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd m = root_a * mb.cov * root_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
  const double tr_root = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (ma.mean - mb.mean).squaredNorm() + ma.cov.trace() + mb.cov.trace() - 2.0 * tr_root;
  require(std::isfinite(d), ErrorCode::kDegenerateCovariance, "frechet_distance: covariance square root failed");
  r.distance = std::max(0.0, d);
  return r;
}

// ---- classifier ----

AttributeClassifier::AttributeClassifier(const ClassifierConfig& config, int num_categories,
                                         int num_attributes, Rng& rng)
    : config_(config), trunk_(3, config.widths, rng) {
  require(!config.widths.empty() && config.object_size >= 4, ErrorCode::kInvalidArgument,
          "classifier needs at least one layer and object_size >= 4");
  category_head_ = nn::Linear(trunk_.out_features(), num_categories, rng);
  attribute_head_ = nn::Linear(trunk_.out_features(), num_attributes, rng);
}

AttributeClassifier::Logits AttributeClassifier::operator()(const Tensor& crops) const {
  require(crops.rank() == 4 && crops.dim(1) == 3, ErrorCode::kShapeMismatch,
          "classifier expects [n,3,s,s], got " + nn::shape_string(crops.shape()));
  const Tensor f = trunk_(crops);
  return {category_head_(f), attribute_head_(f)};
}

std::vector<FeatureGrid> AttributeClassifier::extract(const Tensor& image) const {
  check_image(image, "feature extractor");
  nn::NoGradGuard no_grad;
  std::vector<FeatureGrid> out;
  for (const Tensor& t : trunk_.features(image))
    out.push_back({t.dim(1), t.dim(2), t.dim(3), t.values()});
  return out;
}

void AttributeClassifier::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  trunk_.collect_parameters(nn::join_name(prefix, "trunk"), out);
  category_head_.collect_parameters(nn::join_name(prefix, "category_head"), out);
  attribute_head_.collect_parameters(nn::join_name(prefix, "attribute_head"), out);
}

AttributeClassifier train_classifier(std::span<const Example> data, const Vocabularies& vocab,
                                     const ClassifierConfig& config, std::ostream* log) {
  require(!data.empty(), ErrorCode::kEmptyInput, "train_classifier: no examples");
  require(config.steps >= 0 && config.batch_size >= 1, ErrorCode::kInvalidArgument,
          "train_classifier: steps must be >= 0 and batch_size >= 1");
  Rng rng(mix_seed(config.seed, 11));
  AttributeClassifier clf(config, vocab.categories.size(), vocab.attributes.size(), rng);

  Tensor crops;
  std::vector<int> labels;
  std::vector<std::vector<int>> attrs;
  {
    nn::NoGradGuard no_grad;
    std::vector<Tensor> parts;
    for (size_t start = 0; start < data.size(); start += 64) {
      const auto chunk = data.subspan(start, std::min<size_t>(64, data.size() - start));
      std::vector<Layout> layouts;
      for (const auto& e : chunk) {
        layouts.push_back(e.layout);
        for (const auto& o : e.layout.objects) {
          labels.push_back(o.category);
          attrs.push_back(o.attributes);
        }
      }
      parts.push_back(crop_objects(stack_images(chunk), layouts, config.object_size));
    }
    crops = parts.size() == 1 ? parts[0] : nn::concat(parts, 0);
  }
  const std::vector<double> ones(static_cast<size_t>(vocab.attributes.size()), 1.0);
  nn::Adam opt(clf.parameters(), {config.learning_rate, 0.9, 0.999, 1e-8, 10.0});
  const int n = static_cast<int>(labels.size());
  for (int step = 1; step <= config.steps; ++step) {
    std::vector<int> rows;
    std::vector<int> y;
    std::vector<std::vector<int>> ya;
    for (int i = 0; i < config.batch_size; ++i) {
      const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      rows.push_back(r);
      y.push_back(labels[static_cast<size_t>(r)]);
      ya.push_back(attrs[static_cast<size_t>(r)]);
    }
    opt.zero_grad();
    const auto out = clf(nn::gather_rows(crops, rows));
    const Tensor loss = nn::add(obj_class_loss(out.categories, y),
                                attr_class_loss(out.attributes,
                                                encode_attribute_batch(ya, vocab.attributes.size()), ones));
    require(std::isfinite(loss.item()), ErrorCode::kNonFiniteLoss,
            "classifier loss is not finite at step " + std::to_string(step));
    loss.backward();
    opt.step();
    if (log && (step % 100 == 0 || step == config.steps))
      *log << ordered_json{{"step", step}, {"loss", loss.item()}}.dump() << "\n";
  }
  return clf;
}

void save_classifier(const AttributeClassifier& clf, const Vocabularies& vocab,
                     const std::filesystem::path& path) {
  const auto& c = clf.config();
  ordered_json meta{{"format", "attrgan-classifier-1"},
                    {"config",
                     {{"object_size", c.object_size},
                      {"widths", c.widths},
                      {"steps", c.steps},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"seed", c.seed}}},
                    {"vocab", {{"categories", vocab.categories.names()}, {"attributes", vocab.attributes.names()}}}};
  write_archive(path, {clf.parameters(), meta.dump()});
}

LoadedClassifier load_classifier(const std::filesystem::path& path) {
  Archive a = read_archive(path);
  LoadedClassifier out;
  ClassifierConfig c;
  try {
    const json meta = json::parse(a.metadata);
    require(meta.value("format", std::string()) == "attrgan-classifier-1", ErrorCode::kSchemaError,
            path.string() + " is not a classifier checkpoint");
    const auto& jc = meta.at("config");
    c.object_size = jc.at("object_size").get<int>();
    c.widths = jc.at("widths").get<std::vector<int>>();
    c.steps = jc.at("steps").get<int>();
    c.batch_size = jc.at("batch_size").get<int>();
    c.learning_rate = jc.at("learning_rate").get<double>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    out.vocab.categories = Vocabulary(meta.at("vocab").at("categories").get<std::vector<std::string>>());
    out.vocab.attributes = Vocabulary(meta.at("vocab").at("attributes").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, path.string() + ": bad classifier metadata: " + e.what());
  }
  Rng rng(0);
  out.classifier = AttributeClassifier(c, out.vocab.categories.size(), out.vocab.attributes.size(), rng);
  std::map<std::string, Tensor> stored;
  for (const auto& t : a.tensors) stored[t.name] = t.tensor;
  for (const auto& t : out.classifier.parameters()) {
    auto it = stored.find(t.name);
    require(it != stored.end() && it->second.shape() == t.tensor.shape(), ErrorCode::kSchemaError,
            path.string() + ": missing or misshapen tensor " + t.name);
    Tensor dst = t.tensor;
    std::copy(it->second.values().begin(), it->second.values().end(), dst.mutable_data().begin());
  }
  return out;
}

ClassificationScores classify_objects(std::span<const Tensor> images, std::span<const Layout> layouts,
                                      const AttributeClassifier& clf, double threshold) {
  require(images.size() == layouts.size(), ErrorCode::kLengthMismatch,
          "classify_objects: images and layouts differ in count");
  require(!images.empty(), ErrorCode::kEmptyInput, "classify_objects: no images");
  nn::NoGradGuard no_grad;
  std::vector<Tensor> cat_parts, attr_parts;
  std::vector<int> labels;
  std::vector<std::vector<int>> gt;
  for (size_t i = 0; i < images.size(); ++i) {
    check_image(images[i], "classify_objects");
    const auto crops = crop_objects(images[i], std::span<const Layout>(&layouts[i], 1), clf.crop_size());
    const auto out = clf(crops);
    cat_parts.push_back(out.categories);
    attr_parts.push_back(out.attributes);
    for (const auto& o : layouts[i].objects) {
      labels.push_back(o.category);
      gt.push_back(o.attributes);
    }
  }
  ClassificationScores s;
  s.objects = static_cast<int>(labels.size());
  s.object_accuracy = object_accuracy(nn::concat(cat_parts, 0), labels);
  s.attributes = attribute_recall_precision(nn::concat(attr_parts, 0), gt, threshold);
  return s;
}

std::string eval_report_json(const EvalReport& r) {
  ordered_json j{{"images", r.images},
                 {"objects", r.objects},
                 {"object_accuracy", r.object_accuracy},
                 {"attribute_recall", r.attribute_recall},
                 {"attribute_precision", r.attribute_precision}};
  if (r.diversity) j["diversity"] = {{"mean", r.diversity->mean}, {"std", r.diversity->std}};
  if (r.consistency) j["consistency"] = {{"bg", r.consistency->bg}, {"fg", r.consistency->fg}};
  if (r.consistency_baseline)
    j["consistency_baseline"] = {{"bg", r.consistency_baseline->bg}, {"fg", r.consistency_baseline->fg}};
  if (r.frechet) j["frechet"] = *r.frechet;
  return j.dump(2) + "\n";
}

EvalReport evaluate_generator(const Generator& generator, std::span<const Layout> layouts,
                              const AttributeClassifier& classifier, std::uint64_t seed,
                              double shift_magnitude) {
  require(!layouts.empty(), ErrorCode::kEmptyInput, "evaluate_generator: no layouts");
  nn::NoGradGuard no_grad;
  Rng rng(seed);
  const int latent = generator.config().latent_dim;
  std::vector<Tensor> images, second, shifted_images;
  std::vector<Layout> shifted;
  for (const Layout& l : layouts) {
    const Tensor z = sample_latent_prior(l.size(), latent, rng);
    const Tensor z2 = sample_latent_prior(l.size(), latent, rng);
    shifted.push_back(shift_layout(l, sample_shifts(l, shift_magnitude, rng)));
    images.push_back(generator.generate(l, z));
    second.push_back(generator.generate(l, z2));
    shifted_images.push_back(generator.generate(shifted.back(), z));
  }
  EvalReport r;
  const auto scores = classify_objects(images, layouts, classifier);
  r.images = static_cast<int>(layouts.size());
  r.objects = scores.objects;
  r.object_accuracy = scores.object_accuracy;
  r.attribute_recall = scores.attributes.recall;
  r.attribute_precision = scores.attributes.precision;
  r.diversity = diversity_score(images, second, classifier);
  Consistency mean{0, 0, true}, base{0, 0, true};
  int bg_count = 0, base_bg_count = 0;
  const size_t n = layouts.size();
  for (size_t i = 0; i < n; ++i) {
    const auto c = consistency_score(images[i], shifted_images[i], layouts[i], shifted[i], classifier);
    const auto b = consistency_score(images[i], shifted_images[(i + 1) % n], layouts[i], shifted[i], classifier);
    mean.fg += c.fg;
    base.fg += b.fg;
    if (c.has_background) {
      mean.bg += c.bg;
      ++bg_count;
    }
    if (b.has_background) {
      base.bg += b.bg;
      ++base_bg_count;
    }
  }
  mean.fg /= static_cast<double>(n);
  base.fg /= static_cast<double>(n);
  mean.bg = bg_count ? mean.bg / bg_count : 1.0;
  base.bg = base_bg_count ? base.bg / base_bg_count : 1.0;
  mean.has_background = bg_count > 0;
  base.has_background = base_bg_count > 0;
  r.consistency = mean;
  r.consistency_baseline = base;
  return r;
}

// ---- feature files ----

FeatureFile read_feature_file(const std::filesystem::path& path) {
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  std::ifstream js(sidecar);
  require(js.good(), ErrorCode::kIoError, "cannot open feature sidecar " + sidecar.string());
  json meta;
  FeatureFile f;
  std::vector<std::pair<long, long>> shapes;
  std::string dtype;
  try {
    meta = json::parse(js);
    dtype = meta.at("dtype").get<std::string>();
    for (const auto& l : meta.at("layers")) {
      f.layers.push_back(l.at("name").get<std::string>());
      const auto s = l.at("shape").get<std::vector<long>>();
      require(s.size() == 2 && s[0] >= 0 && s[1] >= 0, ErrorCode::kSchemaError,
              sidecar.string() + ": each layer shape must be [n, d]");
      shapes.emplace_back(s[0], s[1]);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, sidecar.string() + ": " + e.what());
  }
  require(dtype == "float32" || dtype == "float64", ErrorCode::kSchemaError,
          sidecar.string() + ": dtype must be float32 or float64");
  const size_t width = dtype == "float32" ? 4 : 8;
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIoError, "cannot open feature file " + path.string());
  for (const auto& [n, d] : shapes) {
    Eigen::MatrixXd m(n, d);
    std::vector<char> buf(static_cast<size_t>(n * d) * width);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(in.gcount() == static_cast<std::streamsize>(buf.size()), ErrorCode::kIoError,
            path.string() + " is shorter than its sidecar declares");
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < d; ++j) {
        const size_t k = static_cast<size_t>(i * d + j);
        if (width == 4) {
          float v;
          std::memcpy(&v, &buf[k * 4], 4);
          m(i, j) = v;
        } else {
          double v;
          std::memcpy(&v, &buf[k * 8], 8);
          m(i, j) = v;
        }
      }
    f.values.push_back(std::move(m));
  }
  return f;
}

void write_feature_file(const std::filesystem::path& path, const FeatureFile& f) {
  require(f.layers.size() == f.values.size(), ErrorCode::kLengthMismatch,
          "write_feature_file: one name per layer");
  ordered_json layers = ordered_json::array();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIoError, "cannot write " + path.string());
  for (size_t l = 0; l < f.values.size(); ++l) {
    const auto& m = f.values[l];
    layers.push_back({{"name", f.layers[l]}, {"shape", {m.rows(), m.cols()}}});
    for (long i = 0; i < m.rows(); ++i)
      for (long j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
  }
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  std::ofstream js(sidecar);
  js << ordered_json{{"dtype", "float64"}, {"layers", layers}}.dump(2) << "\n";
  require(out.good() && js.good(), ErrorCode::kIoError, "failed writing " + path.string());
}

}  // namespace attrgan
