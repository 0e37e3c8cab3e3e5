#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "attrgan/data.hpp"
#include "attrgan/errors.hpp"
#include "attrgan/generator.hpp"
#include "attrgan/metrics.hpp"
#include "attrgan/service.hpp"
#include "attrgan/training.hpp"

namespace fs = std::filesystem;
using namespace attrgan;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + p.string());
  out << text;
}

// *.json files of a directory in name order.
std::vector<fs::path> layout_files(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::kIoError, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Tensor load_image(const fs::path& p) {
  const Rgb8 img = read_png(p);
  return Tensor::from({1, 3, img.height, img.width}, from_rgb8(img));
}

// Mean over cells of the deepest feature layer, one row per image.
Eigen::MatrixXd pooled_features(const FeatureExtractor& fx, std::span<const Tensor> images) {
  Eigen::MatrixXd out;
  for (size_t i = 0; i < images.size(); ++i) {
    const FeatureGrid g = fx.extract(images[i]).back();
    if (i == 0) out.resize(static_cast<Eigen::Index>(images.size()), g.channels);
    for (int c = 0; c < g.channels; ++c) {
      double s = 0;
      for (int p = 0; p < g.cells(); ++p) s += g.values[static_cast<size_t>(c * g.cells() + p)];
      out(static_cast<Eigen::Index>(i), c) = s / g.cells();
    }
  }
  return out;
}

int cmd_synth(const fs::path& spec_file, int n, const fs::path& out) {
  const SyntheticSpec spec = spec_file.empty() ? SyntheticSpec{} : parse_synthetic_spec(read_text(spec_file));
  const Dataset d = generate_synthetic_dataset(spec, n, out);
  std::cout << "wrote " << d.entries.size() << " images to " << out.string() << " (train "
            << d.split(Split::kTrain).size() << ", val " << d.split(Split::kVal).size() << ", test "
            << d.split(Split::kTest).size() << ")\n";
  return 0;
}

int cmd_ingest(const IngestInputs& in, const IngestConfig& cfg, const fs::path& out) {
  const IngestReport r = ingest_visual_genome(in, cfg, out, std::cerr);
  std::cout << "images seen " << r.images_seen << ", kept " << r.images_kept << " (train " << r.train << ", val "
            << r.val << ", test " << r.test << ")" << (r.hash_split ? " [hash split]" : "") << "\n";
  return 0;
}

int cmd_train(const fs::path& config_file, const std::string& preset, const fs::path& data_dir,
              const fs::path& out, const fs::path& resume) {
  const Dataset d = load_dataset(data_dir);
  const auto examples = load_examples(d, Split::kTrain);
  fs::create_directories(out);
  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    trainer.emplace(Trainer::load(resume));
    std::cerr << "resumed at iteration " << trainer->iteration() << "\n";
  } else {
    TrainingConfig cfg = preset_training(preset);
    if (!config_file.empty()) cfg = parse_training_config(read_text(config_file), cfg);
    cfg.model.num_categories = d.vocab.categories.size();
    cfg.model.num_attributes = d.vocab.attributes.size();
    trainer.emplace(cfg, d.vocab, d.prior);
  }
  std::ofstream log(out / "metrics.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  const int total = trainer->config().iterations;
  trainer->train(examples, out, log, [total](const StepReport& r) {
    if (r.step % 50 == 0 || r.step == total) std::cerr << "step " << r.step << "/" << total << "\n";
  });
  std::cout << "checkpoints in " << out.string() << "\n";
  return 0;
}

int cmd_train_classifier(const fs::path& data_dir, const fs::path& out, int steps, std::uint64_t seed) {
  const Dataset d = load_dataset(data_dir);
  ClassifierConfig cfg;
  if (steps > 0) cfg.steps = steps;
  cfg.seed = seed;
  const auto examples = load_examples(d, Split::kTrain);
  const AttributeClassifier clf = train_classifier(examples, d.vocab, cfg, &std::cerr);
  save_classifier(clf, d.vocab, out);
  const auto val = load_examples(d, Split::kVal);
  if (!val.empty()) {
    std::vector<Tensor> images;
    std::vector<Layout> layouts;
    for (const auto& e : val) {
      images.push_back(stack_images(std::span<const Example>(&e, 1)));
      layouts.push_back(e.layout);
    }
    const auto s = classify_objects(images, layouts, clf);
    std::cout << "val objects " << s.objects << ": accuracy " << s.object_accuracy << ", attribute recall "
              << s.attributes.recall << ", precision " << s.attributes.precision << "\n";
  }
  return 0;
}

int cmd_generate(const fs::path& model_path, const fs::path& layouts_dir, const fs::path& out,
                 std::uint64_t seed) {
  const LoadedModel m = load_model(model_path);
  fs::create_directories(out);
  nn::NoGradGuard no_grad;
  int i = 0;
  for (const auto& f : layout_files(layouts_dir)) {
    const Layout layout = parse_layout(read_text(f), m.vocab);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i++)));
    const Tensor z = sample_latent_prior(layout.size(), m.models.generator.config().latent_dim, rng);
    const Tensor img = m.models.generator.generate(layout, z);
    write_png(out / (f.stem().string() + ".png"), to_rgb8(img, 0));
  }
  std::cout << "wrote " << i << " images to " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& images_dir, const fs::path& layouts_dir, const fs::path& clf_path,
                 const fs::path& report, const fs::path& reference, const fs::path& features_a,
                 const fs::path& features_b, double threshold) {
  const LoadedClassifier lc = load_classifier(clf_path);
  std::vector<Tensor> images;
  std::vector<Layout> layouts;
  for (const auto& f : layout_files(layouts_dir)) {
    const fs::path img = images_dir / (f.stem().string() + ".png");
    require(fs::exists(img), ErrorCode::kIoError, "no image for layout " + f.string());
    layouts.push_back(parse_layout(read_text(f), lc.vocab));
    images.push_back(load_image(img));
  }
  require(!images.empty(), ErrorCode::kEmptyInput, "no layouts in " + layouts_dir.string());
  const ClassificationScores s = classify_objects(images, layouts, lc.classifier, threshold);
  EvalReport r;
  r.object_accuracy = s.object_accuracy;
  r.attribute_recall = s.attributes.recall;
  r.attribute_precision = s.attributes.precision;
  r.images = static_cast<int>(images.size());
  r.objects = s.objects;
  if (!reference.empty()) {
    std::vector<Tensor> ref;
    for (const auto& e : fs::directory_iterator(reference))
      if (e.path().extension() == ".png") ref.push_back(load_image(e.path()));
    r.frechet = frechet_distance(pooled_features(lc.classifier, images), pooled_features(lc.classifier, ref))
                    .distance;
  }
  std::string text = eval_report_json(r);
  if (!features_a.empty() || !features_b.empty()) {
    require(!features_a.empty() && !features_b.empty(), ErrorCode::kInvalidArgument,
            "--features-a and --features-b go together");
    const FeatureFile a = read_feature_file(features_a), b = read_feature_file(features_b);
    require(a.layers == b.layers, ErrorCode::kShapeMismatch, "feature files have different layers");
    auto doc = nlohmann::ordered_json::parse(text);
    for (size_t l = 0; l < a.layers.size(); ++l) {
      const FrechetResult f = frechet_distance(a.values[l], b.values[l]);
      doc["feature_frechet"][a.layers[l]] = {{"distance", f.distance}, {"regularized", f.regularized}};
    }
    text = doc.dump(2);
  }
  write_text(report, text + "\n");
  std::cout << text << "\n";
  return 0;
}

int cmd_eval_generator(const fs::path& model_path, const fs::path& clf_path, const fs::path& data_dir,
                       const std::string& split, const fs::path& report, std::uint64_t seed, double shift) {
  const LoadedModel m = load_model(model_path);
  const LoadedClassifier lc = load_classifier(clf_path);
  const Dataset d = load_dataset(data_dir);
  std::vector<Layout> layouts;
  for (const IndexEntry* e : d.split(parse_split(split))) layouts.push_back(load_layout(d, *e));
  const EvalReport r = evaluate_generator(m.models.generator, layouts, lc.classifier, seed, shift);
  const std::string text = eval_report_json(r);
  if (!report.empty()) write_text(report, text + "\n");
  std::cout << text << "\n";
  return 0;
}

Service* g_service = nullptr;
void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const fs::path& model_path, const fs::path& clf_path, const std::string& host, int port,
              int threads) {
  Service service;
  if (!model_path.empty())
    service.swap_model(load_served_model(
        model_path, clf_path.empty() ? std::nullopt : std::optional<fs::path>(clf_path)));
  else
    std::cerr << "no --model given; generation endpoints answer 503\n";
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << host << ":" << port << "\n";
  service.listen(host, port, threads);
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-guided layout-to-image generation"};
  app.require_subcommand(1);

  fs::path spec, out;
  int n = 1000;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic shapes dataset");
  synth->add_option("--spec", spec, "SyntheticSpec JSON (defaults when omitted)");
  synth->add_option("--n", n, "Number of images")->required();
  synth->add_option("--out", out, "Output directory")->required();

  IngestInputs vg;
  IngestConfig vg_cfg;
  fs::path image_data, splits;
  auto* ingest = app.add_subcommand("ingest-vg", "Convert Visual Genome annotations into a dataset directory");
  ingest->add_option("--objects", vg.objects, "objects.json")->required();
  ingest->add_option("--attributes", vg.attributes, "attributes.json")->required();
  ingest->add_option("--out", out, "Output directory")->required();
  ingest->add_option("--image-data", image_data, "image_data.json with image sizes");
  ingest->add_option("--splits", splits, "JSON with train/val/test image id lists");
  ingest->add_option("--categories", vg_cfg.num_categories, "Category vocabulary size");
  ingest->add_option("--attribute-vocab", vg_cfg.num_attributes, "Attribute vocabulary size");

  fs::path config, data, resume;
  std::string preset = "desk";
  auto* train = app.add_subcommand("train", "Train the generator and discriminators");
  train->add_option("--config", config, "TrainingConfig JSON; fields override the preset");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Checkpoint and log directory")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--preset", preset, "desk | paper64 | paper128 | miniature");

  int steps = 0;
  std::uint64_t seed = 0;
  auto* train_clf = app.add_subcommand("train-classifier", "Train the evaluation attribute classifier");
  train_clf->add_option("--data", data, "Dataset directory")->required();
  train_clf->add_option("--out", out, "Classifier checkpoint path")->required();
  train_clf->add_option("--steps", steps, "Training steps");
  train_clf->add_option("--seed", seed, "Seed");

  fs::path model, layouts;
  auto* generate = app.add_subcommand("generate", "Render one image per layout file");
  generate->add_option("--model", model, "Generator checkpoint")->required();
  generate->add_option("--layouts", layouts, "Directory of layout JSON files")->required();
  generate->add_option("--out", out, "Output directory")->required();
  generate->add_option("--seed", seed, "Latent seed");

  fs::path images, ckpt, report, reference, features_a, features_b;
  double threshold = 0.5;
  auto* evaluate = app.add_subcommand("evaluate", "Score images against their layouts");
  evaluate->add_option("--images", images, "Directory of NNNNNN.png")->required();
  evaluate->add_option("--layouts", layouts, "Directory of NNNNNN.json")->required();
  evaluate->add_option("--ckpt", ckpt, "Classifier checkpoint")->required();
  evaluate->add_option("--report", report, "Report JSON path")->required();
  evaluate->add_option("--reference", reference, "Real images for the Frechet distance");
  evaluate->add_option("--features-a", features_a, "Exported feature file");
  evaluate->add_option("--features-b", features_b, "Exported feature file");
  evaluate->add_option("--threshold", threshold, "Attribute probability threshold");

  std::string split = "val";
  double shift = 0.3;
  auto* eval_gen = app.add_subcommand("eval-generator", "Accuracy, diversity and consistency of a checkpoint");
  eval_gen->add_option("--model", model, "Generator checkpoint")->required();
  eval_gen->add_option("--classifier", ckpt, "Classifier checkpoint")->required();
  eval_gen->add_option("--data", data, "Dataset directory")->required();
  eval_gen->add_option("--split", split, "train | val | test");
  eval_gen->add_option("--report", report, "Report JSON path");
  eval_gen->add_option("--seed", seed, "Seed");
  eval_gen->add_option("--shift", shift, "Maximum horizontal shift");

  std::string host = "127.0.0.1";
  int port = 8080, threads = 4;
  auto* serve = app.add_subcommand("serve", "Run the HTTP inference service");
  serve->add_option("--model", model, "Generator checkpoint");
  serve->add_option("--classifier", ckpt, "Classifier whose trunk scores consistency");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--threads", threads, "Worker threads");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(spec, n, out);
    if (*ingest) {
      if (!image_data.empty()) vg.image_data = image_data;
      if (!splits.empty()) vg.splits = splits;
      return cmd_ingest(vg, vg_cfg, out);
    }
    if (*train) return cmd_train(config, preset, data, out, resume);
    if (*train_clf) return cmd_train_classifier(data, out, steps, seed);
    if (*generate) return cmd_generate(model, layouts, out, seed);
    if (*evaluate)
      return cmd_evaluate(images, layouts, ckpt, report, reference, features_a, features_b, threshold);
    if (*eval_gen) return cmd_eval_generator(model, ckpt, data, split, report, seed, shift);
    if (*serve) return cmd_serve(model, ckpt, host, port, threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
