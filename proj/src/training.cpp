#include "attrgan/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "attrgan/errors.hpp"

namespace attrgan {

using namespace nn;
using nlohmann::json;
using nlohmann::ordered_json;

Tensor stack_images(std::span<const Example* const> batch) {
  require(!batch.empty(), ErrorCode::kEmptyInput, "empty batch");
  const Canvas canvas = batch[0]->layout.canvas;
  const size_t plane = static_cast<size_t>(3) * canvas.width * canvas.height;
  std::vector<double> out;
  out.reserve(plane * batch.size());
  for (const Example* e : batch) {
    require(e->layout.canvas == canvas, ErrorCode::kShapeMismatch, "batch mixes canvas sizes");
    require(e->image.size() == plane, ErrorCode::kShapeMismatch,
            "example " + std::to_string(e->id) + " has " + std::to_string(e->image.size()) +
                " values for a " + std::to_string(canvas.width) + "x" +
                std::to_string(canvas.height) + " canvas");
    out.insert(out.end(), e->image.begin(), e->image.end());
  }
  return Tensor::from({static_cast<int>(batch.size()), 3, canvas.height, canvas.width}, std::move(out));
}

Tensor stack_images(std::span<const Example> batch) {
  std::vector<const Example*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  return stack_images(ptrs);
}

GenBatch disentangle_attributes(const GenBatch& batch, const AttributePrior& prior, double p_replace,
                                Rng& rng, std::vector<char>* replaced) {
  require(p_replace >= 0 && p_replace <= 1, ErrorCode::kInvalidArgument, "p_replace outside [0,1]");
  GenBatch out = batch;
  if (replaced) replaced->assign(static_cast<size_t>(batch.size()), 0);
  for (int i = 0; i < batch.size(); ++i) {
    if (!rng.bernoulli(p_replace)) continue;
    auto& attrs = out.attributes[static_cast<size_t>(i)];
    attrs = sample_attributes(prior, batch.categories[static_cast<size_t>(i)],
                              static_cast<int>(attrs.size()), rng);
    if (replaced) (*replaced)[static_cast<size_t>(i)] = 1;
  }
  return out;
}

Models::Models(const ModelConfig& config, Rng& rng)
    : generator(config, rng), encoder(config, rng), image_disc(config, rng), object_disc(config, rng) {}

NamedTensors Models::generator_side() const {
  NamedTensors out = generator.parameters("generator");
  encoder.collect_parameters("encoder", out);
  return out;
}

NamedTensors Models::discriminator_side() const {
  NamedTensors out = image_disc.parameters("image_disc");
  object_disc.collect_parameters("object_disc", out);
  return out;
}

NamedTensors Models::all_parameters() const {
  NamedTensors out = generator_side();
  for (auto& t : discriminator_side()) out.push_back(std::move(t));
  return out;
}

NamedTensors Models::all_buffers() const { return generator.buffers("generator"); }

namespace {

std::vector<int> object_sources(const GenBatch& b) {
  std::vector<int> src;
  for (int i = 0; i < b.images(); ++i) src.insert(src.end(), static_cast<size_t>(b.counts[static_cast<size_t>(i)]), i);
  return src;
}

GenBatch concat_batches(std::initializer_list<const GenBatch*> parts) {
  GenBatch out;
  for (const GenBatch* p : parts) {
    out.categories.insert(out.categories.end(), p->categories.begin(), p->categories.end());
    out.attributes.insert(out.attributes.end(), p->attributes.begin(), p->attributes.end());
    out.boxes.insert(out.boxes.end(), p->boxes.begin(), p->boxes.end());
    out.counts.insert(out.counts.end(), p->counts.begin(), p->counts.end());
  }
  return out;
}

std::vector<int> range(int start, int count) {
  std::vector<int> r(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) r[static_cast<size_t>(i)] = start + i;
  return r;
}

Tensor rows(const Tensor& x, int start, int count) { return gather_rows(x, range(start, count)); }

}  // namespace

TrainingTriple build_triple(const Tensor& images, std::span<const Layout> layouts,
                            const TrainingConfig& config, const Models& models,
                            const AttributePrior& prior, Rng& rng) {
  const ModelConfig& mc = config.model;
  require(images.rank() == 4 && images.dim(0) == static_cast<int>(layouts.size()) &&
              images.dim(1) == 3 && images.dim(2) == mc.canvas && images.dim(3) == mc.canvas,
          ErrorCode::kShapeMismatch,
          "training images " + shape_string(images.shape()) + " for " +
              std::to_string(layouts.size()) + " layouts at canvas " + std::to_string(mc.canvas));
  TrainingTriple t;
  t.layouts.assign(layouts.begin(), layouts.end());
  for (const auto& l : layouts) {
    validate_layout(l, mc.num_categories, mc.num_attributes);
    t.shifted_layouts.push_back(
        shift_layout(l, sample_shifts(l, config.shift_magnitude, rng, config.global_shift)));
  }
  t.rec.batch = make_gen_batch(layouts);
  const int n = t.rec.batch.size();
  t.real_crops = crop_objects(images, layouts, mc.object_size);
  t.posterior = models.encoder(t.real_crops);
  t.rec.z = reparameterize(t.posterior, sample_latent_prior(n, mc.latent_dim, rng));
  Tensor z = sample_latent_prior(n, mc.latent_dim, rng);
  t.rand.batch = disentangle_attributes(t.rec.batch, prior, config.p_replace, rng);
  t.rand.z = z;
  t.shift.batch = t.rand.batch;
  t.shift.batch.boxes = make_gen_batch(t.shifted_layouts).boxes;
  t.shift.z = z;
  return t;
}

GeneratedPaths generate_paths(const Generator& generator, const TrainingTriple& t) {
  GenBatch all = concat_batches({&t.rec.batch, &t.rand.batch, &t.shift.batch});
  Tensor images = generator.forward(all, concat({t.rec.z, t.rand.z, t.shift.z}, 0));
  const int b = t.rec.batch.images();
  return {rows(images, 0, b), rows(images, b, b), rows(images, 2 * b, b)};
}

namespace {

struct FakeCrops {
  Tensor rec, rand, shift;
};

FakeCrops crop_fakes(const GeneratedPaths& f, const TrainingTriple& t, int size) {
  std::vector<int> src = object_sources(t.rec.batch);
  return {crop_objects(f.rec, src, t.rec.batch.boxes, size),
          crop_objects(f.rand, src, t.rand.batch.boxes, size),
          crop_objects(f.shift, src, t.shift.batch.boxes, size)};
}

}  // namespace

LossTerms discriminator_terms(const Models& models, const Tensor& real_images,
                              const GeneratedPaths& fakes, const TrainingTriple& t,
                              std::span<const double> attr_weights) {
  const int b = real_images.dim(0), n = t.rec.batch.size();
  const int nc = models.generator.config().num_attributes;
  LossTerms terms;
  Tensor img = models.image_disc.logits(concat({real_images, fakes.rand, fakes.rec, fakes.shift}, 0));
  terms.adv_img =
      adv_loss_logits(rows(img, 0, b), rows(img, b, b), rows(img, 2 * b, b), rows(img, 3 * b, b)).value;
  FakeCrops fc = crop_fakes(fakes, t, models.generator.config().object_size);
  ObjectHeads h = models.object_disc(concat({t.real_crops, fc.rand, fc.rec, fc.shift}, 0));
  terms.adv_obj = adv_loss_logits(rows(h.realness, 0, n), rows(h.realness, n, n),
                                  rows(h.realness, 2 * n, n), rows(h.realness, 3 * n, n))
                      .value;
  terms.obj_cls = obj_class_loss(rows(h.categories, 0, n), t.rec.batch.categories);
  terms.attr_cls = attr_class_loss(rows(h.attributes, 0, n),
                                   encode_attribute_batch(t.rec.batch.attributes, nc), attr_weights);
  return terms;
}

LossTerms generator_terms(const Models& models, const Tensor& real_images, const GeneratedPaths& fakes,
                          const TrainingTriple& t, std::span<const double> attr_weights) {
  const int b = real_images.dim(0), n = t.rec.batch.size();
  const ModelConfig& mc = models.generator.config();
  LossTerms terms;
  Tensor img = models.image_disc.logits(concat({fakes.rand, fakes.rec, fakes.shift}, 0));
  terms.adv_img =
      adv_loss_logits(Tensor(), rows(img, 0, b), rows(img, b, b), rows(img, 2 * b, b)).generator;
  FakeCrops fc = crop_fakes(fakes, t, mc.object_size);
  // rand, rec, shift
  ObjectHeads h = models.object_disc(concat({fc.rand, fc.rec, fc.shift}, 0));
  terms.adv_obj = adv_loss_logits(Tensor(), rows(h.realness, 0, n), rows(h.realness, n, n),
                                  rows(h.realness, 2 * n, n))
                      .generator;
  // Three equal-size paths: the mean over all rows is the mean of path means.
  std::vector<int> labels;
  for (int k = 0; k < 3; ++k)
    labels.insert(labels.end(), t.rec.batch.categories.begin(), t.rec.batch.categories.end());
  terms.obj_cls = obj_class_loss(h.categories, labels);
  std::vector<std::vector<int>> targets = t.rand.batch.attributes;
  targets.insert(targets.end(), t.rec.batch.attributes.begin(), t.rec.batch.attributes.end());
  targets.insert(targets.end(), t.shift.batch.attributes.begin(), t.shift.batch.attributes.end());
  terms.attr_cls =
      attr_class_loss(h.attributes, encode_attribute_batch(targets, mc.num_attributes), attr_weights);
  terms.kl = kl_loss(t.posterior.mu, t.posterior.logvar);
  terms.img_recon = image_recon_loss(real_images, fakes.rec);
  Posterior re = models.encoder(concat({fc.rand, fc.shift}, 0));
  terms.latent_recon = latent_recon_loss(t.rand.z, rows(re.mu, 0, n), rows(re.mu, n, n));
  return terms;
}

namespace {

LossParts values(const LossTerms& t) {
  auto v = [](const Tensor& x) { return x.defined() ? x.item() : 0.0; };
  return {v(t.adv_img), v(t.adv_obj), v(t.obj_cls), v(t.attr_cls), v(t.kl), v(t.img_recon),
          v(t.latent_recon)};
}

void check_finite(const LossParts& p, const std::string& side, long step) {
  const std::pair<const char*, double> named[] = {
      {"adv_img", p.adv_img}, {"adv_obj", p.adv_obj}, {"obj_cls", p.obj_cls},
      {"attr_cls", p.attr_cls}, {"kl", p.kl},       {"img_recon", p.img_recon},
      {"latent_recon", p.latent_recon}};
  for (const auto& [name, v] : named)
    require(std::isfinite(v), ErrorCode::kNonFiniteLoss,
            side + " loss term '" + name + "' is " + std::to_string(v) + " at step " +
                std::to_string(step));
}

}  // namespace

std::string report_json(const StepReport& r) {
  ordered_json j;
  j["step"] = r.step;
  j["adv_img"] = r.parts.adv_img;
  j["adv_obj"] = r.parts.adv_obj;
  j["obj_cls"] = r.parts.obj_cls;
  j["attr_cls"] = r.parts.attr_cls;
  j["kl"] = r.parts.kl;
  j["img_recon"] = r.parts.img_recon;
  j["latent_recon"] = r.parts.latent_recon;
  j["L_G"] = r.generator_total;
  j["L_D"] = r.discriminator_total;
  return j.dump();
}

Trainer::Trainer(TrainingConfig config, Vocabularies vocab, AttributePrior prior)
    : config_(std::move(config)), vocab_(std::move(vocab)), prior_(std::move(prior)) {
  config_.validate();
  require(vocab_.categories.size() == config_.model.num_categories &&
              vocab_.attributes.size() == config_.model.num_attributes,
          ErrorCode::kSchemaError,
          "vocabulary sizes " + std::to_string(vocab_.categories.size()) + "/" +
              std::to_string(vocab_.attributes.size()) + " do not match the model config " +
              std::to_string(config_.model.num_categories) + "/" +
              std::to_string(config_.model.num_attributes));
  attr_weights_ = attribute_weights(prior_, config_.model.num_attributes);
  Rng init(mix_seed(config_.seed, 1));
  models_ = Models(config_.model, init);
  rng_ = Rng(mix_seed(config_.seed, 2));
  data_rng_ = Rng(mix_seed(config_.seed, 3));
  init_optimizers();
}

void Trainer::init_optimizers() {
  AdamOptions g{config_.learning_rate, config_.beta1, config_.beta2, 1e-8, config_.clip_norm};
  AdamOptions d{config_.disc_learning_rate, config_.beta1, config_.beta2, 1e-8, config_.clip_norm};
  g_opt_ = Adam(models_.generator_side(), g);
  d_opt_ = Adam(models_.discriminator_side(), d);
}

StepReport Trainer::step(std::span<const Example> batch) {
  std::vector<const Example*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  require(!ptrs.empty(), ErrorCode::kEmptyInput, "empty batch");
  const long step_no = iteration_ + 1;
  StepReport report;
  report.step = step_no;

  Tensor images = stack_images(ptrs);
  std::vector<Layout> layouts;
  for (const Example* e : ptrs) layouts.push_back(e->layout);

  models_.generator.set_training(true);
  TrainingTriple triple = build_triple(images, layouts, config_, models_, prior_, rng_);
  // The generator is untouched by the discriminator update, so this one pass
  // serves both phases.
  GeneratedPaths fakes = generate_paths(models_.generator, triple);

  // Phase 1: discriminators and classifiers.
  const NamedTensors d_params = models_.discriminator_side();
  {
    GeneratedPaths detached{fakes.rec.detach(), fakes.rand.detach(), fakes.shift.detach()};
    LossTerms d_terms = discriminator_terms(models_, images, detached, triple, attr_weights_);
    LossParts dp = values(d_terms);
    check_finite(dp, "discriminator", step_no);
    report.discriminator_total = discriminator_total(dp, config_.weights);
    Tensor loss = discriminator_total(d_terms, config_.weights);
    d_opt_.zero_grad();
    loss.backward();
    d_opt_.step();
    report.events.push_back("d_update");
  }

  // Phase 2: generator, embedding, and posterior encoder through the
  // updated discriminators.
  set_requires_grad(d_params, false);
  LossTerms g_terms;
  try {
    g_terms = generator_terms(models_, images, fakes, triple, attr_weights_);
  } catch (...) {
    set_requires_grad(d_params, true);
    throw;
  }
  set_requires_grad(d_params, true);
  report.parts = values(g_terms);
  check_finite(report.parts, "generator", step_no);
  report.generator_total = generator_total(report.parts, config_.weights);
  Tensor loss = generator_total(g_terms, config_.weights);
  g_opt_.zero_grad();
  loss.backward();
  report.events.push_back("g_backward");
  g_opt_.step();
  report.events.push_back("g_update");

  iteration_ = step_no;
  return report;
}

std::vector<const Example*> Trainer::next_batch(std::span<const Example> data) {
  require(!data.empty(), ErrorCode::kEmptyInput, "training data is empty");
  std::vector<const Example*> out;
  for (int k = 0; k < config_.batch_size; ++k) {
    if (order_.size() != data.size() || cursor_ >= order_.size()) {
      order_ = range(0, static_cast<int>(data.size()));
      for (size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[static_cast<size_t>(data_rng_.below(i))]);
      cursor_ = 0;
    }
    out.push_back(&data[static_cast<size_t>(order_[cursor_++])]);
  }
  return out;
}

StepReport Trainer::step(std::span<const Example> data, std::vector<const Example*>* used) {
  std::vector<const Example*> batch = next_batch(data);
  if (used) *used = batch;
  std::vector<Example> copy;
  copy.reserve(batch.size());
  for (const Example* e : batch) copy.push_back(*e);
  return step(std::span<const Example>(copy));
}

void Trainer::train(std::span<const Example> data, const std::filesystem::path& out_dir,
                    std::ostream& log, const std::function<void(const StepReport&)>& on_step) {
  std::filesystem::create_directories(out_dir);
  while (iteration_ < config_.iterations) {
    StepReport r = step(data, nullptr);
    log << report_json(r) << '\n';
    log.flush();
    if (on_step) on_step(r);
    if (iteration_ % config_.checkpoint_every == 0 || iteration_ == config_.iterations) {
      std::ostringstream name;
      name << "checkpoint_" << std::setw(6) << std::setfill('0') << iteration_ << ".ckpt";
      save(out_dir / name.str());
      save(out_dir / "latest.ckpt");
    }
  }
}

// ---- archive ----

namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

std::string config_hash(const TrainingConfig& c) { return hex64(fnv1a64(model_config_json(c.model))); }

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  ordered_json header;
  header["tensors"] = ordered_json::object();
  std::int64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    require(!header["tensors"].contains(name), ErrorCode::kSchemaError, "duplicate tensor " + name);
    header["tensors"][name] = {{"shape", t.shape()}, {"offset", offset}};
    offset += t.size();
  }
  header["__metadata__"] = archive.metadata.empty() ? ordered_json::object()
                                                    : ordered_json::parse(archive.metadata);
  const std::string text = header.dump();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorCode::kIoError, "cannot write " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& nt : archive.tensors)
      out.write(reinterpret_cast<const char*>(nt.tensor.values().data()),
                static_cast<std::streamsize>(nt.tensor.values().size() * sizeof(double)));
    require(out.good(), ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIoError, "cannot open checkpoint " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(in.good() && len > 0 && len < (1ull << 32), ErrorCode::kSchemaError,
          path.string() + " is not a checkpoint archive");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorCode::kSchemaError, "truncated checkpoint header in " + path.string());
  ordered_json header;
  try {
    header = ordered_json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorCode::kSchemaError, "checkpoint header: " + std::string(e.what()));
  }
  std::vector<double> payload;
  {
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(rest.size() % sizeof(double) == 0, ErrorCode::kSchemaError, "ragged checkpoint payload");
    payload.resize(rest.size() / sizeof(double));
    std::memcpy(payload.data(), rest.data(), rest.size());
  }
  Archive a;
  for (const auto& [name, info] : header.at("tensors").items()) {
    Shape shape = info.at("shape").get<Shape>();
    const auto offset = info.at("offset").get<std::int64_t>();
    const auto count = static_cast<std::int64_t>(numel(shape));
    require(offset >= 0 && offset + count <= static_cast<std::int64_t>(payload.size()),
            ErrorCode::kSchemaError, "tensor " + name + " lies outside the payload");
    a.tensors.push_back({name, Tensor::from(shape, std::vector<double>(payload.begin() + offset,
                                                                        payload.begin() + offset + count))});
  }
  a.metadata = header.contains("__metadata__") ? header["__metadata__"].dump() : "{}";
  return a;
}

void Trainer::save(const std::filesystem::path& path) const {
  Archive a;
  a.tensors = models_.all_parameters();
  for (auto& b : models_.all_buffers()) a.tensors.push_back(b);
  auto moments = [&](const Adam& opt, const std::string& tag) {
    const auto& m = opt.first_moments();
    const auto& v = opt.second_moments();
    const auto& ps = opt.params();
    for (size_t i = 0; i < ps.size(); ++i) {
      a.tensors.push_back({"optim." + tag + ".m." + ps[i].name, Tensor::from(ps[i].tensor.shape(), m[i])});
      a.tensors.push_back({"optim." + tag + ".v." + ps[i].name, Tensor::from(ps[i].tensor.shape(), v[i])});
    }
  };
  moments(g_opt_, "g");
  moments(d_opt_, "d");
  ordered_json meta;
  meta["format"] = "attrgan-checkpoint-1";
  meta["iteration"] = iteration_;
  meta["config"] = ordered_json::parse(training_config_json(config_));
  meta["config_hash"] = config_hash(config_);
  meta["vocab"] = {{"categories", vocab_.categories.names()}, {"attributes", vocab_.attributes.names()}};
  meta["prior"] = ordered_json::parse(serialize_prior(prior_, vocab_));
  meta["rng"] = rng_.save();
  meta["data_rng"] = data_rng_.save();
  meta["data_order"] = order_;
  meta["data_cursor"] = cursor_;
  meta["optimizer_steps"] = {{"g", g_opt_.steps()}, {"d", d_opt_.steps()}};
  a.metadata = meta.dump();
  write_archive(path, a);
}

namespace {

struct ParsedMeta {
  TrainingConfig config;
  Vocabularies vocab;
  AttributePrior prior;
  json meta;
};

ParsedMeta parse_meta(const Archive& a, const std::filesystem::path& path) {
  ParsedMeta p;
  try {
    p.meta = json::parse(a.metadata);
    p.config = parse_training_config(p.meta.at("config").dump(), TrainingConfig{});
    p.vocab.categories = Vocabulary(p.meta.at("vocab").at("categories").get<std::vector<std::string>>());
    p.vocab.attributes = Vocabulary(p.meta.at("vocab").at("attributes").get<std::vector<std::string>>());
    p.prior = parse_prior(p.meta.at("prior").dump(), p.vocab);
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, path.string() + ": bad checkpoint metadata: " + e.what());
  }
  require(p.meta.value("config_hash", std::string()) == config_hash(p.config), ErrorCode::kSchemaError,
          path.string() + ": config hash does not match the stored config");
  return p;
}

void restore(const NamedTensors& targets, const std::map<std::string, Tensor>& stored,
             const std::string& prefix) {
  for (const auto& t : targets) {
    auto it = stored.find(prefix + t.name);
    require(it != stored.end(), ErrorCode::kSchemaError, "checkpoint lacks tensor " + prefix + t.name);
    require(it->second.shape() == t.tensor.shape(), ErrorCode::kSchemaError,
            "checkpoint tensor " + t.name + " has shape " + shape_string(it->second.shape()) +
                ", model expects " + shape_string(t.tensor.shape()));
    Tensor dst = t.tensor;
    std::copy(it->second.values().begin(), it->second.values().end(), dst.mutable_data().begin());
  }
}

std::map<std::string, Tensor> index(const Archive& a) {
  std::map<std::string, Tensor> m;
  for (const auto& t : a.tensors) m[t.name] = t.tensor;
  return m;
}

}  // namespace

Trainer Trainer::load(const std::filesystem::path& path) {
  Archive a = read_archive(path);
  ParsedMeta p = parse_meta(a, path);
  Trainer t(p.config, p.vocab, p.prior);
  auto stored = index(a);
  restore(t.models_.all_parameters(), stored, "");
  restore(t.models_.all_buffers(), stored, "");
  auto moments = [&](Adam& opt, const std::string& tag) {
    const auto& ps = opt.params();
    for (size_t i = 0; i < ps.size(); ++i) {
      for (const char* kind : {"m", "v"}) {
        const std::string key = "optim." + tag + "." + kind + "." + ps[i].name;
        auto it = stored.find(key);
        require(it != stored.end(), ErrorCode::kSchemaError, "checkpoint lacks " + key);
        auto& dst = kind[0] == 'm' ? opt.first_moments()[i] : opt.second_moments()[i];
        dst = it->second.values();
      }
    }
  };
  moments(t.g_opt_, "g");
  moments(t.d_opt_, "d");
  t.g_opt_.set_steps(p.meta.at("optimizer_steps").at("g").get<long>());
  t.d_opt_.set_steps(p.meta.at("optimizer_steps").at("d").get<long>());
  t.iteration_ = p.meta.at("iteration").get<long>();
  t.rng_.load(p.meta.at("rng").get<std::string>());
  t.data_rng_.load(p.meta.at("data_rng").get<std::string>());
  t.order_ = p.meta.at("data_order").get<std::vector<int>>();
  t.cursor_ = p.meta.at("data_cursor").get<size_t>();
  return t;
}

LoadedModel load_model(const std::filesystem::path& path) {
  Archive a = read_archive(path);
  ParsedMeta p = parse_meta(a, path);
  LoadedModel m;
  m.config = p.config;
  m.vocab = p.vocab;
  m.prior = p.prior;
  Rng init(mix_seed(p.config.seed, 1));
  m.models = Models(p.config.model, init);
  auto stored = index(a);
  restore(m.models.all_parameters(), stored, "");
  restore(m.models.all_buffers(), stored, "");
  m.models.generator.set_training(false);
  m.iteration = p.meta.at("iteration").get<long>();
  m.config_hash = config_hash(p.config);
  return m;
}

}  // namespace attrgan
