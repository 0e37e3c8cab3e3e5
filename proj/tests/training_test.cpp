#include "attrgan/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "attrgan/data.hpp"
#include "attrgan/errors.hpp"

namespace attrgan {
namespace {

namespace fs = std::filesystem;

TrainingConfig small_config(std::uint64_t seed = 3) {
  TrainingConfig c;
  c.preset = "miniature";
  c.model = miniature_model();
  c.model.num_attributes = 7;
  c.batch_size = 2;
  c.iterations = 6;
  c.checkpoint_every = 3;
  c.seed = seed;
  return c;
}

struct Fixture {
  Vocabularies vocab = synthetic_vocabularies();
  std::vector<Example> data;
  AttributePrior prior;

  explicit Fixture(int n = 12, int canvas = 8) {
    SyntheticSpec spec;
    spec.canvas = canvas;
    spec.max_objects = 3;
    Rng rng(77);
    std::vector<std::pair<int, std::vector<int>>> objects;
    for (int i = 0; i < n; ++i) {
      Example e;
      e.id = i;
      e.layout = sample_synthetic_layout(spec, rng);
      e.image = from_rgb8(render_synthetic(e.layout));
      for (const auto& o : e.layout.objects) objects.emplace_back(o.category, o.attributes);
      data.push_back(std::move(e));
    }
    prior = estimate_attribute_prior(objects);
  }

  std::vector<Layout> layouts(size_t count) const {
    std::vector<Layout> out;
    for (size_t i = 0; i < count; ++i) out.push_back(data[i].layout);
    return out;
  }
};

GenBatch big_batch(const Fixture& f, int repeat) {
  std::vector<Layout> ls;
  for (int r = 0; r < repeat; ++r)
    for (const auto& e : f.data) ls.push_back(e.layout);
  return make_gen_batch(ls);
}

TEST(Disentangle, ZeroProbabilityLeavesBatch) {
  Fixture f;
  const GenBatch b = big_batch(f, 1);
  Rng rng(1);
  std::vector<char> flags;
  const GenBatch out = disentangle_attributes(b, f.prior, 0.0, rng, &flags);
  EXPECT_EQ(out.attributes, b.attributes);
  EXPECT_EQ(out.categories, b.categories);
  EXPECT_EQ(std::count(flags.begin(), flags.end(), 1), 0);
}

TEST(Disentangle, FullProbabilityResamplesEveryObject) {
  Fixture f;
  const GenBatch b = big_batch(f, 20);
  Rng rng(2);
  std::vector<char> flags;
  const GenBatch out = disentangle_attributes(b, f.prior, 1.0, rng, &flags);
  EXPECT_EQ(std::count(flags.begin(), flags.end(), 1), b.size());
  int changed = 0;
  for (int i = 0; i < b.size(); ++i) {
    const auto& a = out.attributes[static_cast<size_t>(i)];
    EXPECT_EQ(a.size(), b.attributes[static_cast<size_t>(i)].size());
    for (int k : a) EXPECT_GT(f.prior.count(b.categories[static_cast<size_t>(i)], k), 0);
    changed += a != b.attributes[static_cast<size_t>(i)];
  }
  EXPECT_GT(changed, 0);
  EXPECT_EQ(out.boxes, b.boxes);
}

TEST(Disentangle, HalfProbabilityFrequency) {
  Fixture f;
  GenBatch b = big_batch(f, 1);
  while (b.size() < 10000) {
    const GenBatch more = big_batch(f, 50);
    b.categories.insert(b.categories.end(), more.categories.begin(), more.categories.end());
    b.attributes.insert(b.attributes.end(), more.attributes.begin(), more.attributes.end());
    b.boxes.insert(b.boxes.end(), more.boxes.begin(), more.boxes.end());
  }
  Rng rng(3);
  std::vector<char> flags;
  disentangle_attributes(b, f.prior, 0.5, rng, &flags);
  const double frac = static_cast<double>(std::count(flags.begin(), flags.end(), 1)) / b.size();
  EXPECT_NEAR(frac, 0.5, 0.02);
}

TEST(Disentangle, RejectsBadProbability) {
  Fixture f;
  Rng rng(1);
  EXPECT_THROW(disentangle_attributes(big_batch(f, 1), f.prior, 1.5, rng), Error);
}

struct TripleSetup {
  Fixture f;
  TrainingConfig cfg = small_config();
  Rng init{5};
  Models models{cfg.model, init};
  std::vector<Layout> layouts = f.layouts(3);
  Tensor images;

  TripleSetup() {
    std::vector<Example> ex(f.data.begin(), f.data.begin() + 3);
    images = stack_images(std::span<const Example>(ex));
  }
};

TEST(Triple, SetsTwoAndThreeShareCodesAndAttributes) {
  TripleSetup s;
  s.cfg.p_replace = 1.0;
  Rng rng(9);
  const TrainingTriple t = build_triple(s.images, s.layouts, s.cfg, s.models, s.f.prior, rng);
  EXPECT_EQ(t.rand.z.node(), t.shift.z.node());
  EXPECT_EQ(t.rand.batch.attributes, t.shift.batch.attributes);
  EXPECT_EQ(t.rand.batch.categories, t.shift.batch.categories);
  // Resampling never touches the reconstruction path.
  EXPECT_EQ(t.rec.batch.attributes, make_gen_batch(s.layouts).attributes);
  EXPECT_NE(t.rec.z.node(), t.rand.z.node());
}

TEST(Triple, ShiftedLayoutDiffersOnlyInX) {
  TripleSetup s;
  Rng rng(10);
  const TrainingTriple t = build_triple(s.images, s.layouts, s.cfg, s.models, s.f.prior, rng);
  ASSERT_EQ(t.shifted_layouts.size(), s.layouts.size());
  bool any_moved = false;
  for (size_t i = 0; i < s.layouts.size(); ++i) {
    const Layout& a = s.layouts[i];
    const Layout& b = t.shifted_layouts[i];
    EXPECT_EQ(a.canvas, b.canvas);
    ASSERT_EQ(a.size(), b.size());
    for (int k = 0; k < a.size(); ++k) {
      const auto& oa = a.objects[static_cast<size_t>(k)];
      const auto& ob = b.objects[static_cast<size_t>(k)];
      EXPECT_EQ(oa.category, ob.category);
      EXPECT_EQ(oa.attributes, ob.attributes);
      EXPECT_EQ(oa.bbox.y0, ob.bbox.y0);
      EXPECT_EQ(oa.bbox.y1, ob.bbox.y1);
      any_moved |= oa.bbox.x0 != ob.bbox.x0;
    }
  }
  EXPECT_TRUE(any_moved);
  for (size_t i = 0; i < t.shift.batch.boxes.size(); ++i)
    EXPECT_EQ(t.shift.batch.boxes[i], make_gen_batch(t.shifted_layouts).boxes[i]);
}

TEST(Triple, ZeroShiftKeepsLayout) {
  TripleSetup s;
  s.cfg.shift_magnitude = 0.0;
  Rng rng(11);
  const TrainingTriple t = build_triple(s.images, s.layouts, s.cfg, s.models, s.f.prior, rng);
  EXPECT_EQ(t.shifted_layouts, s.layouts);
}

TEST(Triple, PathShapes) {
  TripleSetup s;
  Rng rng(12);
  const TrainingTriple t = build_triple(s.images, s.layouts, s.cfg, s.models, s.f.prior, rng);
  const GeneratedPaths p = generate_paths(s.models.generator, t);
  for (const Tensor* x : {&p.rec, &p.rand, &p.shift}) EXPECT_EQ(x->shape(), (nn::Shape{3, 3, 8, 8}));
}

// Generator-side gradient with λ5..λ7 zeroed equals the gradient of the other
// four parts alone.
TEST(GeneratorTerms, ZeroedReconstructionWeightsDropOut) {
  auto grads = [](bool drop_terms, double kl_weight) {
    TripleSetup s;
    Rng rng(13);
    const TrainingTriple t = build_triple(s.images, s.layouts, s.cfg, s.models, s.f.prior, rng);
    const GeneratedPaths p = generate_paths(s.models.generator, t);
    const auto w = attribute_weights(s.f.prior, 7);
    LossTerms terms = generator_terms(s.models, s.images, p, t, w);
    LossWeights lw;
    lw.kl = kl_weight;
    lw.img_recon = 0;
    lw.latent_recon = 0;
    if (drop_terms) terms.kl = terms.img_recon = terms.latent_recon = Tensor();
    const auto params = s.models.generator_side();
    for (auto& p2 : params) Tensor(p2.tensor).zero_grad();
    generator_total(terms, lw).backward();
    std::vector<std::vector<double>> out;
    for (const auto& p2 : params) out.emplace_back(p2.tensor.grad().begin(), p2.tensor.grad().end());
    return out;
  };
  const auto full = grads(false, 0.0), reduced = grads(true, 0.0);
  ASSERT_EQ(full.size(), reduced.size());
  double max_diff = 0, norm = 0;
  for (size_t i = 0; i < full.size(); ++i)
    for (size_t j = 0; j < full[i].size(); ++j) {
      max_diff = std::max(max_diff, std::abs(full[i][j] - reduced[i][j]));
      norm += full[i][j] * full[i][j];
    }
  EXPECT_EQ(max_diff, 0.0);
  EXPECT_GT(norm, 0.0);
  // With λ5 nonzero the encoder gradient changes.
  const auto with_kl = grads(false, 1.0);
  double diff = 0;
  for (size_t i = 0; i < full.size(); ++i)
    for (size_t j = 0; j < full[i].size(); ++j) diff += std::abs(full[i][j] - with_kl[i][j]);
  EXPECT_GT(diff, 0.0);
}

TEST(Trainer, StepReportsFiniteLossesInPhaseOrder) {
  Fixture f;
  Trainer t(small_config(), f.vocab, f.prior);
  const StepReport r = t.step(f.data, nullptr);
  EXPECT_EQ(r.step, 1);
  EXPECT_EQ(r.events, (std::vector<std::string>{"d_update", "g_backward", "g_update"}));
  EXPECT_EQ(t.discriminator_updates(), 1);
  EXPECT_EQ(t.generator_updates(), 1);
  for (double v : {r.parts.adv_img, r.parts.adv_obj, r.parts.obj_cls, r.parts.attr_cls, r.parts.kl,
                   r.parts.img_recon, r.parts.latent_recon, r.generator_total, r.discriminator_total})
    EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(r.generator_total, generator_total(r.parts, t.config().weights));
}

// The generator loss of step 1 equals the loss recomputed from the initial
// generator and the already-updated discriminators.
TEST(Trainer, GeneratorLossSeesUpdatedDiscriminators) {
  Fixture f;
  const TrainingConfig cfg = small_config(21);
  Trainer t(cfg, f.vocab, f.prior);
  std::vector<const Example*> used;
  const StepReport r = t.step(f.data, &used);

  Rng init(mix_seed(cfg.seed, 1));
  Models m(cfg.model, init);
  const auto before = m.discriminator_side();
  const auto after = t.models().discriminator_side();
  ASSERT_EQ(before.size(), after.size());
  bool changed = false;
  for (size_t i = 0; i < before.size(); ++i) {
    Tensor dst = before[i].tensor;
    changed |= dst.values() != after[i].tensor.values();
    std::copy(after[i].tensor.values().begin(), after[i].tensor.values().end(), dst.mutable_data().begin());
  }
  EXPECT_TRUE(changed);

  std::vector<Layout> layouts;
  for (const Example* e : used) layouts.push_back(e->layout);
  const Tensor images = stack_images(std::span<const Example* const>(used));
  Rng rng(mix_seed(cfg.seed, 2));
  m.generator.set_training(true);
  const TrainingTriple triple = build_triple(images, layouts, cfg, m, f.prior, rng);
  const GeneratedPaths p = generate_paths(m.generator, triple);
  const LossTerms terms = generator_terms(m, images, p, triple, attribute_weights(f.prior, 7));
  EXPECT_EQ(terms.adv_img.item(), r.parts.adv_img);
  EXPECT_EQ(terms.adv_obj.item(), r.parts.adv_obj);
  EXPECT_EQ(terms.obj_cls.item(), r.parts.obj_cls);
  EXPECT_EQ(terms.attr_cls.item(), r.parts.attr_cls);
  EXPECT_EQ(terms.latent_recon.item(), r.parts.latent_recon);
}

TEST(Trainer, NonFiniteLossNamesTerm) {
  Fixture f;
  f.data[0].image[5] = std::nan("");
  TrainingConfig cfg = small_config();
  Trainer t(cfg, f.vocab, f.prior);
  try {
    t.step(std::span<const Example>(f.data.data(), 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("loss term '"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(Trainer, RejectsVocabularyMismatch) {
  Fixture f;
  TrainingConfig cfg = small_config();
  cfg.model.num_attributes = 4;
  EXPECT_THROW(Trainer(cfg, f.vocab, f.prior), Error);
}

std::vector<std::string> run_log(const Fixture& f, const TrainingConfig& cfg, int steps) {
  Trainer t(cfg, f.vocab, f.prior);
  std::vector<std::string> lines;
  for (int i = 0; i < steps; ++i) lines.push_back(report_json(t.step(f.data, nullptr)));
  return lines;
}

TEST(Trainer, HundredStepsBitIdentical) {
  Fixture f;
  const TrainingConfig cfg = small_config(8);
  const auto a = run_log(f, cfg, 100), b = run_log(f, cfg, 100);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, run_log(f, small_config(9), 100));
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  Fixture f;
  const TrainingConfig cfg = small_config(4);
  const auto full = run_log(f, cfg, 6);
  const fs::path dir = fs::temp_directory_path() / "attrgan_resume_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    Trainer t(cfg, f.vocab, f.prior);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(report_json(t.step(f.data, nullptr)), full[static_cast<size_t>(i)]);
    t.save(dir / "mid.ckpt");
  }
  Trainer r = Trainer::load(dir / "mid.ckpt");
  EXPECT_EQ(r.iteration(), 3);
  EXPECT_EQ(r.discriminator_updates(), 3);
  for (int i = 3; i < 6; ++i) EXPECT_EQ(report_json(r.step(f.data, nullptr)), full[static_cast<size_t>(i)]);
  fs::remove_all(dir);
}

TEST(Trainer, TrainWritesNineFieldLogAndCheckpoints) {
  Fixture f;
  const TrainingConfig cfg = small_config(5);
  const fs::path dir = fs::temp_directory_path() / "attrgan_train_log_test";
  fs::remove_all(dir);
  Trainer t(cfg, f.vocab, f.prior);
  std::ostringstream log;
  int callbacks = 0;
  t.train(f.data, dir, log, [&](const StepReport&) { ++callbacks; });
  EXPECT_EQ(callbacks, 6);
  std::istringstream in(log.str());
  std::string line;
  int n = 0;
  const std::vector<std::string> fields{"adv_img", "adv_obj", "obj_cls", "attr_cls", "kl",
                                        "img_recon", "latent_recon", "L_G", "L_D"};
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<int>(), ++n);
    EXPECT_EQ(j.size(), fields.size() + 1);
    for (const auto& k : fields) {
      ASSERT_TRUE(j.contains(k)) << k;
      EXPECT_TRUE(std::isfinite(j[k].get<double>()));
    }
  }
  EXPECT_EQ(n, 6);
  EXPECT_TRUE(fs::exists(dir / "checkpoint_000003.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint_000006.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "latest.ckpt"));
  const LoadedModel m = load_model(dir / "latest.ckpt");
  EXPECT_EQ(m.iteration, 6);
  EXPECT_FALSE(m.models.generator.training());
  EXPECT_EQ(m.vocab.attributes, f.vocab.attributes);
  EXPECT_EQ(m.prior, f.prior);
  fs::remove_all(dir);
}

TEST(Archive, RoundTripAndCorruption) {
  const fs::path dir = fs::temp_directory_path() / "attrgan_archive_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Archive a;
  a.tensors.push_back({"x", Tensor::from({2, 3}, {1, 2, 3, 4, 5, -6.5})});
  a.tensors.push_back({"y.z", Tensor::from({1}, {1e-300})});
  a.metadata = R"({"k": 1})";
  write_archive(dir / "a.ckpt", a);
  const Archive b = read_archive(dir / "a.ckpt");
  ASSERT_EQ(b.tensors.size(), 2u);
  EXPECT_EQ(b.tensors[0].name, "x");
  EXPECT_EQ(b.tensors[0].tensor.shape(), (nn::Shape{2, 3}));
  EXPECT_EQ(b.tensors[0].tensor.values(), a.tensors[0].tensor.values());
  EXPECT_EQ(b.tensors[1].tensor.values(), a.tensors[1].tensor.values());
  EXPECT_EQ(nlohmann::json::parse(b.metadata)["k"], 1);

  const auto size = fs::file_size(dir / "a.ckpt");
  fs::resize_file(dir / "a.ckpt", size - 8);
  EXPECT_THROW(read_archive(dir / "a.ckpt"), Error);
  EXPECT_THROW(read_archive(dir / "missing.ckpt"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace attrgan
