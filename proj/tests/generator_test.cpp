#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "attrgan/errors.hpp"
#include "attrgan/generator.hpp"
#include "test_util.hpp"

namespace attrgan {
namespace {

using namespace testutil;
using nn::Shape;

double linf(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

std::map<std::string, Tensor> by_name(const nn::Module& m) {
  std::map<std::string, Tensor> out;
  for (auto& p : m.parameters()) out[p.name] = p.tensor;
  return out;
}

ObjectSpec obj(int cat, std::vector<int> attrs, BBox b) { return {cat, std::move(attrs), b}; }

Layout layout_of(int canvas, std::vector<ObjectSpec> objects) {
  Layout l;
  l.canvas = {canvas, canvas};
  l.objects = std::move(objects);
  return l;
}

Layout three_objects(int canvas) {
  return layout_of(canvas, {obj(0, {0, 2}, {0.1, 0.1, 0.5, 0.6}), obj(1, {1}, {0.4, 0.3, 0.9, 0.8}),
                            obj(2, {}, {0.0, 0.5, 0.3, 1.0})});
}

// ---- composition ----

TEST(ComposeTest, FullCanvasAndOutsideCells) {
  Tensor v = Tensor::from({1, 3}, {0.5, -1.0, 2.0});
  Tensor f = compose_feature_map(obj(0, {}, {0, 0, 1, 1}), v, 4);
  ASSERT_EQ(f.shape(), (Shape{1, 3, 4, 4}));
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 16; ++p) EXPECT_EQ(f.at(c * 16 + p), v.at(c));
  Tensor g = compose_feature_map(obj(0, {}, {0.5, 0.5, 1, 1}), v, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        EXPECT_EQ(g.at((c * 4 + y) * 4 + x), (y >= 2 && x >= 2) ? v.at(c) : 0.0);
}

// Column translation by k cells, zero fill.
Tensor translate_columns(const Tensor& f, int k) {
  const int d = f.dim(1), s = f.dim(2);
  std::vector<double> out(static_cast<size_t>(f.size()), 0.0);
  for (int c = 0; c < d; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const int src = x - k;
        if (src >= 0 && src < s) out[static_cast<size_t>((c * s + y) * s + x)] = f.at((c * s + y) * s + src);
      }
  return Tensor::from(f.shape(), std::move(out));
}

TEST(ComposeTest, ExhaustiveHorizontalShiftEquivariance) {
  const int s = 16, sub = 64;  // box edges on a 1/64 lattice, shifts in whole cells
  Tensor v = Tensor::from({1, 2}, {1.25, -0.5});
  long checked = 0, mismatches = 0, expected = 0;
  for (int a = 0; a < sub; ++a)
    for (int b = a + 1; b <= sub; ++b) {
      Layout l = layout_of(64, {obj(0, {}, {a / double(sub), 0.25, b / double(sub), 0.75})});
      Tensor base = compose_feature_map(l.objects[0], v, s);
      expected += (sub - b) / (sub / s) + a / (sub / s) + 1;  // every in-canvas whole-cell shift
      for (int k = -s; k <= s; ++k) {
        const double dx = static_cast<double>(k) / s;
        const double x0 = l.objects[0].bbox.x0 + dx, x1 = l.objects[0].bbox.x1 + dx;
        if (x0 < 0 || x1 > 1) continue;
        std::vector<double> shifts{dx};
        Layout moved = shift_layout(l, {shifts, ShiftPolicy::kReject});
        Tensor f = compose_feature_map(moved.objects[0], v, s);
        ++checked;
        if (f.values() != translate_columns(base, k).values()) ++mismatches;
      }
    }
  EXPECT_EQ(mismatches, 0);
  EXPECT_EQ(checked, expected);
}

// ---- generator pieces ----

class MiniatureTest : public ::testing::Test {
 protected:
  MiniatureTest() : rng_(42), config_(miniature_model()), gen_(config_, rng_) {}
  Rng rng_;
  ModelConfig config_;
  Generator gen_;
};

TEST_F(MiniatureTest, EncodeBoxesEqualsEncodingComposedCanvases) {
  const int d = config_.embed_dim + config_.latent_dim;
  Tensor v = random_tensor({3, d}, rng_);
  std::vector<BBox> boxes{{0.1, 0.2, 0.6, 0.9}, {0, 0, 1, 1}, {0.7, 0.7, 0.8, 0.8}};
  std::vector<Tensor> canvases;
  for (int i = 0; i < 3; ++i) {
    std::vector<int> row{i};
    canvases.push_back(compose_feature_map(obj(0, {}, boxes[static_cast<size_t>(i)]),
                                           nn::gather_rows(v, row), config_.compose_grid));
  }
  Tensor a = gen_.encode_objects(nn::concat(canvases, 0));
  Tensor b = gen_.encode_boxes(v, boxes);
  ASSERT_EQ(a.shape(), (Shape{3, config_.channels_h, config_.fused_grid, config_.fused_grid}));
  EXPECT_LT(linf(a, b), 1e-12);
  Tensor zero = gen_.encode_objects(Tensor::zeros({1, d, config_.compose_grid, config_.compose_grid}));
  for (double x : zero.values()) EXPECT_TRUE(std::isfinite(x));
  EXPECT_EQ(gen_.encode_objects(nn::concat(canvases, 0)).values(), a.values());
}

TEST_F(MiniatureTest, FuseSingleObjectIsOneLstmStep) {
  const int ch = config_.channels_h, g = config_.fused_grid, plane = g * g;
  Tensor x = random_tensor({1, ch, g, g}, rng_);
  std::vector<int> one{1};
  Tensor h = gen_.fuse_objects(x, one);
  auto p = by_name(gen_);
  // gates from [x, h0 = 0]
  Tensor gates = nn::conv2d(nn::concat({x, Tensor::zeros({1, ch, g, g})}, 1), p["fuser.weight"],
                            p["fuser.bias"], 1, 1);
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  for (int c = 0; c < ch; ++c)
    for (int q = 0; q < plane; ++q) {
      const double i = sig(gates.at(c * plane + q));
      const double o = sig(gates.at((2 * ch + c) * plane + q));
      const double cand = std::tanh(gates.at((3 * ch + c) * plane + q));
      const double cell = i * cand;  // forget gate multiplies the zero state
      EXPECT_NEAR(h.at(c * plane + q), o * std::tanh(cell), 1e-12);
    }
}

TEST_F(MiniatureTest, FuseShapeOrderAndBatching) {
  const int ch = config_.channels_h, g = config_.fused_grid;
  Tensor x = random_tensor({5, ch, g, g}, rng_);
  std::vector<int> five{5};
  Tensor h = gen_.fuse_objects(x, five);
  EXPECT_EQ(h.shape(), (Shape{1, ch, g, g}));
  std::vector<int> rev{4, 3, 2, 1, 0};
  EXPECT_GT(linf(h, gen_.fuse_objects(nn::gather_rows(x, rev), five)), 0.0);
  // two images (2 and 3 objects) fused together equal each fused alone
  std::vector<int> counts{2, 3}, first{0, 1}, second{2, 3, 4}, c2{2}, c3{3};
  Tensor both = gen_.fuse_objects(x, counts);
  Tensor a = gen_.fuse_objects(nn::gather_rows(x, first), c2);
  Tensor b = gen_.fuse_objects(nn::gather_rows(x, second), c3);
  EXPECT_LT(linf(both, nn::concat({a, b}, 0)), 1e-12);
  std::vector<int> none;
  EXPECT_THROW(gen_.fuse_objects(x, none), Error);
  std::vector<int> wrong{4};
  EXPECT_THROW(gen_.fuse_objects(x, wrong), Error);
}

TEST_F(MiniatureTest, ContextChannelsAreConstant) {
  const int ch = config_.channels_h, cg = config_.channels_g, g = config_.fused_grid;
  Tensor h = random_tensor({2, ch, g, g}, rng_);
  Tensor hg = gen_.encode_global_context(h);
  ASSERT_EQ(hg.shape(), (Shape{2, ch + cg, g, g}));
  const int plane = g * g;
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < ch; ++c)
      for (int q = 0; q < plane; ++q)
        EXPECT_EQ(hg.at((n * (ch + cg) + c) * plane + q), h.at((n * ch + c) * plane + q));
    for (int c = ch; c < ch + cg; ++c)
      for (int q = 1; q < plane; ++q)
        EXPECT_EQ(hg.at((n * (ch + cg) + c) * plane + q), hg.at((n * (ch + cg) + c) * plane));
  }
}

TEST_F(MiniatureTest, ContextOfConstantMapMatchesDirectPath) {
  const int ch = config_.channels_h, g = config_.fused_grid;
  Tensor h = Tensor::full({1, ch, g, g}, 0.7);
  Tensor vec = gen_.global_context_vector(h);
  auto p = by_name(gen_);
  // direct scalar evaluation of conv(s2) -> leaky -> conv(s2) -> leaky -> mean
  auto conv = [](const Tensor& x, const Tensor& w, const Tensor& b) {
    const int ci = x.dim(1), s = x.dim(2), co = w.dim(0), so = (s + 2 - 3) / 2 + 1;
    std::vector<double> y(static_cast<size_t>(co * so * so));
    for (int o = 0; o < co; ++o)
      for (int oy = 0; oy < so; ++oy)
        for (int ox = 0; ox < so; ++ox) {
          double acc = b.at(o);
          for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= s || ix < 0 || ix >= s) continue;
                acc += w.at(((o * ci + c) * 3 + ky) * 3 + kx) * x.at((c * s + iy) * s + ix);
              }
          y[static_cast<size_t>((o * so + oy) * so + ox)] = acc > 0 ? acc : 0.2 * acc;
        }
    return Tensor::from({1, co, so, so}, std::move(y));
  };
  Tensor y = conv(conv(h, p["context.0.weight"], p["context.0.bias"]), p["context.1.weight"],
                  p["context.1.bias"]);
  const int cg = y.dim(1), cells = y.dim(2) * y.dim(3);
  for (int c = 0; c < cg; ++c) {
    double m = 0;
    for (int q = 0; q < cells; ++q) m += y.at(c * cells + q);
    EXPECT_NEAR(vec.at(c), m / cells, 1e-12);
  }
}

TEST(SpadeTest, ZeroModulationGivesNormalizedInput) {
  Rng rng(5);
  Spade s(4, 3, 5, rng);
  for (auto& p : s.modulation().parameters())
    for (double& v : p.tensor.mutable_data()) v = 0.0;
  Tensor x = random_tensor({3, 4, 6, 6}, rng, -2, 3);
  Tensor h = random_tensor({3, 3, 2, 2}, rng);
  for (auto mode : {nn::NormMode::kBatch, nn::NormMode::kInstance}) {
    Tensor y = s(x, h, mode, false, 0.1);
    EXPECT_EQ(y.values(), s.normalized(x, mode).values());
    EXPECT_EQ(y.shape(), x.shape());
  }
}

TEST(SpadeTest, BatchNormalizedStatistics) {
  Rng rng(6);
  Spade s(3, 2, 4, rng);
  Tensor x = random_tensor({4, 3, 5, 5}, rng, -3, 7);
  Tensor y = s.normalized(x, nn::NormMode::kBatch);
  const int per = 4 * 25;
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (int n = 0; n < 4; ++n)
      for (int q = 0; q < 25; ++q) m += y.at((n * 3 + c) * 25 + q);
    m /= per;
    for (int n = 0; n < 4; ++n)
      for (int q = 0; q < 25; ++q) v += std::pow(y.at((n * 3 + c) * 25 + q) - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v / per, 1.0, 1e-5);
  }
}

TEST(SpadeTest, RunningStatisticsFollowBatch) {
  Rng rng(7);
  Spade s(2, 2, 2, rng);
  Tensor x = random_tensor({2, 2, 3, 3}, rng, 1, 5);
  Tensor h = random_tensor({2, 2, 3, 3}, rng);
  s(x, h, nn::NormMode::kBatch, true, 1.0);  // momentum 1 copies the batch statistics
  nn::NamedTensors buf;
  s.collect_buffers("", buf);
  for (int c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (int n = 0; n < 2; ++n)
      for (int q = 0; q < 9; ++q) m += x.at((n * 2 + c) * 9 + q);
    m /= 18;
    for (int n = 0; n < 2; ++n)
      for (int q = 0; q < 9; ++q) v += std::pow(x.at((n * 2 + c) * 9 + q) - m, 2);
    EXPECT_NEAR(buf[0].tensor.at(c), m, 1e-12);
    EXPECT_NEAR(buf[1].tensor.at(c), v / 17, 1e-12);
  }
  // running mode then normalizes with those buffers
  Tensor r = s.normalized(x, nn::NormMode::kRunning);
  EXPECT_NEAR(r.at(0), (x.at(0) - buf[0].tensor.at(0)) / std::sqrt(buf[1].tensor.at(0) + 1e-5), 1e-12);
}

TEST_F(MiniatureTest, GenerateContract) {
  Layout l = three_objects(config_.canvas);
  Tensor z1 = sample_latent_prior(3, config_.latent_dim, rng_);
  Tensor z2 = sample_latent_prior(3, config_.latent_dim, rng_);
  Tensor img = gen_.generate(l, z1);
  ASSERT_EQ(img.shape(), (Shape{1, 3, config_.canvas, config_.canvas}));
  for (double v : img.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(gen_.generate(l, z1).values(), img.values());
  EXPECT_GT(linf(img, gen_.generate(l, z2)), 0.0);
  AttributeOverrides ov(3);
  ov[1] = std::vector<int>{3};
  EXPECT_GT(linf(img, gen_.generate(l, z1, ov)), 0.0);
  EXPECT_THROW(gen_.generate(l, sample_latent_prior(2, config_.latent_dim, rng_)), Error);
  Layout bad = l;
  bad.objects[0].category = 7;
  EXPECT_THROW(gen_.generate(bad, z1), Error);
}

TEST(GeneratorTest, BatchInvarianceInInstanceMode) {
  Rng rng(8);
  ModelConfig c = desk_model();
  c.norm = nn::NormMode::kInstance;
  Generator gen(c, rng);
  Layout a = three_objects(c.canvas);
  Layout b = layout_of(c.canvas, {obj(1, {4, 5}, {0.2, 0.2, 0.7, 0.7})});
  Tensor za = sample_latent_prior(3, c.latent_dim, rng), zb = sample_latent_prior(1, c.latent_dim, rng);
  nn::NoGradGuard ng;
  std::vector<Layout> both{a, b};
  Tensor batch = gen.forward(make_gen_batch(both), nn::concat({za, zb}, 0));
  Tensor sep = nn::concat({gen.generate(a, za), gen.generate(b, zb)}, 0);
  EXPECT_LT(linf(batch, sep), 1e-12);
}

TEST(GeneratorTest, TrainingUpdatesRunningStatsEvalDoesNot) {
  Rng rng(9);
  ModelConfig c = desk_model();
  Generator gen(c, rng);
  Layout l = three_objects(c.canvas);
  Tensor z = sample_latent_prior(3, c.latent_dim, rng);
  auto snapshot = [&] {
    std::vector<double> v;
    for (auto& b : gen.buffers()) v.insert(v.end(), b.tensor.values().begin(), b.tensor.values().end());
    return v;
  };
  const auto before = snapshot();
  gen.set_training(false);
  gen.generate(l, z);
  EXPECT_EQ(snapshot(), before);
  gen.set_training(true);
  gen.generate(l, z);
  EXPECT_NE(snapshot(), before);
}

TEST(GeneratorTest, DecodeShapesAndRangeAt64And128) {
  for (auto make : {paper64_model, paper128_model}) {
    Rng rng(10);
    ModelConfig c = make();
    Generator gen(c, rng);
    Layout l = layout_of(c.canvas, {obj(3, {1, 50}, {0.1, 0.2, 0.6, 0.7}), obj(100, {}, {0.5, 0.5, 1, 1})});
    nn::NoGradGuard ng;
    Tensor img = gen.generate(l, sample_latent_prior(2, c.latent_dim, rng));
    EXPECT_EQ(img.shape(), (Shape{1, 3, c.canvas, c.canvas}));
    for (double v : img.values()) ASSERT_TRUE(v >= -1.0 && v <= 1.0);
  }
}

TEST(GeneratorTest, FusedMapHasConfiguredShape) {
  Rng rng(11);
  ModelConfig c = paper64_model();
  c.channels_h = 16;
  c.object_encoder_channels = {8, 8};
  Generator gen(c, rng);
  nn::NoGradGuard ng;
  Tensor v = random_tensor({2, c.embed_dim + c.latent_dim}, rng);
  std::vector<BBox> boxes{{0, 0, 0.5, 0.5}, {0.2, 0.1, 0.9, 0.4}};
  Tensor e = gen.encode_boxes(v, boxes);
  EXPECT_EQ(e.shape(), (Shape{2, 16, 8, 8}));
}

// ---- gradient checks ----

TEST_F(MiniatureTest, GeneratorGradientsMatchFiniteDifferences) {
  Layout a = three_objects(config_.canvas);
  Layout b = layout_of(config_.canvas, {obj(1, {0}, {0.25, 0.0, 1.0, 0.5})});
  std::vector<Layout> both{a, b};
  GenBatch batch = make_gen_batch(both);
  Tensor z = sample_latent_prior(4, config_.latent_dim, rng_);
  expect_grad_ok([&] { return weighted_sum(gen_.forward(batch, z), 3); }, gen_.parameters(), 1e-3);
}

TEST_F(MiniatureTest, ComponentGradientsMatchFiniteDifferences) {
  const int ch = config_.channels_h, g = config_.fused_grid;
  Tensor enc = random_param({3, ch, g, g}, rng_);
  std::vector<int> counts{2, 1};
  nn::NamedTensors fuser{{"x", enc}};
  for (auto& [n, t] : by_name(gen_))
    if (n.rfind("fuser", 0) == 0) fuser.push_back({n, t});
  expect_grad_ok([&] { return weighted_sum(gen_.fuse_objects(enc, counts), 4); }, fuser, 1e-3);

  Tensor h = random_param({2, ch, g, g}, rng_);
  nn::NamedTensors ctx{{"h", h}};
  for (auto& [n, t] : by_name(gen_))
    if (n.rfind("context", 0) == 0) ctx.push_back({n, t});
  expect_grad_ok([&] { return weighted_sum(gen_.encode_global_context(h), 5); }, ctx, 1e-3);

  Rng rng(12);
  Spade s(3, 4, 5, rng);
  Tensor x = random_param({2, 3, 4, 4}, rng);
  Tensor hh = random_param({2, 4, 2, 2}, rng);
  nn::NamedTensors sp = s.parameters();
  sp.push_back({"x", x});
  sp.push_back({"h", hh});
  for (auto mode : {nn::NormMode::kBatch, nn::NormMode::kInstance})
    expect_grad_ok([&] { return weighted_sum(s(x, hh, mode, false, 0.1), 6); }, sp, 1e-3);
}

}  // namespace
}  // namespace attrgan
