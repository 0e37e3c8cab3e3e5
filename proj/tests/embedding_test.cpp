#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "attrgan/embedding.hpp"
#include "attrgan/errors.hpp"
#include "test_util.hpp"

namespace attrgan {
namespace {

using namespace testutil;

double linf(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

TEST(EncodeAttributesTest, MultiHot) {
  std::vector<int> a{2, 5};
  EXPECT_EQ(encode_attributes(a, 8), (std::vector<double>{0, 0, 1, 0, 0, 1, 0, 0}));
  EXPECT_EQ(encode_attributes({}, 4), (std::vector<double>(4, 0.0)));
  std::vector<int> one{2};
  EXPECT_EQ(encode_attributes(one, 4), encode_attributes(one, 4));
}

TEST(EncodeAttributesTest, Errors) {
  std::vector<int> out{8};
  try {
    encode_attributes(out, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownIndex);
  }
  std::vector<int> dup{1, 1};
  EXPECT_THROW(encode_attributes(dup, 8), Error);
}

TEST(EncodeAttributesTest, InjectiveOnAllSubsets) {
  const int a = 6;
  std::set<std::vector<double>> seen;
  for (int mask = 0; mask < (1 << a); ++mask) {
    std::vector<int> s;
    for (int i = 0; i < a; ++i)
      if (mask & (1 << i)) s.push_back(i);
    auto e = encode_attributes(s, a);
    double total = 0;
    for (double v : e) total += v;
    EXPECT_EQ(total, static_cast<double>(s.size()));
    seen.insert(e);
  }
  EXPECT_EQ(seen.size(), 64u);
}

TEST(EmbeddingTest, ShapesAndDeterminism) {
  Rng rng(1);
  ModelConfig c = paper64_model();
  Embedding emb(c, rng);
  std::vector<int> attrs{3, 70};
  Tensor a = emb.joint(5, attrs), b = emb.joint(5, attrs);
  EXPECT_EQ(a.shape(), (nn::Shape{1, 64}));
  EXPECT_EQ(a.values(), b.values());
  nn::NamedTensors p;
  emb.collect_parameters("", p);
  EXPECT_EQ(p[0].tensor.shape(), (nn::Shape{178, 64}));
  EXPECT_EQ(p[1].tensor.shape(), (nn::Shape{128, 64 + 106}));
}

TEST(EmbeddingTest, TableInitStatistics) {
  Rng rng(2);
  Embedding emb(paper64_model(), rng);
  const auto& t = emb.table().values();
  double mean = 0, sq = 0;
  for (double v : t) mean += v;
  mean /= t.size();
  for (double v : t) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(sq / t.size()), 0.02, 0.001);
}

TEST(EmbeddingTest, FlippingOneAttributeChangesOutput) {
  Rng rng(3);
  Embedding emb(desk_model(), rng);
  for (int bit = 0; bit < 7; ++bit) {
    std::vector<int> base{}, flipped{bit};
    EXPECT_GT(linf(emb.joint(1, base), emb.joint(1, flipped)), 0.0);
  }
}

TEST(EmbeddingTest, BatchEqualsPerItem) {
  Rng rng(4);
  ModelConfig c = desk_model();
  Embedding emb(c, rng);
  std::vector<int> cats{0, 2, 1};
  std::vector<std::vector<int>> attrs{{0, 5}, {}, {1, 2, 6}};
  Tensor batch = emb(cats, encode_attribute_batch(attrs, c.num_attributes));
  for (int i = 0; i < 3; ++i) {
    Tensor one = emb.joint(cats[static_cast<size_t>(i)], attrs[static_cast<size_t>(i)]);
    for (int j = 0; j < c.embed_dim; ++j) EXPECT_NEAR(batch.at(i * c.embed_dim + j), one.at(j), 1e-12);
  }
}

TEST(EmbeddingTest, RejectsBadInputs) {
  Rng rng(5);
  ModelConfig c = desk_model();
  Embedding emb(c, rng);
  std::vector<int> cats{3};
  EXPECT_THROW(emb(cats, Tensor::zeros({1, c.num_attributes})), Error);
  std::vector<int> ok{0};
  EXPECT_THROW(emb(ok, Tensor::zeros({1, c.num_attributes + 1})), Error);
}

TEST(EmbeddingTest, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  ModelConfig c = miniature_model();
  Embedding emb(c, rng);
  std::vector<int> cats{0, 2, 1};
  std::vector<std::vector<int>> attrs{{0, 3}, {}, {1}};
  Tensor e = encode_attribute_batch(attrs, c.num_attributes);
  nn::NamedTensors p;
  emb.collect_parameters("", p);
  expect_grad_ok([&] { return weighted_sum(emb(cats, e), 9); }, p, 1e-4);
}

TEST(LatentPriorTest, MomentsShapeAndSeed) {
  Rng rng(7);
  Tensor z = sample_latent_prior(1000, 100, rng);
  EXPECT_EQ(z.shape(), (nn::Shape{1000, 100}));
  double mean = 0, sq = 0;
  for (double v : z.values()) mean += v;
  mean /= z.size();
  for (double v : z.values()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / z.size()), 1.0, 0.02);
  Rng a(8), b(8);
  EXPECT_EQ(sample_latent_prior(3, 64, a).values(), sample_latent_prior(3, 64, b).values());
  EXPECT_EQ(sample_latent_prior(3, 64, a).shape(), (nn::Shape{3, 64}));
  EXPECT_THROW(sample_latent_prior(0, 64, a), Error);
}

TEST(CropEncoderTest, ShapesDeterminismAndSensitivity) {
  Rng rng(9);
  ModelConfig c = paper64_model();
  c.crop_encoder_channels = {8, 8, 8, 8};
  CropEncoder q(c, rng);
  Tensor crop = random_tensor({1, 3, 32, 32}, rng);
  Posterior p = q(crop), p2 = q(crop);
  EXPECT_EQ(p.mu.shape(), (nn::Shape{1, 64}));
  EXPECT_EQ(p.logvar.shape(), (nn::Shape{1, 64}));
  EXPECT_EQ(p.mu.values(), p2.mu.values());
  Posterior other = q(random_tensor({1, 3, 32, 32}, rng));
  EXPECT_GT(linf(p.mu, other.mu), 0.0);
  EXPECT_THROW(q(Tensor::zeros({1, 3, 16, 16})), Error);
}

TEST(CropEncoderTest, LogvarClamped) {
  Rng rng(10);
  ModelConfig c = miniature_model();
  CropEncoder q(c, rng);
  Tensor huge = random_tensor({2, 3, 4, 4}, rng, -1e6, 1e6);
  Posterior p = q(huge);
  for (double v : p.logvar.values()) {
    EXPECT_GE(v, -10.0);
    EXPECT_LE(v, 10.0);
  }
}

TEST(ReparameterizeTest, ClosedForms) {
  Tensor e = Tensor::from({1, 3}, {0.3, -1.0, 2.0});
  Posterior unit{Tensor::zeros({1, 3}), Tensor::zeros({1, 3})};
  EXPECT_EQ(reparameterize(unit, e).values(), e.values());
  Posterior p{Tensor::from({1, 1}, {1.0}), Tensor::from({1, 1}, {std::log(4.0)})};
  EXPECT_NEAR(reparameterize(p, Tensor::from({1, 1}, {0.5})).item(), 2.0, 1e-15);
  Posterior q{Tensor::from({1, 3}, {1, 2, 3}), Tensor::from({1, 3}, {0.1, -2, 3})};
  EXPECT_EQ(reparameterize(q, Tensor::zeros({1, 3})).values(), q.mu.values());
}

TEST(ReparameterizeTest, AffineInEps) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Posterior p{random_tensor({2, 4}, rng, -2, 2), random_tensor({2, 4}, rng, -3, 3)};
    Tensor e1 = random_tensor({2, 4}, rng), e2 = random_tensor({2, 4}, rng);
    const double a = rng.uniform(-2, 2);
    Tensor lhs = reparameterize(p, nn::add(nn::scale(e1, a), e2));
    Tensor r1 = reparameterize(p, e1), r2 = reparameterize(p, e2);
    for (int i = 0; i < 8; ++i)
      EXPECT_NEAR(lhs.at(i), a * (r1.at(i) - p.mu.at(i)) + r2.at(i), 1e-12);
  }
}

}  // namespace
}  // namespace attrgan
