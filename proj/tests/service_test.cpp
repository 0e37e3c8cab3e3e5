#include "attrgan/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "attrgan/data.hpp"
#include "attrgan/embedding.hpp"
#include "attrgan/image.hpp"

namespace attrgan {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// One tiny checkpoint shared by every test.
class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("attrgan_service_" + std::to_string(::getpid())));
    fs::create_directories(*dir_);
    SyntheticSpec spec;
    spec.canvas = 8;
    spec.max_objects = 3;
    Rng rng(21);
    std::vector<Example> data;
    std::vector<std::pair<int, std::vector<int>>> objects;
    for (int i = 0; i < 10; ++i) {
      Example e;
      e.id = i;
      e.layout = sample_synthetic_layout(spec, rng);
      e.image = from_rgb8(render_synthetic(e.layout));
      for (const auto& o : e.layout.objects) objects.emplace_back(o.category, o.attributes);
      data.push_back(std::move(e));
    }
    TrainingConfig c;
    c.preset = "miniature";
    c.model = miniature_model();
    c.model.num_attributes = 7;
    c.batch_size = 2;
    c.iterations = 2;
    c.seed = 4;
    Trainer t(c, synthetic_vocabularies(), estimate_attribute_prior(objects));
    for (int i = 0; i < 2; ++i) t.step(data, nullptr);
    t.save(*dir_ / "model.ckpt");
    model_ = new std::shared_ptr<const ServedModel>(load_served_model(*dir_ / "model.ckpt"));
  }
  static void TearDownTestSuite() {
    delete model_;
    fs::remove_all(*dir_);
    delete dir_;
  }

  static json layout_json() {
    return json::parse(R"({"canvas": {"width": 8, "height": 8}, "objects": [
      {"category": "rectangle", "attributes": ["red", "large"], "bbox": [0.0, 0.0, 0.5, 0.5]},
      {"category": "ellipse", "attributes": ["blue"], "bbox": [0.5, 0.25, 0.875, 0.75]}]})");
  }
  static json request(std::uint64_t seed = 9) { return {{"v", 1}, {"layout", layout_json()}, {"seed", seed}}; }

  static json call(const Service& s, const std::string& method, const std::string& path, const json& body,
                   int expect_status) {
    auto r = s.handle(method, path, body.is_null() ? "" : body.dump());
    EXPECT_EQ(r.status, expect_status) << r.body;
    return json::parse(r.body);
  }

  static inline fs::path* dir_ = nullptr;
  static inline std::shared_ptr<const ServedModel>* model_ = nullptr;
};

TEST_F(ServiceTest, HealthWithoutModelAnd503) {
  Service s;
  EXPECT_FALSE(s.loaded());
  auto h = call(s, "GET", "/healthz", nullptr, 200);
  EXPECT_EQ(h["model_loaded"], false);
  EXPECT_EQ(h["v"], 1);
  auto g = call(s, "POST", "/generate", request(), 503);
  EXPECT_EQ(g["error"]["code"], "ModelNotLoaded");
  EXPECT_EQ(call(s, "GET", "/vocab", nullptr, 503)["error"]["code"], "ModelNotLoaded");
  EXPECT_EQ(call(s, "GET", "/model", nullptr, 503)["error"]["code"], "ModelNotLoaded");
}

TEST_F(ServiceTest, SameRequestTwiceIsByteIdentical) {
  Service s(*model_);
  auto a = call(s, "POST", "/generate", request(), 200);
  auto b = call(s, "POST", "/generate", request(), 200);
  EXPECT_EQ(a["image"], b["image"]);
  EXPECT_EQ(a["seeds"], b["seeds"]);
  const Rgb8 img = decode_png(base64_decode(a["image"].get<std::string>()));
  EXPECT_EQ(img.width, 8);
  EXPECT_EQ(img.height, 8);
  EXPECT_EQ(a["width"], 8);
}

TEST_F(ServiceTest, DifferentSeedsChangeImage) {
  Service s(*model_);
  auto a = call(s, "POST", "/generate", request(1), 200);
  auto b = call(s, "POST", "/generate", request(2), 200);
  EXPECT_NE(a["seeds"], b["seeds"]);
  EXPECT_NE(a["image"], b["image"]);
}

TEST_F(ServiceTest, LatentsComeFromSeeds) {
  Service s(*model_);
  json req = request();
  req["seeds"] = {123, nullptr};
  req["debug"] = true;
  auto r = call(s, "POST", "/generate", req, 200);
  ASSERT_EQ(r["seeds"].size(), 2u);
  EXPECT_EQ(r["seeds"][0], 123);
  const int d = (*model_)->model.config.model.latent_dim;
  for (int i = 0; i < 2; ++i) {
    Rng rng(r["seeds"][i].get<std::uint64_t>());
    EXPECT_EQ(r["latents"][i].get<std::vector<double>>(), sample_latent_prior(1, d, rng).values());
  }
  EXPECT_LT(r["seeds"][1].get<std::uint64_t>(), std::uint64_t{1} << 53);
  EXPECT_FALSE(call(s, "POST", "/generate", request(), 200).contains("latents"));
}

TEST_F(ServiceTest, OmittedAttributesAreSampledAndReported) {
  Service s(*model_);
  const AttributePrior& prior = (*model_)->model.prior;
  const Vocabularies& vocab = (*model_)->model.vocab;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    json req = request(seed);
    req["layout"]["objects"][1].erase("attributes");
    auto r = call(s, "POST", "/generate", req, 200);
    EXPECT_EQ(r["attributes"][0], json({"red", "large"}));
    const auto sampled = r["attributes"][1].get<std::vector<std::string>>();
    EXPECT_EQ(sampled.size(), 2u);
    for (const auto& name : sampled) {
      const int a = vocab.attributes.find(name);
      ASSERT_GE(a, 0);
      EXPECT_GT(prior.count(vocab.categories.find("ellipse"), a), 0) << name;
    }
    // Echoing the resolved seeds and attributes reproduces the image.
    json echo = {{"v", 1}, {"layout", layout_json()}, {"seeds", r["seeds"]}, {"attributes", r["attributes"]}};
    EXPECT_EQ(call(s, "POST", "/generate", echo, 200)["image"], r["image"]);
  }
}

TEST_F(ServiceTest, SampleCountControlsDraws) {
  Service s(*model_);
  json req = request();
  req["layout"]["objects"][0].erase("attributes");
  req["sample_count"] = 1;
  EXPECT_EQ(call(s, "POST", "/generate", req, 200)["attributes"][0].size(), 1u);
  req["sample_count"] = 6;
  EXPECT_EQ(call(s, "POST", "/generate", req, 400)["error"]["code"], "TooManyAttributes");
}

TEST_F(ServiceTest, AttributeOverridesReplaceLayoutAttributes) {
  Service s(*model_);
  json req = request();
  req["attributes"] = {nullptr, {"yellow", "small"}};
  auto r = call(s, "POST", "/generate", req, 200);
  EXPECT_EQ(r["attributes"][0], json({"red", "large"}));
  EXPECT_EQ(r["attributes"][1], json({"yellow", "small"}));
  auto plain = call(s, "POST", "/generate", request(), 200);
  EXPECT_EQ(plain["seeds"], r["seeds"]);
  EXPECT_NE(plain["image"], r["image"]);
}

TEST_F(ServiceTest, ValidationErrorsCarryCodes) {
  Service s(*model_);
  json bad = request();
  bad["layout"]["objects"][0]["bbox"] = {0.5, 0.0, 0.25, 0.5};
  auto r = call(s, "POST", "/generate", bad, 400);
  EXPECT_EQ(r["error"]["code"], "InvalidBBox");
  EXPECT_FALSE(r.contains("image"));

  json unknown = request();
  unknown["layout"]["objects"][0]["category"] = "hexagon";
  EXPECT_EQ(call(s, "POST", "/generate", unknown, 400)["error"]["code"], "UnknownIndex");

  json override_bad = request();
  override_bad["attributes"] = {{"mauve"}, nullptr};
  EXPECT_EQ(call(s, "POST", "/generate", override_bad, 400)["error"]["code"], "UnknownIndex");

  json seeds = request();
  seeds["seeds"] = {1, 2, 3};
  EXPECT_EQ(call(s, "POST", "/generate", seeds, 400)["error"]["code"], "LengthMismatch");

  json version = request();
  version["v"] = 2;
  EXPECT_EQ(call(s, "POST", "/generate", version, 400)["error"]["code"], "SchemaError");

  auto parse = s.handle("POST", "/generate", "{not json");
  EXPECT_EQ(parse.status, 400);
  EXPECT_EQ(json::parse(parse.body)["error"]["code"], "ParseError");

  EXPECT_EQ(s.handle("GET", "/nowhere", "").status, 404);
  EXPECT_EQ(s.handle("GET", "/generate", "").status, 405);
}

TEST_F(ServiceTest, ZeroShiftPairIsIdentical) {
  Service s(*model_);
  json req = request();
  req["shifts"] = {{"dx", {0.0, 0.0}}};
  auto r = call(s, "POST", "/generate/pair", req, 200);
  EXPECT_EQ(r["original"]["image"], r["shifted"]["image"]);
  EXPECT_EQ(r["original"]["seeds"], r["shifted"]["seeds"]);
  EXPECT_DOUBLE_EQ(r["consistency"]["bg"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(r["consistency"]["fg"].get<double>(), 1.0);
}

TEST_F(ServiceTest, ShiftedPairSharesSeedsAndMovesBoxes) {
  Service s(*model_);
  json req = request();
  req["layout"]["objects"][1].erase("attributes");
  req["shifts"] = {{"dx", {0.25, -0.125}}, {"policy", "clamp"}};
  auto r = call(s, "POST", "/generate/pair", req, 200);
  EXPECT_EQ(r["original"]["seeds"], r["shifted"]["seeds"]);
  EXPECT_EQ(r["original"]["attributes"], r["shifted"]["attributes"]);
  EXPECT_EQ(r["shifted_layout"]["objects"][0]["bbox"], json({0.25, 0.0, 0.75, 0.5}));
  EXPECT_EQ(r["shifted_layout"]["objects"][1]["bbox"], json({0.375, 0.25, 0.75, 0.75}));
  for (const char* k : {"bg", "fg"}) {
    const double v = r["consistency"][k].get<double>();
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  // The first image equals a plain /generate with the same request.
  EXPECT_EQ(call(s, "POST", "/generate", req, 200)["image"], r["original"]["image"]);
}

TEST_F(ServiceTest, RejectPolicyReportsShiftOutOfCanvas) {
  Service s(*model_);
  json req = request();
  req["shifts"] = {{"dx", {0.75, 0.0}}, {"policy", "reject"}};
  EXPECT_EQ(call(s, "POST", "/generate/pair", req, 400)["error"]["code"], "ShiftOutOfCanvas");
  req["shifts"] = {{"dx", {0.0}}};
  EXPECT_EQ(call(s, "POST", "/generate/pair", req, 400)["error"]["code"], "LengthMismatch");
}

TEST_F(ServiceTest, VocabIsExactAndStable) {
  Service s(*model_);
  auto a = s.handle("GET", "/vocab", "");
  auto b = s.handle("GET", "/vocab", "");
  EXPECT_EQ(a.body, b.body);
  auto v = json::parse(a.body);
  EXPECT_EQ(v["categories"].get<std::vector<std::string>>(), synthetic_vocabularies().categories.names());
  EXPECT_EQ(v["attributes"].get<std::vector<std::string>>(), synthetic_vocabularies().attributes.names());
  EXPECT_EQ(v["categories"].size(), 3u);
  EXPECT_EQ(v["attributes"].size(), 7u);
  const AttributePrior& prior = (*model_)->model.prior;
  for (const auto& [cat, rows] : v["prior"].items()) {
    std::int64_t last = INT64_MAX;
    for (const auto& row : rows) {
      const std::int64_t n = row["count"];
      EXPECT_LE(n, last);
      last = n;
      EXPECT_EQ(n, prior.count(synthetic_vocabularies().categories.find(cat),
                               synthetic_vocabularies().attributes.find(row["attribute"].get<std::string>())));
    }
  }
}

TEST_F(ServiceTest, ModelEndpointReportsChecksum) {
  Service s(*model_);
  auto m = call(s, "GET", "/model", nullptr, 200);
  EXPECT_EQ(m["checkpoint_sha256"], sha256_hex(*dir_ / "model.ckpt"));
  EXPECT_EQ(m["config_hash"], (*model_)->model.config_hash);
  EXPECT_EQ(m["preset"], "miniature");
  EXPECT_EQ(m["features"], "pixels");
  EXPECT_EQ(m["config"]["model"]["canvas"], 8);
}

TEST(Sha256, KnownVector) {
  const fs::path p = fs::temp_directory_path() / "attrgan_sha_abc";
  std::ofstream(p, std::ios::binary) << "abc";
  EXPECT_EQ(sha256_hex(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}

TEST_F(ServiceTest, ConcurrentRequestsMatchSerial) {
  Service s(*model_);
  std::vector<std::string> expected;
  for (int i = 0; i < 4; ++i) expected.push_back(s.handle("POST", "/generate", request(i).dump()).body);
  std::vector<std::string> got(16);
  std::vector<std::thread> threads;
  for (int t = 0; t < 16; ++t)
    threads.emplace_back([&, t] { got[t] = s.handle("POST", "/generate", request(t % 4).dump()).body; });
  // A hot swap to the same checkpoint mid-flight must not change any answer.
  s.swap_model(load_served_model(*dir_ / "model.ckpt"));
  for (auto& th : threads) th.join();
  for (int t = 0; t < 16; ++t) EXPECT_EQ(got[t], expected[t % 4]) << t;
}

TEST_F(ServiceTest, HttpRoundTrip) {
  Service s(*model_);
  const int port = s.start("127.0.0.1", 0, 2);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["model_loaded"], true);
  auto gen = client.Post("/generate", request().dump(), "application/json");
  ASSERT_TRUE(gen);
  EXPECT_EQ(gen->status, 200);
  EXPECT_EQ(gen->body, s.handle("POST", "/generate", request().dump()).body);
  json bad = request();
  bad["layout"]["objects"] = json::array();
  auto err = client.Post("/generate", bad.dump(), "application/json");
  ASSERT_TRUE(err);
  EXPECT_EQ(err->status, 400);
  EXPECT_EQ(json::parse(err->body)["error"]["code"], "EmptyLayout");
  s.stop();
}

}  // namespace
}  // namespace attrgan
