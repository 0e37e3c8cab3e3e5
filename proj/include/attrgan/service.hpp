#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "attrgan/layout.hpp"
#include "attrgan/metrics.hpp"
#include "attrgan/training.hpp"

namespace attrgan {

inline constexpr int kApiVersion = 1;

// Immutable model state shared by in-flight requests.
struct ServedModel {
  LoadedModel model;
  std::string checkpoint_sha256;
  std::shared_ptr<const FeatureExtractor> features;
  std::string feature_source;  // "classifier" or "pixels"
};

// Loads a generator checkpoint and, optionally, an attribute classifier whose
// trunk becomes the served feature extractor. Without one, PixelFeatures at
// the model's object size is used.
std::shared_ptr<const ServedModel> load_served_model(
    const std::filesystem::path& checkpoint,
    const std::optional<std::filesystem::path>& classifier = std::nullopt);

std::string sha256_hex(const std::filesystem::path& file);

// Request decoding, shared with the python binding.
struct GenerateRequest {
  Layout layout;
  std::vector<bool> attributes_given;      // per object
  std::vector<std::optional<std::uint64_t>> seeds;  // empty or one per object
  std::uint64_t seed = 0;                  // global seed for unset object seeds
  int sample_count = 2;                    // attributes drawn for unset objects
  bool debug = false;                      // echo raw latent vectors
};

GenerateRequest parse_generate_request(const std::string& body, const Vocabularies& vocab);

struct Generated {
  Layout layout;  // attributes resolved
  std::vector<std::uint64_t> seeds;
  Tensor latents;  // [m, latent_dim]
  Tensor image;    // [1, 3, H, W]
  std::vector<std::uint8_t> png;
};

// Object seeds default to mix_seed(seed, i) truncated to 53 bits so they
// survive a JSON double. Latent i is sample_latent_prior(1, d, Rng(seed_i));
// missing attributes are sample_attributes(prior, category, n,
// Rng(mix_seed(seed_i, 1))).
Generated run_generate(const ServedModel& served, const GenerateRequest& request);
Generated run_generate(const ServedModel& served, const Layout& resolved,
                       std::span<const std::uint64_t> seeds);

class Service {
 public:
  struct Response {
    int status = 200;
    std::string body;
  };

  Service();
  explicit Service(std::shared_ptr<const ServedModel> model);

  // Waits for in-flight requests, then swaps.
  void swap_model(std::shared_ptr<const ServedModel> model);
  bool loaded() const;

  // Routes GET /healthz, /model, /vocab and POST /generate, /generate/pair.
  Response handle(const std::string& method, const std::string& path, const std::string& body) const;

  // Blocks until stop(). `port` 0 picks a free port, reported by bound_port().
  void listen(const std::string& host, int port, int threads = 4);
  // Binds and starts serving on a background thread; returns the port.
  int start(const std::string& host, int port, int threads = 4);
  void stop();
  int bound_port() const { return port_; }

  ~Service();

 private:
  struct Http;
  void ensure_http(int threads);

  mutable std::shared_mutex mutex_;
  std::shared_ptr<const ServedModel> model_;
  std::unique_ptr<Http> http_;
  int port_ = 0;
};

}  // namespace attrgan
