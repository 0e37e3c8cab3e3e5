#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace attrgan {

// Seeded random source. Distributions are implemented here (not via <random>
// distributions) so streams are identical across standard libraries and carry
// no hidden cached state; the engine state round-trips through save()/load().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller (one draw per call).
  double normal();

  std::string save() const;
  void load(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace attrgan
