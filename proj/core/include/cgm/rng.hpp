#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <string_view>

namespace cgm {

// Deterministic cross-platform RNG: mt19937_64 with hand-rolled float and
// Gaussian draws. The std:: distributions are implementation-defined, so we
// avoid them anywhere a byte-reproducible artifact is produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal();

  // Uniform direction on the unit sphere (normalized Gaussian triple).
  Eigen::Vector3d unit_vector();

  // Index in [0, n) drawn proportionally to nonnegative weights (CDF walk).
  int categorical(const Eigen::VectorXd& weights);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed derivation for independent per-stage streams: splitmix64 over
// the root seed combined with a hash of the stage tag and an index.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index = 0);

}  // namespace cgm
