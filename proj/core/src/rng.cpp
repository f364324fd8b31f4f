#include "cgm/rng.hpp"

#include <cmath>

#include "cgm/errors.hpp"

namespace cgm {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] uniforms; u1 > 0 guaranteed by the 1-u construction.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

Eigen::Vector3d Rng::unit_vector() {
  while (true) {
    Eigen::Vector3d v(normal(), normal(), normal());
    double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

int Rng::categorical(const Eigen::VectorXd& weights) {
  double total = weights.sum();
  if (!(total > 0.0)) throw Error("categorical draw: weights sum to zero");
  double r = uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw Error("categorical draw: negative weight");
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i];
    if (r < acc) return i;
  }
  return last_positive;  // r landed on the rounding tail
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stage tag
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return splitmix64(splitmix64(root ^ h) ^ index);
}

}  // namespace cgm
