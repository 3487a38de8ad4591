#pragma once

#include <cstdint>
#include <random>

#include "calming/linalg.hpp"

namespace calming {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` (and optional sub-stream) of a master seed. Streams are
// independent of scheduling, so parallel replications stay reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t sub = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL)) + sub);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  Rng(std::uint64_t master, std::uint64_t index, std::uint64_t sub = 0)
      : eng_(derive_seed(master, index, sub)) {}

  double normal() { return normal_(eng_); }
  double uniform() { return uniform_(eng_); }

  Vec normal_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Uniform direction on the unit sphere.
  Vec sphere(Eigen::Index n) {
    Vec v = normal_vec(n);
    double nv = v.norm();
    while (nv == 0.0) {
      v = normal_vec(n);
      nv = v.norm();
    }
    return v / nv;
  }

  // Uniform point in the unit ball.
  Vec ball(Eigen::Index n) {
    Vec v = sphere(n);
    return v * std::pow(uniform(), 1.0 / static_cast<double>(n));
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace calming
