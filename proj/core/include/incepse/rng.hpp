#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace incepse {

/// Deterministic random source. Distributions are implemented here rather
/// than with <random> adapters, whose output is implementation-defined;
/// this keeps datasets and parameter draws bit-identical across toolchains.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : state_(splitmix(seed)) {}

  /// Raw 64 random bits (xoshiro-style splitmix64 stream).
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform draw computed in float precision, returned as double.
  /// Exactly representable in 32-bit storage.
  double uniform_f32(double lo, double hi) {
    float u = static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
    return static_cast<double>(static_cast<float>(lo) +
                               (static_cast<float>(hi) - static_cast<float>(lo)) * u);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derive an independent deterministic stream (for per-record or
  /// per-epoch substreams).
  Rng fork(std::uint64_t stream) {
    return Rng(next_u64() ^ (0xa0761d6478bd642fULL * (stream + 1)));
  }

private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x ^= 0x9e3779b97f4a7c15ULL;
    return x;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

} // namespace incepse
