// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace relmoss {

// SplitMix64 stream. One 64-bit word of state, so a generator can be copied
// into a sampler by value and replayed exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t state() const { return state_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1)
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Marsaglia polar method; the spare value is discarded so the stream
  // position depends only on the number of calls.
  double normal() {
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream (used to hand generators to sub-components).
  Rng split() { return Rng(next_u64()); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// Gamma(shape, 1) via Marsaglia-Tsang. For shape < 1 the sample is drawn at
// shape + 1 and scaled by U^(1/shape).
inline double gamma_sample(Rng& rng, double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma_sample: shape must be > 0");
  if (shape < 1.0) {
    const double g = gamma_sample(rng, shape + 1.0);
    return g * std::pow(rng.uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Beta(alpha, beta) as G1 / (G1 + G2). Always strictly inside (0, 1).
inline double beta_sample(Rng& rng, double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw std::invalid_argument("beta_sample: alpha and beta must be > 0");
  }
  for (;;) {
    const double a = gamma_sample(rng, alpha);
    const double b = gamma_sample(rng, beta);
    const double x = a / (a + b);
    if (x > 0.0 && x < 1.0) return x;
  }
}

}  // namespace relmoss
