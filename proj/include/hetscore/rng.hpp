#pragma once

// Self-contained seeded random number generation. The standard library
// distributions are implementation-defined, so every sampler used by the
// simulation code lives here to keep results bit-identical for a given seed.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace hetscore {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic seed derivation: children of a master seed are obtained by
// mixing in integer tags (and optionally string tags). Independent of
// scheduling or call order elsewhere.
inline std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + (tag << 1));
  std::uint64_t a = splitmix64(s);
  s ^= tag * 0xda942042e4dd58b5ULL;
  return a ^ splitmix64(s);
}

inline std::uint64_t seed_mix(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return seed_mix(seed, h);
}

// xoshiro256++ with splitmix64 state expansion.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
    have_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0,1); never returns an exact endpoint.
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Marsaglia polar method with a cached spare.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Marsaglia-Tsang; shape < 1 handled by the boosting identity.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  // Knuth's multiplicative method, chunked so large means stay exact.
  long poisson(double mu) {
    long total = 0;
    while (mu > 50.0) {
      // Poisson(mu) = Poisson(50) + Poisson(mu - 50); exact decomposition.
      total += poisson_small(50.0);
      mu -= 50.0;
    }
    return total + poisson_small(mu);
  }

  long negative_binomial(double mean, double dispersion) {
    const double lambda = gamma(dispersion, mean / dispersion);
    return poisson(lambda);
  }

  // Beta(1, b) via the closed-form inverse CDF.
  double beta_one(double b) { return 1.0 - std::pow(1.0 - uniform01(), 1.0 / b); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  long poisson_small(double mu) {
    const double limit = std::exp(-mu);
    long k = 0;
    double prod = uniform01();
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }

  std::uint64_t state_[4];
  bool have_spare_;
  double spare_;
};

// Draw a 0/1 allocation vector with exactly n/2 ones, by shuffling.
inline std::vector<double> permuted_block_allocation(std::size_t n, Rng& rng) {
  std::vector<double> z(n, 0.0);
  for (std::size_t i = n / 2; i < n; ++i) z[i] = 1.0;
  rng.shuffle(z);
  return z;
}

}  // namespace hetscore
