#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fedinf {

/// Deterministic pseudo-random stream with explicit, platform-independent
/// distributions.  std::* distributions are avoided on purpose: their output
/// is implementation-defined, and every run of the toolkit must be bit-exact
/// reproducible from a single 64-bit seed across compilers and platforms.
///
/// Streams are derived from (seed, label, salt) so that independent purposes
/// (data generation, adversary choice, weight init, attack noise, ...) draw
/// from decorrelated streams and inserting a new consumer does not perturb
/// the draws seen by existing ones.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) { seed_state(seed); }

  /// Derive an independent stream from a base seed, a purpose label and an
  /// optional numeric salt (e.g. a panel index or an epoch counter).
  static RngStream derive(std::uint64_t seed, std::string_view label,
                          std::uint64_t salt = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the label
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    RngStream out(split_mix(seed ^ split_mix(h ^ split_mix(salt))));
    return out;
  }

  RngStream child(std::string_view label, std::uint64_t salt = 0) {
    return derive(next_u64(), label, salt);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;  // xoshiro256**
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double uniform01_open() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  int below_int(int n) { return int(below(std::uint64_t(n))); }

  /// Standard normal via Box-Muller (cosine branch only, no cached spare).
  double normal() {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze; boosted for alpha < 1.
  double gamma(double alpha) {
    if (!(alpha > 0.0))
      throw std::invalid_argument("RngStream::gamma: alpha must be > 0");
    if (alpha < 1.0) {
      const double u = uniform01_open();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Symmetric Dirichlet(alpha) over k categories.
  std::vector<double> dirichlet(double alpha, std::size_t k) {
    std::vector<double> g(k);
    double total = 0.0;
    for (auto& gi : g) {
      gi = gamma(alpha);
      total += gi;
    }
    if (total <= 0.0 || !std::isfinite(total)) {
      // Astronomically unlikely underflow; fall back to a uniform vector.
      for (auto& gi : g) gi = 1.0 / double(k);
      return g;
    }
    for (auto& gi : g) gi /= total;
    return g;
  }

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = std::size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices drawn from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n)
      throw std::invalid_argument("sample_without_replacement: bad k");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[std::size_t(i)] = i;
    std::vector<int> out;
    out.reserve(std::size_t(k));
    for (int i = 0; i < k; ++i) {
      const std::size_t j = std::size_t(below(pool.size()));
      out.push_back(pool[j]);
      pool[j] = pool.back();
      pool.pop_back();
    }
    return out;
  }

private:
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t split_mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  void seed_state(std::uint64_t seed) {
    // SplitMix64 fan-out; avoids the all-zero state xoshiro cannot leave.
    std::uint64_t z = seed;
    for (auto& si : s_) {
      z = split_mix(z);
      si = z;
    }
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  std::uint64_t s_[4];
};

}  // namespace fedinf
