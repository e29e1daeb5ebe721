#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "fedinf/rng.hpp"

using namespace fedinf;

TEST_CASE("identical seeds give identical streams") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  RngStream a(42), b(43);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
}

TEST_CASE("derived streams are independent of draw order") {
  // Drawing from one derived stream must not perturb a sibling.
  RngStream solo = RngStream::derive(7, "alpha");
  std::vector<std::uint64_t> want(16);
  for (auto& v : want) v = solo.next_u64();

  RngStream noisy = RngStream::derive(7, "beta");
  for (int i = 0; i < 100; ++i) noisy.next_u64();
  RngStream again = RngStream::derive(7, "alpha");
  for (const auto& v : want) CHECK(again.next_u64() == v);
}

TEST_CASE("derive distinguishes label and salt") {
  CHECK(RngStream::derive(7, "x", 0).next_u64() !=
        RngStream::derive(7, "x", 1).next_u64());
  CHECK(RngStream::derive(7, "x").next_u64() !=
        RngStream::derive(7, "y").next_u64());
  CHECK(RngStream::derive(7, "x").next_u64() !=
        RngStream::derive(8, "x").next_u64());
}

TEST_CASE("uniform01 stays in [0,1) and looks uniform") {
  RngStream rng(5);
  const int trials = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sumsq += u * u;
  }
  const double mean = sum / trials;
  const double var = sumsq / trials - mean * mean;
  CHECK(std::fabs(mean - 0.5) < 0.005);       // se ~ 0.00065
  CHECK(std::fabs(var - 1.0 / 12.0) < 0.005);
}

TEST_CASE("below is exact on the boundary and unbiased-ish") {
  RngStream rng(9);
  const std::uint64_t n = 6;
  std::vector<int> counts(n, 0);
  const int trials = 120000;
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t v = rng.below(n);
    REQUIRE(v < n);
    counts[std::size_t(v)]++;
  }
  for (const int c : counts) {
    // Each bucket expects 20000; 5 sigma ~= 645.
    CHECK(std::abs(c - trials / int(n)) < 800);
  }
}

TEST_CASE("normal moments") {
  RngStream rng(13);
  const int trials = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / trials;
  const double var = sumsq / trials - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("gamma moments match alpha") {
  RngStream rng(17);
  for (const double alpha : {0.5, 1.0, 4.0}) {
    const int trials = 150000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < trials; ++i) {
      const double g = rng.gamma(alpha);
      REQUIRE(g >= 0.0);
      sum += g;
      sumsq += g * g;
    }
    const double mean = sum / trials;
    const double var = sumsq / trials - mean * mean;
    CHECK(std::fabs(mean - alpha) < 0.05 * std::max(1.0, alpha));
    CHECK(std::fabs(var - alpha) < 0.08 * std::max(1.0, alpha));
  }
}

TEST_CASE("dirichlet sums to one with symmetric marginals") {
  RngStream rng(19);
  const int k = 7;
  std::vector<double> mean_acc(k, 0.0);
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    const auto w = rng.dirichlet(0.7, k);
    REQUIRE(int(w.size()) == k);
    double s = 0.0;
    for (const double x : w) {
      REQUIRE(x >= 0.0);
      s += x;
    }
    CHECK(std::fabs(s - 1.0) < 1e-12);
    for (int c = 0; c < k; ++c) mean_acc[std::size_t(c)] += w[std::size_t(c)];
  }
  for (int c = 0; c < k; ++c)
    CHECK(std::fabs(mean_acc[std::size_t(c)] / trials - 1.0 / k) < 0.01);
}

TEST_CASE("shuffle permutes without loss") {
  RngStream rng(23);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(w);
  CHECK(w != v);  // 50! makes a fixed-point astronomically unlikely
  std::set<int> seen(w.begin(), w.end());
  CHECK(seen.size() == v.size());
}

TEST_CASE("sample_without_replacement yields distinct in-range picks") {
  RngStream rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const auto picks = rng.sample_without_replacement(17, 4);
    REQUIRE(picks.size() == 4);
    std::set<int> seen;
    for (const int p : picks) {
      REQUIRE(p >= 0);
      REQUIRE(p < 17);
      seen.insert(p);
    }
    CHECK(seen.size() == 4);
  }
  // Full-draw case covers every index.
  const auto all = rng.sample_without_replacement(5, 5);
  CHECK(std::set<int>(all.begin(), all.end()).size() == 5);
}
