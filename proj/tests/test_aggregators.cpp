#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedinf/aggregators.hpp"
#include "fedinf/core.hpp"
#include "fedinf/rng.hpp"

using namespace fedinf;

namespace {

Mat random_rows(RngStream& rng, std::size_t n, std::size_t k) {
  Mat rows(n, k);
  std::vector<double> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : z) v = 2.0 * rng.normal();
    const ProbitVector h = project_softmax(z);
    for (std::size_t c = 0; c < k; ++c) rows.at(i, c) = h.p[c];
  }
  return rows;
}

Mat permuted(const Mat& rows, const std::vector<int>& order) {
  Mat out(rows.rows, rows.cols);
  for (std::size_t i = 0; i < rows.rows; ++i)
    for (std::size_t c = 0; c < rows.cols; ++c)
      out.at(i, c) = rows.at(std::size_t(order[i]), c);
  return out;
}

}  // namespace

TEST_CASE("trimmed mean drops f from each side") {
  CHECK(trimmed_mean({0.0, 1.0, 2.0, 3.0, 100.0}, 1) ==
        doctest::Approx(2.0));                      // (1+2+3)/3
  CHECK(trimmed_mean({5.0, 1.0, 9.0}, 1) == 5.0);   // median survives
  CHECK(trimmed_mean({4.0, 2.0}, 0) == 3.0);        // plain mean at f=0
  CHECK_THROWS_AS(trimmed_mean({1.0, 2.0}, 1), std::invalid_argument);
}

TEST_CASE("cwtm matches a sort-and-slice oracle") {
  RngStream rng(51);
  const int f = 2;
  const Mat rows = random_rows(rng, 9, 5);
  const std::vector<double> got = cwtm_rule(rows, f);
  for (std::size_t c = 0; c < 5; ++c) {
    std::vector<double> col(9);
    for (std::size_t i = 0; i < 9; ++i) col[i] = rows.at(i, c);
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (std::size_t i = std::size_t(f); i < 9 - std::size_t(f); ++i)
      s += col[i];
    CHECK(got[c] == doctest::Approx(s / (9 - 2 * f)).epsilon(1e-13));
  }
}

TEST_CASE("cwtm at f=0 is the mean") {
  RngStream rng(53);
  const Mat rows = random_rows(rng, 6, 4);
  const std::vector<double> tm = cwtm_rule(rows, 0);
  const std::vector<double> mean = mean_rule(rows);
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(tm[c] == doctest::Approx(mean[c]).epsilon(1e-13));
}

TEST_CASE("cwmed odd and even behavior") {
  Mat odd(3, 1);
  odd.at(0, 0) = 5.0;
  odd.at(1, 0) = 1.0;
  odd.at(2, 0) = 9.0;
  CHECK(cwmed_rule(odd)[0] == 5.0);

  Mat even(4, 1);
  even.at(0, 0) = 1.0;
  even.at(1, 0) = 2.0;
  even.at(2, 0) = 10.0;
  even.at(3, 0) = 20.0;
  CHECK(cwmed_rule(even)[0] == doctest::Approx(6.0));  // (2+10)/2
}

TEST_CASE("static rules are bit-exact under row permutation") {
  RngStream rng(57);
  const Mat rows = random_rows(rng, 11, 6);
  const auto mean0 = mean_rule(rows);
  const auto tm0 = cwtm_rule(rows, 3);
  const auto med0 = cwmed_rule(rows);
  const auto gm0 = geometric_median(rows).point;

  std::vector<int> order(11);
  for (int i = 0; i < 11; ++i) order[std::size_t(i)] = i;
  for (int trial = 0; trial < 25; ++trial) {
    rng.shuffle(order);
    const Mat shuffled = permuted(rows, order);
    const auto mean1 = mean_rule(shuffled);
    const auto tm1 = cwtm_rule(shuffled, 3);
    const auto med1 = cwmed_rule(shuffled);
    const auto gm1 = geometric_median(shuffled).point;
    for (std::size_t c = 0; c < 6; ++c) {
      CHECK(mean1[c] == mean0[c]);
      CHECK(tm1[c] == tm0[c]);
      CHECK(med1[c] == med0[c]);
      CHECK(gm1[c] == gm0[c]);
    }
  }
}

TEST_CASE("geometric median minimizes the distance sum") {
  RngStream rng(59);
  const Mat rows = random_rows(rng, 7, 4);
  const GmResult res = geometric_median(rows);
  REQUIRE(res.converged);

  const auto cost = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.rows; ++i) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < rows.cols; ++c) {
        const double d = rows.at(i, c) - p[c];
        d2 += d * d;
      }
      s += std::sqrt(d2);
    }
    return s;
  };

  const double at_gm = cost(res.point);
  CHECK(at_gm <= cost(mean_rule(rows)) + 1e-12);
  // Nudging in any coordinate direction must not help.
  for (std::size_t c = 0; c < rows.cols; ++c) {
    for (const double eps : {1e-4, -1e-4}) {
      auto moved = res.point;
      moved[c] += eps;
      CHECK(at_gm <= cost(moved) + 1e-9);
    }
  }
}

TEST_CASE("geometric median resists a far outlier better than the mean") {
  Mat rows(5, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    rows.at(i, 0) = 0.9;
    rows.at(i, 1) = 0.1;
  }
  rows.at(4, 0) = 0.0;
  rows.at(4, 1) = 1.0;
  const auto gm = geometric_median(rows).point;
  const auto mean = mean_rule(rows);
  // Both shift toward the outlier; the median must shift strictly less.
  CHECK(std::fabs(gm[0] - 0.9) < std::fabs(mean[0] - 0.9));
  CHECK(gm[0] > 0.85);
}

TEST_CASE("kappa formula frozen points") {
  CHECK(kappa_cwtm(17, 4) == doctest::Approx(312.0 / 81.0).epsilon(1e-15));
  CHECK(kappa_cwtm(3, 1) == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(kappa_cwtm(9, 0) == 0.0);
  CHECK(kappa_cwtm(5, 2) == doctest::Approx(36.0).epsilon(1e-15));
  CHECK_THROWS_AS(kappa_cwtm(4, 2), std::invalid_argument);
}

TEST_CASE("cwtm satisfies the exhaustive robustness inequality") {
  RngStream rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + 2 * (trial % 3);  // 5, 7, 9
    const int f = 1 + trial % 2;
    const Mat rows = random_rows(rng, std::size_t(n), 4);
    const auto rule = [f](const Mat& m) { return cwtm_rule(m, f); };
    const FkCheckReport rep =
        check_fk_robustness(rule, rows, f, kappa_cwtm(n, f));
    CAPTURE(n);
    CAPTURE(f);
    CHECK(rep.ok);
    // max_ratio is lhs/rhs before the kappa factor, so kappa bounds it.
    CHECK(rep.max_ratio <= kappa_cwtm(n, f) * (1.0 + 1e-9));
  }
}

TEST_CASE("robustness check flags a broken rule") {
  // A rule pinned to the first row is trivially non-robust.
  RngStream rng(63);
  Mat rows(5, 3);
  // Spread-out rows so subset variances cannot hide the violation.
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> z = {double(i), 0.0, -double(i)};
    const ProbitVector h = project_softmax(z);
    for (std::size_t c = 0; c < 3; ++c) rows.at(i, c) = h.p[c];
  }
  const auto pin_first = [](const Mat& m) {
    return std::vector<double>(m.row(0), m.row(0) + m.cols);
  };
  const FkCheckReport rep = check_fk_robustness(pin_first, rows, 2, 0.1);
  CHECK_FALSE(rep.ok);
  CHECK(rep.worst_lhs > 0.1 * rep.worst_rhs);
  CHECK(!rep.worst_subset.empty());
}

TEST_CASE("robustness check refuses unenumerable panels") {
  RngStream rng(67);
  const Mat rows = random_rows(rng, 14, 3);
  const auto rule = [](const Mat& m) { return cwtm_rule(m, 1); };
  CHECK_THROWS_AS(check_fk_robustness(rule, rows, 1, 1.0),
                  std::invalid_argument);
}

TEST_CASE("certificate bound formula") {
  const SystemParams params{17, 4, kappa_cwtm(17, 4)};
  const double sigma = 0.05;
  const double want =
      2.0 *
      (std::sqrt(params.kappa * 17.0 / 13.0) + std::sqrt(4.0 / 13.0)) *
      sigma;
  CHECK(certificate_bound(params, sigma) ==
        doctest::Approx(want).epsilon(1e-14));
  // f = 0 with a zero-kappa rule certifies any positive margin.
  CHECK(certificate_bound({9, 0, 0.0}, 0.3) == 0.0);
}

TEST_CASE("certify: identical confident clients are certified") {
  ProbitPanel panel;
  panel.probits = Mat(17, 4);
  for (std::size_t i = 0; i < 17; ++i) {
    panel.probits.at(i, 0) = 0.85;
    panel.probits.at(i, 1) = 0.05;
    panel.probits.at(i, 2) = 0.05;
    panel.probits.at(i, 3) = 0.05;
  }
  const SystemParams params{17, 4, kappa_cwtm(17, 4)};
  const Certificate cert = certify(panel, params);
  // Identical rows: dispersion is zero up to rounding in the variance sum.
  CHECK(cert.sigma_x < 1e-7);
  CHECK(cert.bound < 1e-6);
  CHECK_FALSE(cert.degenerate);
  CHECK(cert.certified);
  CHECK(cert.margin.value == doctest::Approx(0.8));
}

TEST_CASE("certify: flat panel is flagged degenerate") {
  ProbitPanel panel;
  panel.probits = Mat(17, 4);
  panel.probits.fill(0.25);
  const SystemParams params{17, 4, kappa_cwtm(17, 4)};
  const Certificate cert = certify(panel, params);
  // An all-tied aggregate has no usable argmax: the degenerate flag is what
  // downstream certification reports must filter on.
  CHECK(cert.degenerate);
  CHECK(cert.margin.is_infinite);
}

TEST_CASE("certify is monotone in the margin") {
  // Same dispersion, growing top-class weight: certification can only
  // switch on once and stay on.
  const SystemParams params{5, 1, kappa_cwtm(5, 1)};
  bool was_certified = false;
  for (double top = 0.30; top <= 0.94; top += 0.04) {
    ProbitPanel panel;
    panel.probits = Mat(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      const double jitter = (double(i) - 2.0) * 0.01;
      panel.probits.at(i, 0) = top + jitter;
      panel.probits.at(i, 1) = (1.0 - top) / 2.0 - jitter;
      panel.probits.at(i, 2) = (1.0 - top) / 2.0;
    }
    const Certificate cert = certify(panel, params);
    if (was_certified) CHECK(cert.certified);
    was_certified = was_certified || cert.certified;
  }
  CHECK(was_certified);  // the sharpest panel must certify
}

TEST_CASE("certify rejects a mismatched panel size") {
  RngStream rng(69);
  ProbitPanel panel;
  panel.probits = random_rows(rng, 7, 3);
  CHECK_THROWS_AS(certify(panel, {17, 4, 1.0}), std::invalid_argument);
}

TEST_CASE("rule names round-trip through the parser") {
  for (const RuleKind kind : {RuleKind::Mean, RuleKind::Cwtm, RuleKind::Cwmed,
                              RuleKind::Gm, RuleKind::DeepSet,
                              RuleKind::DeepSetTm}) {
    const AggregatorSpec spec = parse_aggregator(rule_name(kind));
    CHECK(spec.kind == kind);
  }
  const AggregatorSpec ra = parse_aggregator("ra:cwtm");
  CHECK(ra.kind == RuleKind::RandomizedAblation);
  CHECK(ra.ra_inner == RuleKind::Cwtm);
  CHECK(spec_name(ra) == "ra:cwtm");
  CHECK_THROWS_AS(parse_aggregator("ra"), std::invalid_argument);
  CHECK_THROWS_AS(parse_aggregator("ra:ra"), std::invalid_argument);
  CHECK_THROWS_AS(parse_aggregator("bogus"), std::invalid_argument);
}

TEST_CASE("rule_is_static partitions the kinds") {
  CHECK(rule_is_static(RuleKind::Mean));
  CHECK(rule_is_static(RuleKind::Cwtm));
  CHECK(rule_is_static(RuleKind::Cwmed));
  CHECK(rule_is_static(RuleKind::Gm));
  CHECK_FALSE(rule_is_static(RuleKind::DeepSet));
  CHECK_FALSE(rule_is_static(RuleKind::DeepSetTm));
  CHECK_FALSE(rule_is_static(RuleKind::RandomizedAblation));

  RngStream rng(71);
  const Mat rows = random_rows(rng, 5, 3);
  CHECK_THROWS_AS(apply_static_rule(rows, RuleKind::DeepSet, 1),
                  std::invalid_argument);
}

TEST_CASE("randomized ablation: degenerate settings match the inner rule") {
  RngStream rng(73);
  const Mat rows = random_rows(rng, 9, 4);
  const auto inner = [](const Mat& m) {
    return argmax_index(std::span<const double>(mean_rule(m)));
  };
  const int direct = inner(rows);
  RngStream ra_rng(101);
  CHECK(randomized_ablation_classify(rows, 0, 1, inner, ra_rng) == direct);
  // Identical rows: any drop pattern gives the same answer.
  Mat flat(9, 4);
  for (std::size_t i = 0; i < 9; ++i) {
    flat.at(i, 0) = 0.7;
    flat.at(i, 1) = 0.1;
    flat.at(i, 2) = 0.1;
    flat.at(i, 3) = 0.1;
  }
  RngStream ra_rng2(102);
  CHECK(randomized_ablation_classify(flat, 3, 25, inner, ra_rng2) == 0);
}

TEST_CASE("randomized ablation is deterministic per stream seed") {
  RngStream rng(79);
  const Mat rows = random_rows(rng, 11, 5);
  const auto inner = [](const Mat& m) {
    return argmax_index(std::span<const double>(cwtm_rule(m, 1)));
  };
  RngStream a(555), b(555), c(556);
  const int va = randomized_ablation_classify(rows, 2, 31, inner, a);
  const int vb = randomized_ablation_classify(rows, 2, 31, inner, b);
  CHECK(va == vb);
  // A different stream may or may not agree; it must still be a valid class.
  const int vc = randomized_ablation_classify(rows, 2, 31, inner, c);
  CHECK(vc >= 0);
  CHECK(vc < 5);
}
