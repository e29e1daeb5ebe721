#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedinf/core.hpp"
#include "fedinf/rng.hpp"

namespace fedinf {

enum class RuleKind {
  Mean,
  Cwtm,        // coordinate-wise trimmed mean
  Cwmed,       // coordinate-wise median
  Gm,          // geometric median
  DeepSet,     // learned aggregator (mean pooling)
  DeepSetTm,   // learned aggregator with trimmed-mean pooling at inference
  RandomizedAblation,
};

/// Aggregator selection, including the (non-recursive) inner rule and round
/// count when the outer rule is randomized ablation.
struct AggregatorSpec {
  RuleKind kind = RuleKind::Mean;
  RuleKind ra_inner = RuleKind::Mean;  // must not itself be ablation
  int ra_rounds = 100;
  /// Trim width handed to an ablation inner rule that needs one; defaults to
  /// the same f used for the ablation drops.
  std::optional<int> ra_inner_trim;
};

bool rule_is_static(RuleKind kind);
std::string rule_name(RuleKind kind);
std::string spec_name(const AggregatorSpec& spec);
AggregatorSpec parse_aggregator(const std::string& text);

/// Coordinate-wise mean of the rows (order-stable).
std::vector<double> mean_rule(const Mat& rows);

/// Trimmed mean of a value multiset: drop the f smallest and f largest,
/// average the rest.  Requires values.size() > 2f.
double trimmed_mean(std::vector<double> values, int f);

/// Coordinate-wise trimmed mean.  The result is a valid probit vector only
/// in the limit of agreeing clients; by design it is not re-projected.
std::vector<double> cwtm_rule(const Mat& rows, int f);

/// Coordinate-wise median (midpoint of the central order statistics for
/// even n).
std::vector<double> cwmed_rule(const Mat& rows);

struct GmResult {
  std::vector<double> point;
  int iterations = 0;
  bool converged = false;
};

/// Geometric median via Weiszfeld iteration, started at the mean.
/// Distances are floored at dist_floor to keep the weights finite.
GmResult geometric_median(const Mat& rows, double tol = 1e-9,
                          int max_iter = 1000, double dist_floor = 1e-12);

/// Robustness coefficient of the trimmed mean for n clients, f adversaries:
/// 6f/(n-2f) * (1 + f/(n-2f)).  Requires n > 2f.
double kappa_cwtm(int n, int f);

struct FkCheckOptions {
  double slack_abs = 1e-18;
  double slack_rel = 1e-12;
  int max_n = 12;  // subset enumeration guard
};

struct FkCheckReport {
  bool ok = true;
  double max_ratio = 0.0;  // lhs / rhs over subsets with rhs > 0
  double worst_lhs = 0.0;
  double worst_rhs = 0.0;
  std::vector<int> worst_subset;
  long long subsets_checked = 0;
};

/// Exhaustive check of the robustness inequality: for every honest subset S
/// of size n-f, the squared distance from rule(rows) to the subset mean must
/// be at most kappa times the mean squared spread of S around that mean.
FkCheckReport check_fk_robustness(
    const std::function<std::vector<double>(const Mat&)>& rule,
    const Mat& rows, int f, double kappa, FkCheckOptions opts = {});

struct Certificate {
  MarginValue margin;      // margin of the clean mean aggregate
  double sigma_x = 0.0;    // dispersion of the clean panel
  double kappa = 0.0;
  double bound = 0.0;      // threshold the margin must exceed
  bool certified = false;
  bool degenerate = false; // top-two tie or all-tied margin
};

/// Margin threshold below which an f-strong adversary could flip the
/// argmax of a (f,kappa)-robust aggregate.
double certificate_bound(const SystemParams& params, double sigma_x);

/// Evaluates the prediction-stability certificate on a clean panel.
Certificate certify(const ProbitPanel& panel, const SystemParams& params,
                    double tie_quantum = kDefaultTieQuantum);

/// argmax classification through a static rule (trim width f where the rule
/// takes one).  Ties resolve to the lowest class index.
int robust_argmax_classify(const Mat& rows, RuleKind kind, int f);

/// Evaluates a static rule; DeepSet variants are rejected here (they live in
/// the nn module and are wired in by the evaluation layer).
std::vector<double> apply_static_rule(const Mat& rows, RuleKind kind, int f);

/// Randomized ablation: per round, drop `drop` random rows and classify the
/// survivors with inner_classify; majority vote across rounds (lowest class
/// index wins ties).
int randomized_ablation_classify(
    const Mat& rows, int drop, int rounds,
    const std::function<int(const Mat&)>& inner_classify, RngStream& rng);

}  // namespace fedinf
