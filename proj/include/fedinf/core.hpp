#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fedinf {

/// Tolerance on |sum - 1| for probit vectors produced or consumed by compute
/// paths (softmax output, aggregation input).
inline constexpr double kSimplexSumTol = 1e-9;

/// Looser tolerance applied when ingesting probit rows from files; rows
/// within it are accepted verbatim, rows beyond it are renormalized.
inline constexpr double kIngestSumTol = 1e-6;

/// Default quantization step used when deciding whether probit coordinates
/// are tied (margin sentinel, degenerate-certificate detection).
inline constexpr double kDefaultTieQuantum = 1e-12;

/// Dense row-major matrix of doubles.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double* row(std::size_t r) { return a.data() + r * cols; }
  const double* row(std::size_t r) const { return a.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  void fill(double v) { a.assign(a.size(), v); }
};

/// A probability vector over K classes: entries in [0, 1], summing to 1
/// within kSimplexSumTol.
struct ProbitVector {
  std::vector<double> p;

  std::size_t k() const { return p.size(); }

  /// Validates and wraps; throws std::invalid_argument on violation.
  static ProbitVector checked(std::vector<double> values,
                              double sum_tol = kSimplexSumTol);
};

/// One inference panel: the n client probit vectors for a single input,
/// with the ground-truth label when known (-1 otherwise).
struct ProbitPanel {
  Mat probits;  // n x K, one client per row
  int label = -1;
  std::string input_id;

  std::size_t n() const { return probits.rows; }
  std::size_t k() const { return probits.cols; }
};

/// Deployment parameters: n clients, at most f of them adversarial, and the
/// robustness coefficient kappa of the aggregation rule in use.
struct SystemParams {
  int n = 0;
  int f = 0;
  double kappa = 0.0;
};

/// Throws std::invalid_argument unless 0 <= f, n >= 1, n > 2f, kappa >= 0.
void validate_params(const SystemParams& params);

/// Throws std::invalid_argument unless every row of the panel is a valid
/// probit vector under sum_tol and the panel is non-empty.  Panels may have
/// been ingested from 9-significant-digit files, so the default tolerance is
/// the ingest one.
void validate_panel(const ProbitPanel& panel, double sum_tol = kIngestSumTol);

/// Sum with a value-sorted addend order: the result depends only on the
/// multiset of values, never on their arrangement, which makes every
/// aggregate built on it bit-exactly permutation invariant.
double stable_sum(std::span<const double> values);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax_index(std::span<const double> values);

/// Softmax with max-subtraction; throws on non-finite logits.
ProbitVector project_softmax(std::span<const double> logits);

/// Numerically careful log-sum-exp of a logit vector.
double log_sum_exp(std::span<const double> logits);

/// Margin of a probit vector: gap between its largest and second-largest
/// entries, with a dedicated infinity when every entry is tied.
struct MarginValue {
  bool is_infinite = false;
  double value = 0.0;  // meaningless when is_infinite

  bool exceeds(double bound) const { return is_infinite || value > bound; }

  static MarginValue finite(double v) { return {false, v}; }
  static MarginValue infinite() { return {true, 0.0}; }
};

/// top1 - top2 of the raw values; the infinite sentinel fires iff all
/// entries fall into the same tie_quantum bucket.  Requires K >= 2.
MarginValue margin(std::span<const double> probits,
                   double tie_quantum = kDefaultTieQuantum);

/// True iff the two largest entries share a tie_quantum bucket (this
/// includes the all-equal case).
bool top_two_tied(std::span<const double> probits,
                  double tie_quantum = kDefaultTieQuantum);

/// Plain coordinate-wise average of the panel rows (order-stable).
std::vector<double> mean_probit(const ProbitPanel& panel);

/// Dispersion of the panel around its mean: the square root of the largest
/// per-coordinate population variance across clients.
double model_dissimilarity(const ProbitPanel& panel);

}  // namespace fedinf
