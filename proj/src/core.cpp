#include "fedinf/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedinf {

ProbitVector ProbitVector::checked(std::vector<double> values, double sum_tol) {
  if (values.empty())
    throw std::invalid_argument("probit vector: must have at least one class");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("probit vector: entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > sum_tol)
    throw std::invalid_argument("probit vector: entries do not sum to 1");
  return ProbitVector{std::move(values)};
}

void validate_params(const SystemParams& params) {
  if (params.n < 1) throw std::invalid_argument("params: n must be >= 1");
  if (params.f < 0) throw std::invalid_argument("params: f must be >= 0");
  if (params.n <= 2 * params.f)
    throw std::invalid_argument("params: need n > 2f");
  if (!(params.kappa >= 0.0))
    throw std::invalid_argument("params: kappa must be >= 0");
}

void validate_panel(const ProbitPanel& panel, double sum_tol) {
  if (panel.probits.rows == 0 || panel.probits.cols == 0)
    throw std::invalid_argument("panel: must contain at least one client row");
  for (std::size_t i = 0; i < panel.probits.rows; ++i) {
    const double* r = panel.probits.row(i);
    double sum = 0.0;
    for (std::size_t k = 0; k < panel.probits.cols; ++k) {
      if (!std::isfinite(r[k]) || r[k] < 0.0 || r[k] > 1.0)
        throw std::invalid_argument("panel: probit entry outside [0, 1]");
      sum += r[k];
    }
    if (std::abs(sum - 1.0) > sum_tol)
      throw std::invalid_argument("panel: client row does not sum to 1");
  }
}

double stable_sum(std::span<const double> values) {
  if (values.size() <= 2) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double s = 0.0;
  for (double v : sorted) s += v;
  return s;
}

int argmax_index(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty vector");
  int best = 0;
  for (int i = 1; i < int(values.size()); ++i)
    if (values[std::size_t(i)] > values[std::size_t(best)]) best = i;
  return best;
}

ProbitVector project_softmax(std::span<const double> logits) {
  if (logits.empty())
    throw std::invalid_argument("softmax: empty logit vector");
  double hi = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v))
      throw std::invalid_argument("softmax: non-finite logit");
    hi = std::max(hi, v);
  }
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return ProbitVector{std::move(out)};
}

double log_sum_exp(std::span<const double> logits) {
  double hi = logits[0];
  for (double v : logits) hi = std::max(hi, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - hi);
  return hi + std::log(z);
}

namespace {
long long quantize(double v, double q) {
  return std::llround(v / q);
}
}  // namespace

MarginValue margin(std::span<const double> probits, double tie_quantum) {
  if (probits.size() < 2)
    throw std::invalid_argument("margin: needs at least two classes");
  if (!(tie_quantum > 0.0))
    throw std::invalid_argument("margin: tie quantum must be > 0");
  const long long q0 = quantize(probits[0], tie_quantum);
  bool all_tied = true;
  double top1 = probits[0], top2 = -1.0;
  for (std::size_t i = 1; i < probits.size(); ++i) {
    if (quantize(probits[i], tie_quantum) != q0) all_tied = false;
    if (probits[i] > top1) {
      top2 = top1;
      top1 = probits[i];
    } else if (probits[i] > top2) {
      top2 = probits[i];
    }
  }
  if (all_tied) return MarginValue::infinite();
  return MarginValue::finite(top1 - top2);
}

bool top_two_tied(std::span<const double> probits, double tie_quantum) {
  if (probits.size() < 2)
    throw std::invalid_argument("margin: needs at least two classes");
  double top1 = probits[0], top2 = -1.0;
  for (std::size_t i = 1; i < probits.size(); ++i) {
    if (probits[i] > top1) {
      top2 = top1;
      top1 = probits[i];
    } else if (probits[i] > top2) {
      top2 = probits[i];
    }
  }
  return quantize(top1, tie_quantum) == quantize(top2, tie_quantum);
}

std::vector<double> mean_probit(const ProbitPanel& panel) {
  const std::size_t n = panel.n(), k = panel.k();
  if (n == 0) throw std::invalid_argument("mean: empty panel");
  std::vector<double> out(k);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = panel.probits.at(i, c);
    out[c] = stable_sum(column) / double(n);
  }
  return out;
}

double model_dissimilarity(const ProbitPanel& panel) {
  const std::size_t n = panel.n(), k = panel.k();
  if (n == 0) throw std::invalid_argument("dissimilarity: empty panel");
  const std::vector<double> mean = mean_probit(panel);
  std::vector<double> sq(n);
  double worst = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = panel.probits.at(i, c) - mean[c];
      sq[i] = d * d;
    }
    worst = std::max(worst, stable_sum(sq) / double(n));
  }
  return std::sqrt(worst);
}

}  // namespace fedinf
