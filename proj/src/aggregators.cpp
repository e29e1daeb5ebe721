#include "fedinf/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedinf {

bool rule_is_static(RuleKind kind) {
  switch (kind) {
    case RuleKind::Mean:
    case RuleKind::Cwtm:
    case RuleKind::Cwmed:
    case RuleKind::Gm:
      return true;
    default:
      return false;
  }
}

std::string rule_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::Mean: return "mean";
    case RuleKind::Cwtm: return "cwtm";
    case RuleKind::Cwmed: return "cwmed";
    case RuleKind::Gm: return "gm";
    case RuleKind::DeepSet: return "deepset";
    case RuleKind::DeepSetTm: return "deepset_tm";
    case RuleKind::RandomizedAblation: return "ra";
  }
  return "?";
}

std::string spec_name(const AggregatorSpec& spec) {
  if (spec.kind == RuleKind::RandomizedAblation)
    return "ra:" + rule_name(spec.ra_inner);
  return rule_name(spec.kind);
}

namespace {
RuleKind parse_rule_token(const std::string& t) {
  if (t == "mean") return RuleKind::Mean;
  if (t == "cwtm") return RuleKind::Cwtm;
  if (t == "cwmed") return RuleKind::Cwmed;
  if (t == "gm") return RuleKind::Gm;
  if (t == "deepset") return RuleKind::DeepSet;
  if (t == "deepset_tm" || t == "deepset-tm") return RuleKind::DeepSetTm;
  throw std::invalid_argument("unknown aggregator: " + t);
}
}  // namespace

AggregatorSpec parse_aggregator(const std::string& text) {
  AggregatorSpec spec;
  if (text.rfind("ra:", 0) == 0) {
    spec.kind = RuleKind::RandomizedAblation;
    spec.ra_inner = parse_rule_token(text.substr(3));
    return spec;
  }
  if (text == "ra")
    throw std::invalid_argument("ablation needs an inner rule, e.g. ra:cwtm");
  spec.kind = parse_rule_token(text);
  return spec;
}

std::vector<double> mean_rule(const Mat& rows) {
  ProbitPanel tmp;
  tmp.probits = rows;
  return mean_probit(tmp);
}

double trimmed_mean(std::vector<double> values, int f) {
  const int n = int(values.size());
  if (f < 0) throw std::invalid_argument("trimmed mean: f must be >= 0");
  if (n <= 2 * f)
    throw std::invalid_argument("trimmed mean: needs more than 2f values");
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (int i = f; i < n - f; ++i) s += values[std::size_t(i)];
  return s / double(n - 2 * f);
}

std::vector<double> cwtm_rule(const Mat& rows, int f) {
  const std::size_t n = rows.rows, k = rows.cols;
  if (int(n) <= 2 * f || f < 0)
    throw std::invalid_argument("cwtm: needs n > 2f");
  std::vector<double> out(k);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = rows.at(i, c);
    out[c] = trimmed_mean(column, f);
  }
  return out;
}

std::vector<double> cwmed_rule(const Mat& rows) {
  const std::size_t n = rows.rows, k = rows.cols;
  if (n == 0) throw std::invalid_argument("cwmed: empty input");
  std::vector<double> out(k);
  std::vector<double> column(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = rows.at(i, c);
    std::sort(column.begin(), column.end());
    out[c] = (n % 2 == 1)
                 ? column[n / 2]
                 : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

GmResult geometric_median(const Mat& rows, double tol, int max_iter,
                          double dist_floor) {
  const std::size_t n = rows.rows, k = rows.cols;
  if (n == 0) throw std::invalid_argument("gm: empty input");
  GmResult res;
  res.point = mean_rule(rows);
  if (n == 1) {
    res.converged = true;
    return res;
  }
  std::vector<double> w(n), prod(n), next(k);
  for (int it = 1; it <= max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      const double* r = rows.row(i);
      for (std::size_t c = 0; c < k; ++c) {
        const double d = r[c] - res.point[c];
        d2 += d * d;
      }
      w[i] = 1.0 / std::max(std::sqrt(d2), dist_floor);
    }
    const double wsum = stable_sum(w);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) prod[i] = w[i] * rows.at(i, c);
      next[c] = stable_sum(prod) / wsum;
    }
    double move2 = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = next[c] - res.point[c];
      move2 += d * d;
    }
    res.point = next;
    res.iterations = it;
    if (std::sqrt(move2) <= tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

double kappa_cwtm(int n, int f) {
  if (f < 0 || n <= 2 * f) throw std::invalid_argument("kappa: needs n > 2f");
  if (f == 0) return 0.0;
  const double r = double(f) / double(n - 2 * f);
  return 6.0 * r * (1.0 + r);
}

FkCheckReport check_fk_robustness(
    const std::function<std::vector<double>(const Mat&)>& rule,
    const Mat& rows, int f, double kappa, FkCheckOptions opts) {
  const int n = int(rows.rows);
  const std::size_t k = rows.cols;
  if (f < 0 || n <= 2 * f)
    throw std::invalid_argument("robustness check: needs n > 2f");
  if (n > opts.max_n)
    throw std::invalid_argument(
        "robustness check: subset enumeration capped at n <= " +
        std::to_string(opts.max_n));

  const std::vector<double> out = rule(rows);
  const int keep = n - f;
  std::vector<int> idx(static_cast<std::size_t>(keep));
  for (int i = 0; i < keep; ++i) idx[std::size_t(i)] = i;

  FkCheckReport rep;
  std::vector<double> column(static_cast<std::size_t>(keep)), mean_s(k);
  for (;;) {
    ++rep.subsets_checked;
    for (std::size_t c = 0; c < k; ++c) {
      for (int i = 0; i < keep; ++i)
        column[std::size_t(i)] = rows.at(std::size_t(idx[std::size_t(i)]), c);
      mean_s[c] = stable_sum(column) / double(keep);
    }
    double lhs = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = out[c] - mean_s[c];
      lhs += d * d;
    }
    double spread = 0.0;
    for (int i = 0; i < keep; ++i) {
      const double* r = rows.row(std::size_t(idx[std::size_t(i)]));
      for (std::size_t c = 0; c < k; ++c) {
        const double d = r[c] - mean_s[c];
        spread += d * d;
      }
    }
    const double rhs = spread / double(keep);
    const bool holds = lhs <= kappa * rhs * (1.0 + opts.slack_rel) + opts.slack_abs;
    const double ratio = rhs > 0.0
                             ? lhs / rhs
                             : (lhs > opts.slack_abs
                                    ? std::numeric_limits<double>::infinity()
                                    : 0.0);
    if (ratio > rep.max_ratio || rep.worst_subset.empty()) {
      rep.max_ratio = std::max(rep.max_ratio, ratio);
      rep.worst_lhs = lhs;
      rep.worst_rhs = rhs;
      rep.worst_subset = idx;
    }
    if (!holds) rep.ok = false;

    // next k-combination of [0, n)
    int pos = keep - 1;
    while (pos >= 0 && idx[std::size_t(pos)] == n - keep + pos) --pos;
    if (pos < 0) break;
    ++idx[std::size_t(pos)];
    for (int j = pos + 1; j < keep; ++j)
      idx[std::size_t(j)] = idx[std::size_t(j - 1)] + 1;
  }
  return rep;
}

double certificate_bound(const SystemParams& params, double sigma_x) {
  validate_params(params);
  if (!(sigma_x >= 0.0))
    throw std::invalid_argument("certificate: sigma_x must be >= 0");
  const double n = params.n, f = params.f;
  return 2.0 * (std::sqrt(params.kappa * n / (n - f)) + std::sqrt(f / (n - f))) *
         sigma_x;
}

Certificate certify(const ProbitPanel& panel, const SystemParams& params,
                    double tie_quantum) {
  validate_panel(panel);
  validate_params(params);
  if (int(panel.n()) != params.n)
    throw std::invalid_argument("certify: panel size does not match params.n");
  Certificate cert;
  const std::vector<double> mean = mean_probit(panel);
  cert.margin = margin(mean, tie_quantum);
  cert.sigma_x = model_dissimilarity(panel);
  cert.kappa = params.kappa;
  cert.bound = certificate_bound(params, cert.sigma_x);
  cert.certified = cert.margin.exceeds(cert.bound);
  cert.degenerate = cert.margin.is_infinite || top_two_tied(mean, tie_quantum);
  return cert;
}

std::vector<double> apply_static_rule(const Mat& rows, RuleKind kind, int f) {
  switch (kind) {
    case RuleKind::Mean: return mean_rule(rows);
    case RuleKind::Cwtm: return cwtm_rule(rows, f);
    case RuleKind::Cwmed: return cwmed_rule(rows);
    case RuleKind::Gm: return geometric_median(rows).point;
    default:
      throw std::invalid_argument("apply_static_rule: " + rule_name(kind) +
                                  " is not a static rule");
  }
}

int robust_argmax_classify(const Mat& rows, RuleKind kind, int f) {
  const std::vector<double> agg = apply_static_rule(rows, kind, f);
  return argmax_index(agg);
}

int randomized_ablation_classify(
    const Mat& rows, int drop, int rounds,
    const std::function<int(const Mat&)>& inner_classify, RngStream& rng) {
  const int n = int(rows.rows);
  if (drop < 0 || drop >= n)
    throw std::invalid_argument("ablation: need 0 <= drop < n");
  if (rounds < 1) throw std::invalid_argument("ablation: rounds must be >= 1");
  std::vector<int> votes(rows.cols, 0);
  std::vector<char> dropped(static_cast<std::size_t>(n));
  Mat survivors(std::size_t(n - drop), rows.cols);
  for (int round = 0; round < rounds; ++round) {
    std::fill(dropped.begin(), dropped.end(), 0);
    for (int i : rng.sample_without_replacement(n, drop))
      dropped[std::size_t(i)] = 1;
    std::size_t r = 0;
    for (int i = 0; i < n; ++i) {
      if (dropped[std::size_t(i)]) continue;
      std::copy(rows.row(std::size_t(i)), rows.row(std::size_t(i)) + rows.cols,
                survivors.row(r));
      ++r;
    }
    const int cls = inner_classify(survivors);
    if (cls < 0 || cls >= int(votes.size()))
      throw std::runtime_error("ablation: inner classifier returned bad class");
    ++votes[std::size_t(cls)];
  }
  int best = 0;
  for (int c = 1; c < int(votes.size()); ++c)
    if (votes[std::size_t(c)] > votes[std::size_t(best)]) best = c;
  return best;
}

}  // namespace fedinf
