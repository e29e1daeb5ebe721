#include "fedinf/selfcheck.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fedinf/aggregators.hpp"
#include "fedinf/attacks.hpp"
#include "fedinf/core.hpp"
#include "fedinf/io.hpp"
#include "fedinf/kernels.hpp"
#include "fedinf/nn.hpp"
#include "fedinf/rng.hpp"
#include "fedinf/training.hpp"

namespace fedinf {
namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Mat random_sharp_panel(RngStream& rng, std::size_t n, std::size_t k,
                       double scale) {
  Mat rows(n, k);
  std::vector<double> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : z) v = scale * rng.normal();
    const ProbitVector h = project_softmax(z);
    for (std::size_t c = 0; c < k; ++c) rows.at(i, c) = h.p[c];
  }
  return rows;
}

bool check_frozen_points(std::string& detail) {
  const std::vector<double> logits = {std::log(1.0), std::log(2.0),
                                      std::log(3.0)};
  const ProbitVector sm = project_softmax(logits);
  if (!near(sm.p[0], 1.0 / 6.0, 1e-12) || !near(sm.p[1], 2.0 / 6.0, 1e-12) ||
      !near(sm.p[2], 3.0 / 6.0, 1e-12)) {
    detail = "softmax of (ln 1, ln 2, ln 3)";
    return false;
  }
  if (trimmed_mean({0, 1, 2, 3, 100}, 1) != 2.0) {
    detail = "trimmed mean of {0,1,2,3,100}";
    return false;
  }
  if (!near(kappa_cwtm(17, 4), 312.0 / 81.0, 1e-15) ||
      kappa_cwtm(3, 1) != 12.0 || kappa_cwtm(9, 0) != 0.0) {
    detail = "trimmed-mean robustness coefficient";
    return false;
  }
  return true;
}

bool check_three_client_example(std::string& detail) {
  // Three clients, eps = 0.01: (1,0,0), (0,1,0), (1/2, 1/2-eps, eps).
  const double eps = 0.01;
  ProbitPanel panel;
  panel.probits = Mat(3, 3);
  const double rows[3][3] = {
      {1, 0, 0}, {0, 1, 0}, {0.5, 0.5 - eps, eps}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 3; ++c) panel.probits.at(i, c) = rows[i][c];
  const std::vector<double> mean = mean_probit(panel);
  if (!near(mean[0], 0.5, 1e-15) || !near(mean[1], 0.5 - eps / 3.0, 1e-15) ||
      !near(mean[2], eps / 3.0, 1e-15)) {
    detail = "average of the three clients";
    return false;
  }
  // A vector within sqrt(14)/3 * eps of the average flips the argmax: small
  // L2 error does not preserve the decision.
  const std::vector<double> flipped = {0.5 - eps, 0.5, eps};
  if (argmax_index(mean) != 0 || argmax_index(flipped) != 1) {
    detail = "argmax flip under a small L2 perturbation";
    return false;
  }
  const MarginValue m = margin(mean);
  if (m.is_infinite || !near(m.value, eps / 3.0, 1e-15)) {
    detail = "margin of the average";
    return false;
  }
  return true;
}

bool check_margin_sentinel(std::string& detail) {
  const std::vector<double> uniform = {0.25, 0.25, 0.25, 0.25};
  if (!margin(uniform).is_infinite) {
    detail = "all-tied vector must have infinite margin";
    return false;
  }
  const MarginValue m = margin(std::vector<double>{0.6, 0.3, 0.1});
  if (m.is_infinite || !near(m.value, 0.3, 1e-15)) {
    detail = "margin of (0.6, 0.3, 0.1)";
    return false;
  }
  return true;
}

bool check_adversary_weights(std::string& detail) {
  const std::vector<double> w = adversary_count_weights(17, 4);
  const double expected[] = {17, 136, 680, 2380};
  for (std::size_t i = 0; i < 4; ++i)
    if (w[i] != expected[i]) {
      detail = "binomial weights for n=17, f=4";
      return false;
    }
  return true;
}

bool check_fk_on_random_panels(std::string& detail) {
  RngStream rng = RngStream::derive(7, "selftest/fk");
  const int n = 7, f = 2;
  const double kappa = kappa_cwtm(n, f);
  for (int trial = 0; trial < 25; ++trial) {
    const Mat rows = random_sharp_panel(rng, n, 4, 2.0);
    const FkCheckReport rep = check_fk_robustness(
        [f](const Mat& m) { return cwtm_rule(m, f); }, rows, f, kappa);
    if (!rep.ok) {
      std::ostringstream os;
      os << "trimmed-mean robustness inequality failed (ratio "
         << rep.max_ratio << ")";
      detail = os.str();
      return false;
    }
  }
  return true;
}

bool check_certificate_on_one_hot_attacks(std::string& detail) {
  RngStream rng = RngStream::derive(11, "selftest/cert");
  const int n = 7, f = 2;
  SystemParams params{n, f, kappa_cwtm(n, f)};
  int certified_seen = 0;
  for (int trial = 0; trial < 400; ++trial) {
    ProbitPanel panel;
    // Concentrated panels (small spread) are the certifiable ones.
    Mat base = random_sharp_panel(rng, 1, 4, 3.0);
    panel.probits = Mat(std::size_t(n), 4);
    std::vector<double> z(4);
    for (std::size_t i = 0; i < std::size_t(n); ++i) {
      for (std::size_t c = 0; c < 4; ++c)
        z[c] = std::log(std::max(base.at(0, c), 1e-12)) + 0.05 * rng.normal();
      const ProbitVector h = project_softmax(z);
      for (std::size_t c = 0; c < 4; ++c) panel.probits.at(i, c) = h.p[c];
    }
    const Certificate cert = certify(panel, params);
    if (!cert.certified || cert.degenerate) continue;
    ++certified_seen;
    const int clean_pred = argmax_index(mean_probit(panel));
    // Throw every one-hot corruption of the last f clients at the trimmed
    // mean; a certified prediction must not move.
    for (int target = 0; target < 4; ++target) {
      ProbitPanel corrupted = panel;
      for (int a = 0; a < f; ++a) {
        double* row = corrupted.probits.row(std::size_t(n - 1 - a));
        std::fill(row, row + 4, 0.0);
        row[target] = 1.0;
      }
      if (robust_argmax_classify(corrupted.probits, RuleKind::Cwtm, f) !=
          clean_pred) {
        detail = "a certified panel changed its prediction under attack";
        return false;
      }
    }
  }
  if (certified_seen == 0) {
    detail = "no certified panel in the sample";
    return false;
  }
  return true;
}

double forward_loss(const DeepSetModel& model, const Mat& rows, int label) {
  const DeepSetOutput out = deepset_forward(model, rows);
  return cross_entropy(out.probs, label);
}

bool check_gradients(std::string& detail) {
  RngStream rng = RngStream::derive(23, "selftest/grad");
  const std::size_t n = 5, k = 4;
  DeepSetModel model = make_deepset(k, 6, 8, rng);
  Mat rows = random_sharp_panel(rng, n, k, 1.0);
  const int label = 1;

  DeepSetTape tape;
  deepset_forward_tape(model, rows, tape);
  DeepSetGrads grads;
  grads.match(model);
  Mat drows;
  deepset_backward(model, tape, ce_grad_scores(tape.probs, label), grads,
                   &drows);

  const double h = 1e-6;
  auto probe = [&](std::vector<double>& block, const std::vector<double>& g,
                   std::size_t idx) {
    const double keep = block[idx];
    block[idx] = keep + h;
    const double hi = forward_loss(model, rows, label);
    block[idx] = keep - h;
    const double lo = forward_loss(model, rows, label);
    block[idx] = keep;
    const double fd = (hi - lo) / (2.0 * h);
    return near(g[idx], fd, 1e-6 + 1e-4 * std::abs(fd));
  };
  if (!probe(model.rho.w1.a, grads.rho.w1.a, 3) ||
      !probe(model.rho.b1, grads.rho.b1, 2) ||
      !probe(model.mu.w2.a, grads.mu.w2.a, 5) ||
      !probe(model.mu.b2, grads.mu.b2, 1)) {
    detail = "parameter gradient disagrees with finite differences";
    return false;
  }

  // Input gradient through the simplex projection.
  std::vector<double> v(k);
  for (double& x : v) x = rng.normal();
  std::vector<double> dlogit(k);
  {
    const ProbitVector hrow = project_softmax(v);
    for (std::size_t c = 0; c < k; ++c) rows.at(0, c) = hrow.p[c];
    deepset_forward_tape(model, rows, tape);
    grads.zero();
    deepset_backward(model, tape, ce_grad_scores(tape.probs, label), grads,
                     &drows);
    softmax_vjp(rows.row(0), drows.row(0), dlogit.data(), k);
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto loss_at = [&](double vc) {
      std::vector<double> vv = v;
      vv[c] = vc;
      const ProbitVector hrow = project_softmax(vv);
      Mat r2 = rows;
      for (std::size_t j = 0; j < k; ++j) r2.at(0, j) = hrow.p[j];
      return forward_loss(model, r2, label);
    };
    const double fd = (loss_at(v[c] + h) - loss_at(v[c] - h)) / (2.0 * h);
    if (!near(dlogit[c], fd, 1e-6 + 1e-4 * std::abs(fd))) {
      detail = "logit-space input gradient disagrees with finite differences";
      return false;
    }
  }
  return true;
}

bool check_kernel_agreement(std::string& detail) {
  RngStream rng = RngStream::derive(31, "selftest/kern");
  const std::size_t rows = 13, cols = 37;
  std::vector<double> w(rows * cols), x(cols), b(rows), y1(rows), y2(rows);
  for (double& v : w) v = rng.normal();
  for (double& v : x) v = rng.normal();
  for (double& v : b) v = rng.normal();
  kern::scalar_ops.matvec(w.data(), x.data(), b.data(), y1.data(), rows, cols);
  kern::active().matvec(w.data(), x.data(), b.data(), y2.data(), rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    if (!near(y1[r], y2[r], 1e-12 * (1.0 + std::abs(y1[r])))) {
      detail = std::string("matvec mismatch between scalar and ") +
               kern::active_name();
      return false;
    }
  const double d1 = kern::scalar_ops.dot(w.data(), w.data(), w.size());
  const double d2 = kern::active().dot(w.data(), w.data(), w.size());
  if (!near(d1, d2, 1e-12 * (1.0 + std::abs(d1)))) {
    detail = "dot mismatch between kernel variants";
    return false;
  }
  return true;
}

bool check_stream_determinism(std::string& detail) {
  RngStream a = RngStream::derive(42, "purpose", 7);
  RngStream b = RngStream::derive(42, "purpose", 7);
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() != b.next_u64()) {
      detail = "identical derivations must agree";
      return false;
    }
  RngStream c = RngStream::derive(42, "purpose", 8);
  RngStream d = RngStream::derive(42, "purpose", 7);
  bool differs = false;
  for (int i = 0; i < 8; ++i) differs |= (c.next_u64() != d.next_u64());
  if (!differs) {
    detail = "different salts must decorrelate";
    return false;
  }
  return true;
}

bool check_dataset_round_trip(std::string& detail) {
  RngStream rng = RngStream::derive(5, "selftest/io");
  std::vector<ProbitPanel> panels;
  for (int t = 0; t < 3; ++t) {
    ProbitPanel p;
    p.probits = random_sharp_panel(rng, 4, 3, 2.0);
    p.label = t % 3;
    p.input_id = "check-" + std::to_string(t);
    panels.push_back(std::move(p));
  }
  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("fedinf-selftest-" + std::to_string(::getpid()) + ".txt"))
          .string();
  write_dataset(path, panels, 99);
  const DatasetReadResult first = read_dataset(path);
  const std::string path2 = path + ".2";
  write_dataset(path2, first.panels, 99);
  std::ifstream f1(path), f2(path2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
  if (s1.str() != s2.str() || s1.str().empty()) {
    detail = "write-read-write is not byte stable";
    return false;
  }
  if (first.renormalized_rows != 0) {
    detail = "round trip should not renormalize";
    return false;
  }
  return true;
}

}  // namespace

int run_selftest(std::ostream& out) {
  struct Check {
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const Check checks[] = {
      {"frozen reference points", check_frozen_points},
      {"three-client averaging example", check_three_client_example},
      {"margin tie sentinel", check_margin_sentinel},
      {"adversary count weights", check_adversary_weights},
      {"trimmed-mean robustness inequality", check_fk_on_random_panels},
      {"certificate holds under one-hot attacks",
       check_certificate_on_one_hot_attacks},
      {"gradients match finite differences", check_gradients},
      {"kernel variants agree", check_kernel_agreement},
      {"stream determinism", check_stream_determinism},
      {"dataset round trip", check_dataset_round_trip},
  };
  int failures = 0;
  for (const Check& check : checks) {
    std::string detail;
    bool ok = false;
    try {
      ok = check.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (ok) {
      out << "ok - " << check.name << "\n";
    } else {
      ++failures;
      out << "FAIL - " << check.name;
      if (!detail.empty()) out << " (" << detail << ")";
      out << "\n";
    }
  }
  out << (failures == 0 ? "selftest passed" : "selftest FAILED") << " ("
      << (sizeof(checks) / sizeof(checks[0]) - std::size_t(failures)) << "/"
      << sizeof(checks) / sizeof(checks[0]) << ")\n";
  return failures;
}

}  // namespace fedinf
