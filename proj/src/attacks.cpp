#include "fedinf/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fedinf/kernels.hpp"

namespace fedinf {

std::string attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::LogitFlip: return "logit_flip";
    case AttackKind::SiaBb: return "sia_bb";
    case AttackKind::SiaWb: return "sia_wb";
    case AttackKind::Lma: return "lma";
    case AttackKind::Cpa: return "cpa";
    case AttackKind::PgdCw: return "pgd_cw";
  }
  return "?";
}

AttackKind parse_attack(const std::string& text) {
  for (AttackKind k : all_attacks())
    if (attack_name(k) == text) return k;
  throw std::invalid_argument("unknown attack: " + text);
}

const std::vector<AttackKind>& all_attacks() {
  static const std::vector<AttackKind> kinds = {
      AttackKind::LogitFlip, AttackKind::SiaBb, AttackKind::SiaWb,
      AttackKind::Lma,       AttackKind::Cpa,   AttackKind::PgdCw,
  };
  return kinds;
}

void validate_attack_config(const AttackConfig& cfg) {
  if (!(cfg.amplification > 0.0))
    throw std::invalid_argument("attack config: amplification must be > 0");
  if (cfg.pgd_steps < 1)
    throw std::invalid_argument("attack config: pgd steps must be >= 1");
  if (!(cfg.pgd_step > 0.0))
    throw std::invalid_argument("attack config: pgd step size must be > 0");
}

namespace {

void require_label(const ProbitPanel& panel) {
  if (panel.label < 0 || panel.label >= int(panel.k()))
    throw std::invalid_argument("attack: panel needs a valid label");
}

void check_adversaries(const ProbitPanel& panel,
                       const std::vector<int>& adversaries) {
  std::vector<char> seen(panel.n(), 0);
  for (int i : adversaries) {
    if (i < 0 || i >= int(panel.n()))
      throw std::invalid_argument("attack: adversary index out of range");
    if (seen[std::size_t(i)])
      throw std::invalid_argument("attack: duplicate adversary index");
    seen[std::size_t(i)] = 1;
  }
}

void set_one_hot(ProbitPanel& panel, int row, int cls) {
  double* r = panel.probits.row(std::size_t(row));
  std::fill(r, r + panel.k(), 0.0);
  r[cls] = 1.0;
}

int argmax_excluding(const double* v, std::size_t k, int excluded) {
  int best = -1;
  for (int i = 0; i < int(k); ++i) {
    if (i == excluded) continue;
    if (best < 0 || v[i] > v[best]) best = i;
  }
  return best;
}

int argmin_index(const double* v, std::size_t k) {
  int best = 0;
  for (int i = 1; i < int(k); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

void require_oracle(const std::vector<double>& oracle, std::size_t k) {
  if (oracle.size() != k)
    throw std::invalid_argument("attack: oracle vector has wrong length");
}

}  // namespace

ProbitPanel attack_logit_flipping(const ProbitPanel& panel,
                                  const std::vector<int>& adversaries,
                                  double amplification) {
  check_adversaries(panel, adversaries);
  ProbitPanel out = panel;
  std::vector<double> flipped(panel.k());
  for (int i : adversaries) {
    const double* h = panel.probits.row(std::size_t(i));
    for (std::size_t c = 0; c < panel.k(); ++c)
      flipped[c] = -amplification * h[c];
    const ProbitVector p = project_softmax(flipped);
    std::copy(p.p.begin(), p.p.end(), out.probits.row(std::size_t(i)));
  }
  return out;
}

ProbitPanel attack_sia_blackbox(const ProbitPanel& panel,
                                const std::vector<int>& adversaries) {
  require_label(panel);
  check_adversaries(panel, adversaries);
  ProbitPanel out = panel;
  for (int i : adversaries) {
    const int target = argmax_excluding(panel.probits.row(std::size_t(i)),
                                        panel.k(), panel.label);
    set_one_hot(out, i, target);
  }
  return out;
}

ProbitPanel attack_sia_whitebox(const ProbitPanel& panel,
                                const std::vector<int>& adversaries,
                                const std::vector<double>& oracle) {
  require_label(panel);
  check_adversaries(panel, adversaries);
  require_oracle(oracle, panel.k());
  const int target = argmax_excluding(oracle.data(), panel.k(), panel.label);
  ProbitPanel out = panel;
  for (int i : adversaries) set_one_hot(out, i, target);
  return out;
}

ProbitPanel attack_lma(const ProbitPanel& panel,
                       const std::vector<int>& adversaries,
                       const std::vector<double>& oracle) {
  check_adversaries(panel, adversaries);
  require_oracle(oracle, panel.k());
  const int target = argmin_index(oracle.data(), panel.k());
  ProbitPanel out = panel;
  for (int i : adversaries) set_one_hot(out, i, target);
  return out;
}

ProbitPanel attack_cpa(const ProbitPanel& panel,
                       const std::vector<int>& adversaries,
                       const std::vector<double>& oracle,
                       const Mat& similarity) {
  check_adversaries(panel, adversaries);
  require_oracle(oracle, panel.k());
  validate_similarity(similarity);
  if (similarity.rows != panel.k())
    throw std::invalid_argument("cpa: similarity size does not match classes");
  const int predicted = argmax_index(oracle);
  const double* sim_row = similarity.row(std::size_t(predicted));
  int target = -1;  // least similar class, prediction itself excluded
  for (int c = 0; c < int(panel.k()); ++c) {
    if (c == predicted) continue;
    if (target < 0 || sim_row[c] < sim_row[target]) target = c;
  }
  ProbitPanel out = panel;
  for (int i : adversaries) set_one_hot(out, i, target);
  return out;
}

ProbitPanel attack_pgd_cw(const ProbitPanel& panel,
                          const std::vector<int>& adversaries,
                          const DeepSetModel& model, int steps,
                          double step_size) {
  require_label(panel);
  check_adversaries(panel, adversaries);
  if (steps < 0) throw std::invalid_argument("pgd: steps must be >= 0");
  if (!(step_size > 0.0))
    throw std::invalid_argument("pgd: step size must be > 0");
  if (model.num_classes() != panel.k())
    throw std::invalid_argument("pgd: model class count mismatch");

  const std::size_t k = panel.k();
  const std::size_t n = panel.n();
  const std::size_t p = model.pool_dim();
  const std::size_t m = adversaries.size();
  ProbitPanel out = panel;

  // Honest rows never move, so their encoder outputs are pooled once.
  std::vector<char> is_adv(n, 0);
  for (int i : adversaries) is_adv[std::size_t(i)] = 1;
  std::vector<double> honest_pool(p, 0.0), rho_row(p);
  for (std::size_t i = 0; i < n; ++i) {
    if (is_adv[i]) continue;
    mlp2_forward(model.rho, panel.probits.row(i), nullptr, rho_row.data());
    kern::axpy(1.0, rho_row.data(), honest_pool.data(), p);
  }

  // Work in logit space; rows re-enter the simplex through softmax.
  Mat logits(m, k);
  for (std::size_t a = 0; a < m; ++a) {
    const double* h = panel.probits.row(std::size_t(adversaries[a]));
    for (std::size_t c = 0; c < k; ++c)
      logits.at(a, c) = std::log(std::max(h[c], 1e-12));
  }
  std::vector<Mlp2Tape> adv_tapes(m);
  Mat adv_out(m, p);
  auto write_rows = [&] {
    for (std::size_t a = 0; a < m; ++a) {
      const ProbitVector h =
          project_softmax(std::span<const double>(logits.row(a), k));
      std::copy(h.p.begin(), h.p.end(),
                out.probits.row(std::size_t(adversaries[a])));
      mlp2_forward(model.rho, out.probits.row(std::size_t(adversaries[a])),
                   &adv_tapes[a], adv_out.row(a));
    }
  };
  write_rows();

  Mlp2Tape mu_tape;
  std::vector<double> pooled(p), scores(k), dpooled(p), dper_row(p),
      dprobit(k), dlogit(k);
  for (int s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < p; ++j) {
      double acc = honest_pool[j];
      for (std::size_t a = 0; a < m; ++a) acc += adv_out.at(a, j);
      pooled[j] = acc / double(n);
    }
    mlp2_forward(model.mu, pooled.data(), &mu_tape, scores.data());
    const std::vector<double> dscores = cw_grad_scores(scores, panel.label);
    std::fill(dpooled.begin(), dpooled.end(), 0.0);
    mlp2_input_grad(model.mu, mu_tape, dscores.data(), dpooled.data());
    for (std::size_t j = 0; j < p; ++j) dper_row[j] = dpooled[j] / double(n);
    for (std::size_t a = 0; a < m; ++a) {
      std::fill(dprobit.begin(), dprobit.end(), 0.0);
      mlp2_input_grad(model.rho, adv_tapes[a], dper_row.data(), dprobit.data());
      softmax_vjp(out.probits.row(std::size_t(adversaries[a])), dprobit.data(),
                  dlogit.data(), k);
      double* va = logits.row(a);
      for (std::size_t c = 0; c < k; ++c) {
        if (dlogit[c] > 0.0)
          va[c] += step_size;
        else if (dlogit[c] < 0.0)
          va[c] -= step_size;
      }
    }
    write_rows();
  }
  return out;
}

void check_corruption_membership(const ProbitPanel& original,
                                 const ProbitPanel& corrupted,
                                 const std::vector<int>& adversaries, int f) {
  if (corrupted.probits.rows != original.probits.rows ||
      corrupted.probits.cols != original.probits.cols)
    throw std::runtime_error("corruption check: panel shape changed");
  if (int(adversaries.size()) > f)
    throw std::runtime_error("corruption check: more than f adversaries");
  std::vector<char> is_adv(original.n(), 0);
  for (int i : adversaries) {
    if (i < 0 || i >= int(original.n()))
      throw std::runtime_error("corruption check: adversary out of range");
    is_adv[std::size_t(i)] = 1;
  }
  for (std::size_t i = 0; i < original.n(); ++i) {
    if (is_adv[i]) continue;
    if (std::memcmp(original.probits.row(i), corrupted.probits.row(i),
                    original.k() * sizeof(double)) != 0)
      throw std::runtime_error("corruption check: honest row was modified");
  }
  try {
    validate_panel(corrupted);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("corruption check: ") + e.what());
  }
}

void validate_similarity(const Mat& similarity) {
  if (similarity.rows == 0 || similarity.rows != similarity.cols)
    throw std::invalid_argument("similarity: must be square and non-empty");
  for (std::size_t i = 0; i < similarity.rows; ++i) {
    if (std::abs(similarity.at(i, i) - 1.0) > 1e-9)
      throw std::invalid_argument("similarity: diagonal must be 1");
    for (std::size_t j = i + 1; j < similarity.cols; ++j)
      if (std::abs(similarity.at(i, j) - similarity.at(j, i)) > 1e-9)
        throw std::invalid_argument("similarity: must be symmetric");
  }
}

CorruptedPanel corrupt_panel(const AttackConfig& cfg, const ProbitPanel& panel,
                             std::vector<int> adversaries,
                             const std::vector<double>* oracle,
                             const Mat* similarity, const DeepSetModel* model) {
  validate_panel(panel);
  if (panel.k() < 2)
    throw std::invalid_argument("attack: needs at least two classes");
  auto need = [&](const void* ptr, const char* what) {
    if (!ptr)
      throw std::invalid_argument(std::string("attack ") +
                                  attack_name(cfg.kind) + " needs " + what);
  };
  CorruptedPanel out;
  switch (cfg.kind) {
    case AttackKind::LogitFlip:
      out.panel = attack_logit_flipping(panel, adversaries, cfg.amplification);
      break;
    case AttackKind::SiaBb:
      out.panel = attack_sia_blackbox(panel, adversaries);
      break;
    case AttackKind::SiaWb:
      need(oracle, "the clean aggregate");
      out.panel = attack_sia_whitebox(panel, adversaries, *oracle);
      break;
    case AttackKind::Lma:
      need(oracle, "the clean aggregate");
      out.panel = attack_lma(panel, adversaries, *oracle);
      break;
    case AttackKind::Cpa:
      need(oracle, "the clean aggregate");
      need(similarity, "a class-similarity matrix");
      out.panel = attack_cpa(panel, adversaries, *oracle, *similarity);
      break;
    case AttackKind::PgdCw:
      need(model, "a set-aggregator model");
      out.panel =
          attack_pgd_cw(panel, adversaries, *model, cfg.pgd_steps, cfg.pgd_step);
      break;
  }
  out.adversaries = std::move(adversaries);
  return out;
}

std::vector<CorruptedPanel> attacked_dataset(
    const std::vector<ProbitPanel>& data, int f, const AttackConfig& cfg,
    const std::function<std::vector<double>(const ProbitPanel&)>& oracle_fn,
    const Mat* similarity, const DeepSetModel* model, RngStream& rng) {
  if (data.empty()) throw std::invalid_argument("attack: empty dataset");
  if (f < 0 || f >= int(data.front().n()))
    throw std::invalid_argument("attack: need 0 <= f < n");
  const bool needs_oracle = cfg.kind == AttackKind::SiaWb ||
                            cfg.kind == AttackKind::Lma ||
                            cfg.kind == AttackKind::Cpa;
  if (needs_oracle && !oracle_fn)
    throw std::invalid_argument("attack: this attack needs an oracle");

  std::vector<int> fixed;
  if (cfg.policy == AdversaryPolicy::FixedAcrossQueries)
    fixed = rng.sample_without_replacement(int(data.front().n()), f);

  std::vector<CorruptedPanel> out;
  out.reserve(data.size());
  for (const ProbitPanel& panel : data) {
    std::vector<int> adversaries =
        cfg.policy == AdversaryPolicy::FreshPerQuery
            ? rng.sample_without_replacement(int(panel.n()), f)
            : fixed;
    std::vector<double> oracle;
    if (needs_oracle) oracle = oracle_fn(panel);
    CorruptedPanel corrupted =
        corrupt_panel(cfg, panel, std::move(adversaries),
                      needs_oracle ? &oracle : nullptr, similarity, model);
    check_corruption_membership(panel, corrupted.panel, corrupted.adversaries,
                                f);
    out.push_back(std::move(corrupted));
  }
  return out;
}

}  // namespace fedinf
