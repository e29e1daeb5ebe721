#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fedinf/core.hpp"
#include "fedinf/nn.hpp"
#include "fedinf/rng.hpp"

namespace fedinf {

enum class AttackKind {
  LogitFlip,  // amplified flip of the client's own probit
  SiaBb,      // one-hot on the client's own best wrong class
  SiaWb,      // one-hot on the aggregate's best wrong class
  Lma,        // one-hot on the aggregate's least likely class
  Cpa,        // one-hot on the class most dissimilar to the prediction
  PgdCw,      // iterative sign ascent on the margin loss, in logit space
};

std::string attack_name(AttackKind kind);
AttackKind parse_attack(const std::string& text);
const std::vector<AttackKind>& all_attacks();

/// Whether fresh adversary identities are drawn per panel or once per run.
enum class AdversaryPolicy { FreshPerQuery, FixedAcrossQueries };

struct AttackConfig {
  AttackKind kind = AttackKind::SiaWb;
  double amplification = 2.0;  // LogitFlip
  int pgd_steps = 50;          // PgdCw
  double pgd_step = 0.05;      // PgdCw
  AdversaryPolicy policy = AdversaryPolicy::FreshPerQuery;
};

/// User-facing validation (CLI/config): amplification > 0, pgd_steps >= 1,
/// pgd_step > 0.  The attack ops themselves also accept pgd_steps == 0,
/// which degenerates to the identity in probit space.
void validate_attack_config(const AttackConfig& cfg);

struct CorruptedPanel {
  ProbitPanel panel;
  std::vector<int> adversaries;
};

/// Adversary i replaces its probit h with softmax(-amplification * h).
ProbitPanel attack_logit_flipping(const ProbitPanel& panel,
                                  const std::vector<int>& adversaries,
                                  double amplification);

/// Adversary i sends a one-hot at its own most likely wrong class.
ProbitPanel attack_sia_blackbox(const ProbitPanel& panel,
                                const std::vector<int>& adversaries);

/// All adversaries send a one-hot at the wrong class the clean aggregate
/// ranks highest.
ProbitPanel attack_sia_whitebox(const ProbitPanel& panel,
                                const std::vector<int>& adversaries,
                                const std::vector<double>& oracle);

/// All adversaries send a one-hot at the class the clean aggregate ranks
/// lowest.
ProbitPanel attack_lma(const ProbitPanel& panel,
                       const std::vector<int>& adversaries,
                       const std::vector<double>& oracle);

/// All adversaries send a one-hot at the class least similar to the clean
/// aggregate's prediction, per the class-similarity matrix.
ProbitPanel attack_cpa(const ProbitPanel& panel,
                       const std::vector<int>& adversaries,
                       const std::vector<double>& oracle,
                       const Mat& similarity);

/// `steps` sign-ascent steps on the margin loss of `model`, taken on the
/// adversaries' logits; rows re-enter probit space through softmax after
/// every step.
ProbitPanel attack_pgd_cw(const ProbitPanel& panel,
                          const std::vector<int>& adversaries,
                          const DeepSetModel& model, int steps,
                          double step_size);

/// Structural containment check: at most f corrupted rows, exactly at the
/// declared adversary indices (honest rows bitwise untouched), every row
/// still a valid probit vector.  Throws std::runtime_error on violation.
void check_corruption_membership(const ProbitPanel& original,
                                 const ProbitPanel& corrupted,
                                 const std::vector<int>& adversaries, int f);

/// Must be K x K, symmetric and unit-diagonal within 1e-9.
void validate_similarity(const Mat& similarity);

/// Dispatch one attack; `oracle` is the clean (pre-attack) aggregation
/// output of the rule under evaluation, required by SiaWb/Lma/Cpa.
CorruptedPanel corrupt_panel(const AttackConfig& cfg, const ProbitPanel& panel,
                             std::vector<int> adversaries,
                             const std::vector<double>* oracle,
                             const Mat* similarity, const DeepSetModel* model);

/// Applies the attack panel-by-panel: draws the adversary set per the
/// policy, queries oracle_fn on the clean panel when the attack needs it,
/// corrupts, and re-checks containment.
std::vector<CorruptedPanel> attacked_dataset(
    const std::vector<ProbitPanel>& data, int f, const AttackConfig& cfg,
    const std::function<std::vector<double>(const ProbitPanel&)>& oracle_fn,
    const Mat* similarity, const DeepSetModel* model, RngStream& rng);

}  // namespace fedinf
