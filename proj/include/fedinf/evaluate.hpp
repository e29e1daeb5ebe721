#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedinf/aggregators.hpp"
#include "fedinf/attacks.hpp"
#include "fedinf/core.hpp"
#include "fedinf/nn.hpp"

namespace fedinf {

struct EvalConfig {
  int f = 0;  // adversary budget (also the trim width of trimming rules)
  std::vector<AggregatorSpec> aggregators;
  std::vector<AttackKind> attacks = all_attacks();
  AttackConfig attack_params;  // kind is overridden per attack run
  int ra_rounds = 100;
  std::optional<int> ra_inner_trim;  // ablation inner trim; defaults to f
  double tie_quantum = kDefaultTieQuantum;
  std::uint64_t seed = 0;
};

struct AttackCell {
  std::string attack;
  double accuracy = 0.0;  // percent
  std::vector<int> preds; // per-panel predictions under this attack
};

struct AggregatorResult {
  AggregatorSpec spec;
  std::string name;
  double clean_accuracy = 0.0;  // percent
  std::vector<int> clean_preds;
  std::vector<AttackCell> attacks;
  std::string worst_attack;      // attack with the lowest accuracy
  double worst_accuracy = 0.0;   // percent
  double adversarial_risk = 0.0; // 1 - worst_accuracy/100
  /// Fraction of panels where the prediction under the worst attack differs
  /// from the reference (mean-rule) clean prediction; by construction
  /// adversarial_risk <= oracle risk + this gap.
  double oracle_gap = 0.0;
};

struct EvalReport {
  int version = 1;
  int n = 0;
  int f = 0;
  int count = 0;
  std::uint64_t seed = 0;
  double kappa = 0.0;  // trimmed-mean coefficient for (n, f), for reference
  std::string oracle_name = "mean";
  double oracle_clean_accuracy = 0.0;  // percent
  std::vector<int> oracle_preds;
  std::vector<int> labels;
  std::vector<MarginValue> clean_mean_margins;  // per panel
  std::vector<AggregatorResult> results;
};

/// Runs every requested aggregator against the clean panels and every
/// requested attack.  White-box attacks see the clean aggregate of the
/// aggregator under evaluation; the gradient attack needs `model` (static
/// rules are attacked by transfer through it).
EvalReport evaluate(const std::vector<ProbitPanel>& panels,
                    const EvalConfig& cfg, const Mat* similarity,
                    const DeepSetModel* model);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

struct CertRow {
  std::string input_id;
  int label = -1;
  int clean_pred = -1;  // mean-rule prediction
  MarginValue margin;
  double sigma_x = 0.0;
  double bound = 0.0;
  bool certified = false;
  bool degenerate = false;
};

struct CertifySummary {
  SystemParams params;
  std::vector<CertRow> rows;
  int certified = 0;
  int degenerate = 0;
  double certified_fraction = 0.0;
  /// Accuracy of the clean mean prediction among certified panels (percent;
  /// 0 when nothing is certified).
  double certified_accuracy = 0.0;
};

CertifySummary certify_dataset(const std::vector<ProbitPanel>& panels,
                               const SystemParams& params,
                               double tie_quantum = kDefaultTieQuantum);

std::string certificates_to_csv(const CertifySummary& summary);
std::string certificates_to_json(const CertifySummary& summary);

struct MarginCurvePoint {
  double threshold = 0.0;
  int panels = 0;
  double error = 0.0;  // fraction of those panels classified wrong
};

/// Error rate restricted to panels whose margin clears each threshold
/// (infinite margins clear every threshold); empty buckets are dropped.
std::vector<MarginCurvePoint> margin_error_curve(
    const std::vector<MarginValue>& margins, const std::vector<char>& correct,
    int bins = 20);

/// Convenience used across the harness: classify one panel with any
/// aggregator (model may be null for static rules; ra_salt seeds the
/// ablation rounds).
int classify_panel(const Mat& rows, const AggregatorSpec& spec, int f,
                   const DeepSetModel* model, int ra_rounds,
                   std::optional<int> ra_inner_trim, std::uint64_t seed,
                   std::uint64_t ra_salt);

}  // namespace fedinf
