#include "fedinf/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "fedinf/rng.hpp"

namespace fedinf {
namespace {

using ordered_json = nlohmann::ordered_json;

std::uint64_t derive_seed(std::uint64_t seed, const std::string& label,
                          std::uint64_t salt = 0) {
  return RngStream::derive(seed, label, salt).next_u64();
}

const DeepSetModel& need_model(const DeepSetModel* model, const char* who) {
  if (!model)
    throw std::invalid_argument(std::string(who) +
                                " needs a trained set-aggregator model");
  return *model;
}

/// Clean aggregate the white-box attacks get to observe for a given
/// aggregator.  For ablation this is the inner rule on the full panel.
std::vector<double> oracle_vector(const ProbitPanel& panel,
                                  const AggregatorSpec& spec, int f,
                                  const DeepSetModel* model) {
  RuleKind kind = spec.kind;
  if (kind == RuleKind::RandomizedAblation) kind = spec.ra_inner;
  switch (kind) {
    case RuleKind::Mean:
    case RuleKind::Cwtm:
    case RuleKind::Cwmed:
    case RuleKind::Gm:
      return apply_static_rule(panel.probits, kind, f);
    case RuleKind::DeepSet:
      return deepset_forward(need_model(model, "deepset"), panel.probits).probs;
    case RuleKind::DeepSetTm:
      return deepset_tm_forward(need_model(model, "deepset_tm"), panel.probits,
                                f)
          .probs;
    default:
      throw std::invalid_argument("oracle: unsupported aggregator");
  }
}

double percent(long long hits, std::size_t total) {
  return 100.0 * double(hits) / double(total);
}

}  // namespace

int classify_panel(const Mat& rows, const AggregatorSpec& spec, int f,
                   const DeepSetModel* model, int ra_rounds,
                   std::optional<int> ra_inner_trim, std::uint64_t seed,
                   std::uint64_t ra_salt) {
  switch (spec.kind) {
    case RuleKind::Mean:
    case RuleKind::Cwtm:
    case RuleKind::Cwmed:
    case RuleKind::Gm:
      return robust_argmax_classify(rows, spec.kind, f);
    case RuleKind::DeepSet:
      return argmax_index(
          deepset_forward(need_model(model, "deepset"), rows).probs);
    case RuleKind::DeepSetTm:
      return argmax_index(
          deepset_tm_forward(need_model(model, "deepset_tm"), rows, f).probs);
    case RuleKind::RandomizedAblation: {
      if (spec.ra_inner == RuleKind::RandomizedAblation)
        throw std::invalid_argument("ablation cannot nest ablation");
      const int trim = ra_inner_trim.value_or(f);
      auto inner = [&](const Mat& survivors) -> int {
        switch (spec.ra_inner) {
          case RuleKind::DeepSet:
            return argmax_index(
                deepset_forward(need_model(model, "deepset"), survivors).probs);
          case RuleKind::DeepSetTm:
            return argmax_index(
                deepset_tm_forward(need_model(model, "deepset_tm"), survivors,
                                   trim)
                    .probs);
          default:
            return robust_argmax_classify(survivors, spec.ra_inner, trim);
        }
      };
      RngStream rng = RngStream::derive(seed, "ablation-rounds", ra_salt);
      return randomized_ablation_classify(rows, f, ra_rounds, inner, rng);
    }
  }
  throw std::invalid_argument("classify: unknown aggregator");
}

EvalReport evaluate(const std::vector<ProbitPanel>& panels,
                    const EvalConfig& cfg, const Mat* similarity,
                    const DeepSetModel* model) {
  if (panels.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t n = panels.front().n(), k = panels.front().k();
  for (const ProbitPanel& p : panels) {
    if (p.n() != n || p.k() != k)
      throw std::invalid_argument("evaluate: inconsistent panel shapes");
    if (p.label < 0 || p.label >= int(k))
      throw std::invalid_argument("evaluate: panel without a valid label");
  }
  if (cfg.f < 0) throw std::invalid_argument("evaluate: f must be >= 0");
  if (int(n) <= 2 * cfg.f)
    throw std::invalid_argument("evaluate: need n > 2f");
  if (cfg.aggregators.empty())
    throw std::invalid_argument("evaluate: no aggregators requested");
  if (cfg.attacks.empty())
    throw std::invalid_argument("evaluate: no attacks requested");
  {
    AttackConfig check = cfg.attack_params;
    validate_attack_config(check);
  }
  const bool pgd_requested =
      std::find(cfg.attacks.begin(), cfg.attacks.end(), AttackKind::PgdCw) !=
      cfg.attacks.end();
  if (pgd_requested) need_model(model, "the gradient attack");
  for (const AggregatorSpec& spec : cfg.aggregators) {
    const RuleKind effective = spec.kind == RuleKind::RandomizedAblation
                                   ? spec.ra_inner
                                   : spec.kind;
    if (effective == RuleKind::DeepSet || effective == RuleKind::DeepSetTm)
      need_model(model, spec_name(spec).c_str());
  }

  EvalReport report;
  report.n = int(n);
  report.f = cfg.f;
  report.count = int(panels.size());
  report.seed = cfg.seed;
  report.kappa = kappa_cwtm(int(n), cfg.f);

  report.labels.reserve(panels.size());
  report.oracle_preds.reserve(panels.size());
  report.clean_mean_margins.reserve(panels.size());
  long long oracle_hits = 0;
  for (const ProbitPanel& p : panels) {
    const std::vector<double> m = mean_probit(p);
    const int pred = argmax_index(m);
    report.labels.push_back(p.label);
    report.oracle_preds.push_back(pred);
    report.clean_mean_margins.push_back(margin(m, cfg.tie_quantum));
    if (pred == p.label) ++oracle_hits;
  }
  report.oracle_clean_accuracy = percent(oracle_hits, panels.size());

  for (const AggregatorSpec& spec : cfg.aggregators) {
    AggregatorResult res;
    res.spec = spec;
    res.name = spec_name(spec);

    const std::uint64_t clean_seed =
        derive_seed(cfg.seed, "eval/clean/" + res.name);
    long long clean_hits = 0;
    res.clean_preds.reserve(panels.size());
    for (std::size_t i = 0; i < panels.size(); ++i) {
      const int pred =
          classify_panel(panels[i].probits, spec, cfg.f, model, cfg.ra_rounds,
                         cfg.ra_inner_trim, clean_seed, i);
      res.clean_preds.push_back(pred);
      if (pred == panels[i].label) ++clean_hits;
    }
    res.clean_accuracy = percent(clean_hits, panels.size());

    auto oracle_fn = [&](const ProbitPanel& p) {
      return oracle_vector(p, spec, cfg.f, model);
    };
    int worst_idx = -1;
    for (const AttackKind attack : cfg.attacks) {
      AttackConfig acfg = cfg.attack_params;
      acfg.kind = attack;
      RngStream adv_rng = RngStream::derive(
          cfg.seed, "eval/adversaries/" + res.name + "/" + attack_name(attack));
      const std::vector<CorruptedPanel> corrupted = attacked_dataset(
          panels, cfg.f, acfg, oracle_fn, similarity, model, adv_rng);

      AttackCell cell;
      cell.attack = attack_name(attack);
      const std::uint64_t cell_seed = derive_seed(
          cfg.seed, "eval/classify/" + res.name + "/" + cell.attack);
      long long hits = 0;
      cell.preds.reserve(panels.size());
      for (std::size_t i = 0; i < corrupted.size(); ++i) {
        const int pred =
            classify_panel(corrupted[i].panel.probits, spec, cfg.f, model,
                           cfg.ra_rounds, cfg.ra_inner_trim, cell_seed, i);
        cell.preds.push_back(pred);
        if (pred == panels[i].label) ++hits;
      }
      cell.accuracy = percent(hits, panels.size());
      res.attacks.push_back(std::move(cell));
      if (worst_idx < 0 ||
          res.attacks.back().accuracy < res.attacks[std::size_t(worst_idx)].accuracy)
        worst_idx = int(res.attacks.size()) - 1;
    }

    const AttackCell& worst = res.attacks[std::size_t(worst_idx)];
    res.worst_attack = worst.attack;
    res.worst_accuracy = worst.accuracy;
    res.adversarial_risk = 1.0 - worst.accuracy / 100.0;
    long long disagreements = 0;
    for (std::size_t i = 0; i < panels.size(); ++i)
      if (worst.preds[i] != report.oracle_preds[i]) ++disagreements;
    res.oracle_gap = double(disagreements) / double(panels.size());

    report.results.push_back(std::move(res));
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["version"] = report.version;
  j["n"] = report.n;
  j["f"] = report.f;
  j["count"] = report.count;
  j["seed"] = report.seed;
  j["kappa"] = report.kappa;
  j["oracle"] = {{"name", report.oracle_name},
                 {"clean_accuracy", report.oracle_clean_accuracy}};
  ordered_json aggs = ordered_json::array();
  for (const AggregatorResult& res : report.results) {
    ordered_json a;
    a["name"] = res.name;
    a["clean_accuracy"] = res.clean_accuracy;
    ordered_json attacks;
    for (const AttackCell& cell : res.attacks)
      attacks[cell.attack] = cell.accuracy;
    a["attacks"] = attacks;
    a["worst_attack"] = res.worst_attack;
    a["worst_accuracy"] = res.worst_accuracy;
    a["adversarial_risk"] = res.adversarial_risk;
    a["oracle_gap"] = res.oracle_gap;
    aggs.push_back(std::move(a));
  }
  j["aggregators"] = std::move(aggs);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "aggregator,clean";
  if (!report.results.empty())
    for (const AttackCell& cell : report.results.front().attacks)
      out << "," << cell.attack;
  out << ",worst_attack,worst,oracle_gap\n";
  out.precision(10);
  for (const AggregatorResult& res : report.results) {
    out << res.name << "," << res.clean_accuracy;
    for (const AttackCell& cell : res.attacks) out << "," << cell.accuracy;
    out << "," << res.worst_attack << "," << res.worst_accuracy << ","
        << res.oracle_gap << "\n";
  }
  return out.str();
}

CertifySummary certify_dataset(const std::vector<ProbitPanel>& panels,
                               const SystemParams& params,
                               double tie_quantum) {
  if (panels.empty()) throw std::invalid_argument("certify: empty dataset");
  CertifySummary summary;
  summary.params = params;
  long long certified_hits = 0;
  for (const ProbitPanel& p : panels) {
    const Certificate cert = certify(p, params, tie_quantum);
    CertRow row;
    row.input_id = p.input_id;
    row.label = p.label;
    row.clean_pred = argmax_index(mean_probit(p));
    row.margin = cert.margin;
    row.sigma_x = cert.sigma_x;
    row.bound = cert.bound;
    row.certified = cert.certified;
    row.degenerate = cert.degenerate;
    if (cert.certified) {
      ++summary.certified;
      if (row.clean_pred == row.label) ++certified_hits;
    }
    if (cert.degenerate) ++summary.degenerate;
    summary.rows.push_back(std::move(row));
  }
  summary.certified_fraction =
      double(summary.certified) / double(summary.rows.size());
  summary.certified_accuracy =
      summary.certified > 0
          ? 100.0 * double(certified_hits) / double(summary.certified)
          : 0.0;
  return summary;
}

namespace {
std::string margin_text(const MarginValue& m) {
  if (m.is_infinite) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", m.value);
  return buf;
}
}  // namespace

std::string certificates_to_csv(const CertifySummary& summary) {
  std::ostringstream out;
  out << "input_id,label,clean_pred,margin,sigma_x,bound,certified,degenerate\n";
  out.precision(10);
  for (const CertRow& row : summary.rows) {
    out << (row.input_id.empty() ? "-" : row.input_id) << "," << row.label
        << "," << row.clean_pred << "," << margin_text(row.margin) << ","
        << row.sigma_x << "," << row.bound << "," << (row.certified ? 1 : 0)
        << "," << (row.degenerate ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string certificates_to_json(const CertifySummary& summary) {
  ordered_json j;
  j["n"] = summary.params.n;
  j["f"] = summary.params.f;
  j["kappa"] = summary.params.kappa;
  j["count"] = summary.rows.size();
  j["certified"] = summary.certified;
  j["degenerate"] = summary.degenerate;
  j["certified_fraction"] = summary.certified_fraction;
  j["certified_accuracy"] = summary.certified_accuracy;
  ordered_json rows = ordered_json::array();
  for (const CertRow& row : summary.rows) {
    ordered_json r;
    r["input_id"] = row.input_id;
    r["label"] = row.label;
    r["clean_pred"] = row.clean_pred;
    if (row.margin.is_infinite)
      r["margin"] = "inf";
    else
      r["margin"] = row.margin.value;
    r["sigma_x"] = row.sigma_x;
    r["bound"] = row.bound;
    r["certified"] = row.certified;
    r["degenerate"] = row.degenerate;
    rows.push_back(std::move(r));
  }
  j["panels"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::vector<MarginCurvePoint> margin_error_curve(
    const std::vector<MarginValue>& margins, const std::vector<char>& correct,
    int bins) {
  if (margins.size() != correct.size())
    throw std::invalid_argument("margin curve: size mismatch");
  if (margins.empty())
    throw std::invalid_argument("margin curve: empty input");
  if (bins < 1) throw std::invalid_argument("margin curve: bins must be >= 1");
  std::vector<MarginCurvePoint> curve;
  for (int b = 0; b <= bins; ++b) {
    const double tau = double(b) / double(bins);
    MarginCurvePoint point;
    point.threshold = tau;
    long long wrong = 0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      if (!margins[i].is_infinite && margins[i].value < tau) continue;
      ++point.panels;
      if (!correct[i]) ++wrong;
    }
    if (point.panels == 0) continue;
    point.error = double(wrong) / double(point.panels);
    curve.push_back(point);
  }
  return curve;
}

}  // namespace fedinf
