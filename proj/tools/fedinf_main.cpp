#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedinf/aggregators.hpp"
#include "fedinf/attacks.hpp"
#include "fedinf/core.hpp"
#include "fedinf/evaluate.hpp"
#include "fedinf/io.hpp"
#include "fedinf/kernels.hpp"
#include "fedinf/nn.hpp"
#include "fedinf/rng.hpp"
#include "fedinf/selfcheck.hpp"
#include "fedinf/synth.hpp"
#include "fedinf/training.hpp"

namespace {

using namespace fedinf;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string token;
  for (char c : text) {
    if (c == ',') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token += c;
    }
  }
  if (!token.empty()) out.push_back(token);
  return out;
}

struct GenerateArgs {
  SyntheticSpec spec;
  std::uint64_t seed = 1;
  std::string out;
  std::string similarity_out;
};

int run_generate(const GenerateArgs& args) {
  const SynthData data = generate_synthetic(args.spec, args.seed);
  write_dataset(args.out, data.panels, args.seed);
  if (!args.similarity_out.empty())
    write_similarity(args.similarity_out, data.similarity);

  long long ensemble_hits = 0;
  double client_hits = 0.0;
  for (const ProbitPanel& p : data.panels) {
    if (argmax_index(mean_probit(p)) == p.label) ++ensemble_hits;
    for (std::size_t i = 0; i < p.n(); ++i)
      if (argmax_index(std::span<const double>(p.probits.row(i), p.k())) ==
          p.label)
        client_hits += 1.0;
  }
  std::printf(
      "wrote %d panels (n=%d, k=%d, alpha=%g) to %s\n"
      "clean ensemble accuracy %.1f%%, mean per-client accuracy %.1f%%\n",
      args.spec.count, args.spec.n, args.spec.k, args.spec.alpha,
      args.out.c_str(),
      100.0 * double(ensemble_hits) / double(data.panels.size()),
      100.0 * client_hits / (double(data.panels.size()) * args.spec.n));
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string trace;
  TrainConfig cfg;
};

int run_train(const TrainArgs& args) {
  validate_train_config(args.cfg);
  const DatasetReadResult dataset = read_dataset(args.data);
  if (dataset.renormalized_rows > 0)
    std::fprintf(stderr, "warning: renormalized %d rows on ingest\n",
                 dataset.renormalized_rows);
  const TrainResult result = adversarial_train(dataset.panels, args.cfg);

  std::map<std::string, std::string> meta;
  char buf[64];
  meta["seed"] = std::to_string(args.cfg.seed);
  meta["f"] = std::to_string(args.cfg.f);
  meta["steps"] = std::to_string(args.cfg.steps);
  meta["inner_samples"] = std::to_string(args.cfg.inner_samples);
  meta["batch_size"] = std::to_string(args.cfg.batch_size);
  meta["fgsm_steps"] = std::to_string(args.cfg.fgsm_steps);
  std::snprintf(buf, sizeof buf, "%.17g", args.cfg.fgsm_step);
  meta["fgsm_step"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", args.cfg.lr);
  meta["lr"] = buf;
  meta["adversarial"] = args.cfg.adversarial ? "1" : "0";
  meta["data"] = args.data;
  write_checkpoint(args.out, result.model, meta);
  if (!args.trace.empty()) write_loss_trace(args.trace, result.trace);

  const TraceRow& last = result.trace.back();
  std::printf(
      "trained on %zu panels for %d updates; final clean loss %.4f, "
      "adversarial loss %.4f; checkpoint: %s\n",
      dataset.panels.size(), last.step, last.clean_loss, last.adv_loss,
      args.out.c_str());
  return 0;
}

struct AttackArgs {
  std::string data;
  std::string out;
  std::string adversaries_out;
  std::string model_path;
  std::string similarity_path;
  std::string attack = "sia_wb";
  std::string aggregator = "mean";
  std::string policy = "fresh";
  int f = 0;
  AttackConfig cfg;
  std::uint64_t seed = 1;
};

int run_attack(const AttackArgs& args) {
  AttackConfig cfg = args.cfg;
  cfg.kind = parse_attack(args.attack);
  if (args.policy == "fresh")
    cfg.policy = AdversaryPolicy::FreshPerQuery;
  else if (args.policy == "fixed")
    cfg.policy = AdversaryPolicy::FixedAcrossQueries;
  else
    throw std::invalid_argument("--policy: must be 'fresh' or 'fixed'");
  validate_attack_config(cfg);

  const DatasetReadResult dataset = read_dataset(args.data);
  const AggregatorSpec agg = parse_aggregator(args.aggregator);

  std::optional<DeepSetModel> model;
  if (!args.model_path.empty())
    model = read_checkpoint(args.model_path).model;
  std::optional<Mat> similarity;
  if (!args.similarity_path.empty())
    similarity = read_similarity(args.similarity_path);

  const DeepSetModel* model_ptr = model ? &*model : nullptr;
  auto oracle_fn = [&](const ProbitPanel& p) {
    if (agg.kind == RuleKind::RandomizedAblation)
      return apply_static_rule(p.probits, agg.ra_inner, args.f);
    if (agg.kind == RuleKind::DeepSet)
      return deepset_forward(*model_ptr, p.probits).probs;
    if (agg.kind == RuleKind::DeepSetTm)
      return deepset_tm_forward(*model_ptr, p.probits, args.f).probs;
    return apply_static_rule(p.probits, agg.kind, args.f);
  };
  if ((agg.kind == RuleKind::DeepSet || agg.kind == RuleKind::DeepSetTm) &&
      !model_ptr)
    throw std::invalid_argument("--aggregator: this aggregator needs --model");

  RngStream rng = RngStream::derive(args.seed, "cli/attack");
  const std::vector<CorruptedPanel> corrupted = attacked_dataset(
      dataset.panels, args.f, cfg, oracle_fn,
      similarity ? &*similarity : nullptr, model_ptr, rng);

  std::vector<ProbitPanel> out_panels;
  out_panels.reserve(corrupted.size());
  for (const CorruptedPanel& c : corrupted) out_panels.push_back(c.panel);
  write_dataset(args.out, out_panels, args.seed);
  if (!args.adversaries_out.empty()) {
    std::FILE* fp = std::fopen(args.adversaries_out.c_str(), "w");
    if (!fp)
      throw std::runtime_error(args.adversaries_out + ": cannot open");
    std::fprintf(fp, "input_id,adversaries\n");
    for (const CorruptedPanel& c : corrupted) {
      std::fprintf(fp, "%s,",
                   c.panel.input_id.empty() ? "-" : c.panel.input_id.c_str());
      for (std::size_t i = 0; i < c.adversaries.size(); ++i)
        std::fprintf(fp, "%s%d", i ? " " : "", c.adversaries[i]);
      std::fprintf(fp, "\n");
    }
    std::fclose(fp);
  }
  std::printf("wrote %zu corrupted panels (%s, f=%d) to %s\n",
              out_panels.size(), attack_name(cfg.kind).c_str(), args.f,
              args.out.c_str());
  return 0;
}

struct EvaluateArgs {
  std::string data;
  std::string model_path;
  std::string similarity_path;
  std::string aggregators = "mean,cwtm,cwmed,gm";
  std::string attacks;  // empty = all applicable
  std::string out_json;
  std::string out_csv;
  EvalConfig cfg;
};

int run_evaluate(const EvaluateArgs& args) {
  EvalConfig cfg = args.cfg;
  cfg.aggregators.clear();
  for (const std::string& name : split_list(args.aggregators))
    cfg.aggregators.push_back(parse_aggregator(name));
  if (cfg.aggregators.empty())
    throw std::invalid_argument("--aggregators: list is empty");

  std::optional<DeepSetModel> model;
  if (!args.model_path.empty())
    model = read_checkpoint(args.model_path).model;

  if (!args.attacks.empty()) {
    cfg.attacks.clear();
    for (const std::string& name : split_list(args.attacks))
      cfg.attacks.push_back(parse_attack(name));
  } else if (!model) {
    cfg.attacks.clear();
    for (AttackKind k : all_attacks())
      if (k != AttackKind::PgdCw) cfg.attacks.push_back(k);
    std::fprintf(stderr,
                 "note: no --model given, skipping the gradient attack\n");
  }

  const DatasetReadResult dataset = read_dataset(args.data);
  std::optional<Mat> similarity;
  if (!args.similarity_path.empty())
    similarity = read_similarity(args.similarity_path);

  const EvalReport report =
      evaluate(dataset.panels, cfg, similarity ? &*similarity : nullptr,
               model ? &*model : nullptr);

  std::printf("n=%d f=%d panels=%d seed=%llu kernels=%s\n", report.n, report.f,
              report.count, (unsigned long long)report.seed,
              kern::active_name());
  std::printf("%-12s %7s", "aggregator", "clean");
  for (const AttackCell& cell : report.results.front().attacks)
    std::printf(" %10s", cell.attack.c_str());
  std::printf(" %10s %8s\n", "worst", "gap");
  for (const AggregatorResult& res : report.results) {
    std::printf("%-12s %6.2f%%", res.name.c_str(), res.clean_accuracy);
    for (const AttackCell& cell : res.attacks)
      std::printf("     %5.2f%%", cell.accuracy);
    std::printf("     %5.2f%% %8.4f\n", res.worst_accuracy, res.oracle_gap);
  }
  std::printf(
      "reference: mean rule clean accuracy %.2f%% (adversarial risk of each "
      "aggregator is bounded by its gap plus the reference risk)\n",
      report.oracle_clean_accuracy);

  if (!args.out_json.empty()) {
    std::FILE* fp = std::fopen(args.out_json.c_str(), "w");
    if (!fp) throw std::runtime_error(args.out_json + ": cannot open");
    const std::string text = report_to_json(report);
    std::fwrite(text.data(), 1, text.size(), fp);
    std::fclose(fp);
  }
  if (!args.out_csv.empty()) {
    std::FILE* fp = std::fopen(args.out_csv.c_str(), "w");
    if (!fp) throw std::runtime_error(args.out_csv + ": cannot open");
    const std::string text = report_to_csv(report);
    std::fwrite(text.data(), 1, text.size(), fp);
    std::fclose(fp);
  }
  return 0;
}

struct CertifyArgs {
  std::string data;
  std::string out_csv;
  std::string out_json;
  std::string curve_csv;
  int f = 0;
  double kappa = -1.0;  // <0: use the trimmed-mean coefficient
  double tie_quantum = kDefaultTieQuantum;
};

int run_certify(const CertifyArgs& args) {
  const DatasetReadResult dataset = read_dataset(args.data);
  SystemParams params;
  params.n = int(dataset.panels.front().n());
  params.f = args.f;
  params.kappa =
      args.kappa >= 0.0 ? args.kappa : kappa_cwtm(params.n, params.f);
  const CertifySummary summary =
      certify_dataset(dataset.panels, params, args.tie_quantum);

  std::printf(
      "n=%d f=%d kappa=%.6g: %d/%zu certified (%.1f%%), %d degenerate, "
      "certified accuracy %.2f%%\n",
      params.n, params.f, params.kappa, summary.certified,
      summary.rows.size(), 100.0 * summary.certified_fraction,
      summary.degenerate, summary.certified_accuracy);

  if (!args.out_csv.empty()) {
    std::FILE* fp = std::fopen(args.out_csv.c_str(), "w");
    if (!fp) throw std::runtime_error(args.out_csv + ": cannot open");
    const std::string text = certificates_to_csv(summary);
    std::fwrite(text.data(), 1, text.size(), fp);
    std::fclose(fp);
  }
  if (!args.out_json.empty()) {
    std::FILE* fp = std::fopen(args.out_json.c_str(), "w");
    if (!fp) throw std::runtime_error(args.out_json + ": cannot open");
    const std::string text = certificates_to_json(summary);
    std::fwrite(text.data(), 1, text.size(), fp);
    std::fclose(fp);
  }
  if (!args.curve_csv.empty()) {
    std::vector<MarginValue> margins;
    std::vector<char> correct;
    for (const CertRow& row : summary.rows) {
      margins.push_back(row.margin);
      correct.push_back(row.clean_pred == row.label ? 1 : 0);
    }
    const std::vector<MarginCurvePoint> curve =
        margin_error_curve(margins, correct);
    std::FILE* fp = std::fopen(args.curve_csv.c_str(), "w");
    if (!fp) throw std::runtime_error(args.curve_csv + ": cannot open");
    std::fprintf(fp, "threshold,panels,error\n");
    for (const MarginCurvePoint& p : curve)
      std::fprintf(fp, "%.6g,%d,%.10g\n", p.threshold, p.panels, p.error);
    std::fclose(fp);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust federated inference toolkit"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "generate a synthetic dataset");
  generate->add_option("--seed", gen.seed, "master seed");
  generate->add_option("--out", gen.out, "dataset output path")->required();
  generate->add_option("--similarity-out", gen.similarity_out,
                       "class-similarity output path");
  generate->add_option("--clients", gen.spec.n, "clients per panel");
  generate->add_option("--classes", gen.spec.k, "number of classes");
  generate->add_option("--count", gen.spec.count, "number of panels");
  generate->add_option("--alpha", gen.spec.alpha,
                       "client exposure concentration");
  generate->add_option("--signal-base", gen.spec.signal_base);
  generate->add_option("--signal-exposure", gen.spec.signal_exposure);
  generate->add_option("--similarity-leak", gen.spec.similarity_leak);
  generate->add_option("--noise", gen.spec.noise);
  generate->add_option("--common-noise", gen.spec.common_noise);
  generate->add_option("--temperature", gen.spec.temperature);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train the set aggregator");
  train_cmd->add_option("--data", train.data, "training dataset")->required();
  train_cmd->add_option("--out", train.out, "checkpoint output path")->required();
  train_cmd->add_option("--trace", train.trace, "loss trace CSV path");
  train_cmd->add_option("--seed", train.cfg.seed, "master seed");
  train_cmd->add_option("--f", train.cfg.f, "adversary budget");
  train_cmd->add_option("--steps", train.cfg.steps, "outer steps");
  train_cmd->add_option("--inner", train.cfg.inner_samples,
                        "updates per outer step");
  train_cmd->add_option("--batch", train.cfg.batch_size, "batch size");
  train_cmd->add_option("--fgsm-steps", train.cfg.fgsm_steps,
                        "adversary ascent steps per update");
  train_cmd->add_option("--fgsm-step", train.cfg.fgsm_step,
                        "adversary step size");
  train_cmd->add_option("--lr", train.cfg.lr, "learning rate");
  train_cmd->add_option("--pool", train.cfg.pool_dim, "pooled feature width");
  train_cmd->add_option("--hidden", train.cfg.hidden, "hidden layer width");
  train_cmd->add_flag(
      "--clean", [&](std::int64_t) { train.cfg.adversarial = false; },
      "train without adversarial corruption");

  AttackArgs attack;
  CLI::App* attack_cmd =
      app.add_subcommand("attack", "write a corrupted copy of a dataset");
  attack_cmd->add_option("--data", attack.data, "clean dataset")->required();
  attack_cmd->add_option("--out", attack.out, "corrupted dataset path")
      ->required();
  attack_cmd->add_option("--adversaries-out", attack.adversaries_out,
                         "CSV of adversary indices per panel");
  attack_cmd->add_option("--attack", attack.attack,
                         "logit_flip|sia_bb|sia_wb|lma|cpa|pgd_cw");
  attack_cmd->add_option("--aggregator", attack.aggregator,
                         "aggregator the white-box attacks observe");
  attack_cmd->add_option("--f", attack.f, "adversary budget")->required();
  attack_cmd->add_option("--seed", attack.seed, "master seed");
  attack_cmd->add_option("--model", attack.model_path, "checkpoint path");
  attack_cmd->add_option("--similarity", attack.similarity_path,
                         "class-similarity path");
  attack_cmd->add_option("--amplification", attack.cfg.amplification);
  attack_cmd->add_option("--pgd-steps", attack.cfg.pgd_steps);
  attack_cmd->add_option("--pgd-step", attack.cfg.pgd_step);
  attack_cmd->add_option("--policy", attack.policy,
                         "adversary identities: fresh|fixed");

  EvaluateArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "clean and attacked accuracy table");
  eval_cmd->add_option("--data", eval.data, "evaluation dataset")->required();
  eval_cmd->add_option("--f", eval.cfg.f, "adversary budget")->required();
  eval_cmd->add_option("--seed", eval.cfg.seed, "master seed");
  eval_cmd->add_option("--aggregators", eval.aggregators,
                       "comma list: mean,cwtm,cwmed,gm,deepset,deepset_tm,"
                       "ra:<inner>");
  eval_cmd->add_option("--attacks", eval.attacks, "comma list of attacks");
  eval_cmd->add_option("--model", eval.model_path, "checkpoint path");
  eval_cmd->add_option("--similarity", eval.similarity_path,
                       "class-similarity path");
  eval_cmd->add_option("--out", eval.out_json, "report JSON path");
  eval_cmd->add_option("--csv", eval.out_csv, "report CSV path");
  eval_cmd->add_option("--ra-rounds", eval.cfg.ra_rounds, "ablation rounds");
  int ra_trim = -1;
  eval_cmd->add_option("--ra-inner-trim", ra_trim,
                       "trim width for the ablation inner rule");
  eval_cmd->add_option("--amplification", eval.cfg.attack_params.amplification);
  eval_cmd->add_option("--pgd-steps", eval.cfg.attack_params.pgd_steps);
  eval_cmd->add_option("--pgd-step", eval.cfg.attack_params.pgd_step);
  eval_cmd->add_option("--tie-quantum", eval.cfg.tie_quantum);

  CertifyArgs cert;
  CLI::App* cert_cmd =
      app.add_subcommand("certify", "margin certificates for a dataset");
  cert_cmd->add_option("--data", cert.data, "dataset path")->required();
  cert_cmd->add_option("--f", cert.f, "adversary budget")->required();
  cert_cmd->add_option("--kappa", cert.kappa,
                       "robustness coefficient (default: trimmed mean)");
  cert_cmd->add_option("--tie-quantum", cert.tie_quantum);
  cert_cmd->add_option("--out", cert.out_csv, "per-panel CSV path");
  cert_cmd->add_option("--json", cert.out_json, "summary JSON path");
  cert_cmd->add_option("--curve", cert.curve_csv,
                       "margin-vs-error curve CSV path");

  CLI::App* selftest_cmd =
      app.add_subcommand("selftest", "run the built-in cross-check suite");

  // exit codes: 0 success, 1 validation error (bad flags/arguments/config),
  // 2 runtime failure (unreadable files, malformed data, compute errors).
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*generate) return run_generate(gen);
    if (*train_cmd) return run_train(train);
    if (*attack_cmd) return run_attack(attack);
    if (*eval_cmd) {
      if (ra_trim >= 0) eval.cfg.ra_inner_trim = ra_trim;
      return run_evaluate(eval);
    }
    if (*cert_cmd) return run_certify(cert);
    if (*selftest_cmd) return run_selftest(std::cout) == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
