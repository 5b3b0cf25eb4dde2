// Command-line front end: infer, fw-train, sample, oracle, mixed-sweep, report.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "macrok/macrok.hpp"

namespace {

using namespace macrok;

struct CommonFlags {
  std::size_t k = 5;
  std::vector<std::string> metrics;
  std::vector<std::string> strategies;
  std::vector<std::string> classifiers;
  std::string labels;
  std::string marginals;
  std::string prior_labels;
  std::string test_labels;
  std::string test_marginals;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t repeats = 10;
  double eps = 0.001;
  double smoothing = 1e-9;
  std::string init = "topk";
  std::string step = "linesearch";
  std::string split = "100";
  std::string sampling = "instance";
  std::size_t kprime = 0;
  std::size_t max_iters = 100;
  std::size_t threads = 1;
  bool audit = false;
};

ExperimentConfig to_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  cfg.k = f.k;
  for (const auto& m : f.metrics) cfg.metrics.push_back(parse_metric(m));
  for (const auto& s : f.strategies) cfg.strategies.push_back(parse_strategy(s));
  for (const auto& c : f.classifiers) cfg.classifiers.emplace_back(c);
  cfg.repeats = f.repeats;
  cfg.seed = f.seed;
  cfg.split = parse_split(f.split);
  cfg.stop_eps = f.eps;
  cfg.max_iters = f.max_iters;
  if (f.init == "topk") {
    cfg.init = FWInit::top_k;
  } else if (f.init == "random") {
    cfg.init = FWInit::random;
  } else {
    throw ParseError("unknown init '" + f.init + "'");
  }
  if (f.step == "linesearch") {
    cfg.step = StepRule::line_search;
  } else if (f.step == "fixed") {
    cfg.step = StepRule::fixed_schedule;
  } else {
    throw ParseError("unknown step rule '" + f.step + "'");
  }
  if (f.sampling == "instance") {
    cfg.sampling = SamplingMode::per_instance;
  } else if (f.sampling == "madow") {
    cfg.sampling = SamplingMode::madow;
  } else {
    throw ParseError("unknown sampling mode '" + f.sampling + "'");
  }
  cfg.smoothing.eps = f.smoothing;
  cfg.labels = f.labels;
  cfg.marginals = f.marginals;
  if (!f.prior_labels.empty()) cfg.prior_labels = f.prior_labels;
  if (!f.test_labels.empty()) cfg.test_labels = f.test_labels;
  if (!f.test_marginals.empty()) cfg.test_marginals = f.test_marginals;
  if (f.kprime > 0) cfg.kprime = f.kprime;
  if (!f.out.empty()) cfg.out = f.out;
  cfg.audit = f.audit;
  cfg.threads = f.threads;
  return cfg;
}

void print_rows(const std::vector<ReportRow>& rows) { write_report_tsv(std::cout, rows); }

int run_oracle(const CommonFlags& f, const std::string& dist, bool check, bool randomized, bool smoothing_set) {
  if (check) {
    const CouplingReport r = coupling_witness();
    std::printf("A: %s value=%.6f (reported 0.453962)\n", format_assignment(r.optimum_a.assignment).c_str(),
                r.optimum_a.value);
    std::printf("B: %s value=%.6f (reported 0.471423)\n", format_assignment(r.optimum_b.assignment).c_str(),
                r.optimum_b.value);
    std::printf("values_match=%d assignments_match=%d first_point_flips=%d deterministic=%d\n", r.values_match,
                r.assignments_match, r.first_point_flips, r.deterministic);
    if (!r.ok()) {
      std::fprintf(stderr, "coupling check failed\n");
      return static_cast<int>(ExitCode::contract_violation);
    }
    std::printf("coupling check passed\n");
    return 0;
  }
  OracleInput in;
  in.metric = f.metrics.empty() ? MetricId::of(Measure::jaccard) : parse_metric(f.metrics.front());
  in.k = f.k;
  in.dist = dist;
  if (smoothing_set) in.smoothing = SmoothingConfig{f.smoothing};
  in.randomized = randomized;
  const OracleResult r = cmd_oracle(in);
  std::printf("dist=%s metric=%s k=%zu\n", r.dist_name.c_str(), metric_name(in.metric).c_str(), in.k);
  std::printf("best deterministic: %s value=%.9f\n", format_assignment(r.deterministic.assignment).c_str(),
              r.deterministic.value);
  if (r.randomized) std::printf("best randomized (vertex Frank-Wolfe): value=%.9f support=%zu\n", r.randomized->value,
                                r.randomized->vertices.size());
  if (r.closed_form_value) std::printf("closed-form classifier: value=%.9f\n", *r.closed_form_value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted top-k inference for macro-averaged multi-label metrics"};
  app.require_subcommand(1);
  CommonFlags f;

  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--labels", f.labels, "Label file (n m header, comma-separated indices)");
    sub->add_option("--marginals", f.marginals, "Marginal file (n m header, j:p pairs)");
    sub->add_option("--kprime", f.kprime, "Keep only the k' largest marginals per row");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--seed", f.seed, "Base random seed");
    sub->add_option("--k", f.k, "Prediction budget")->required();
    sub->add_option("--smoothing", f.smoothing, "Constant added to metric denominators");
    sub->add_option("--threads", f.threads, "Worker threads for repeats and sweeps");
  };
  auto add_fw = [&](CLI::App* sub) {
    sub->add_option("--eps", f.eps, "Frank-Wolfe stopping step size");
    sub->add_option("--max-iters", f.max_iters, "Frank-Wolfe iteration limit");
    sub->add_option("--init", f.init, "topk | random")->check(CLI::IsMember({"topk", "random"}));
    sub->add_option("--step", f.step, "linesearch | fixed")->check(CLI::IsMember({"linesearch", "fixed"}));
    sub->add_option("--split", f.split, "50 | 75 | 100")->check(CLI::IsMember({"50", "75", "100"}));
  };

  auto* infer = app.add_subcommand("infer", "Apply strategies or saved mixtures and report metrics");
  add_data(infer);
  infer->add_option("--strategy", f.strategies, "topk | macro-recall | bacc | pow:<beta> | log");
  infer->add_option("--classifier", f.classifiers, "Saved mixture JSON");
  infer->add_option("--metric", f.metrics, "Extra metrics to report");
  infer->add_option("--repeats", f.repeats, "Repeats for randomized classifiers");
  infer->add_option("--prior-labels", f.prior_labels, "Labels used to estimate priors (default: --labels)");
  infer->add_option("--sampling", f.sampling, "instance | madow")->check(CLI::IsMember({"instance", "madow"}));
  infer->add_flag("--audit", f.audit, "Re-score emitted prediction files independently");

  auto* fw = app.add_subcommand("fw-train", "Train a randomized classifier with Frank-Wolfe");
  add_data(fw);
  add_fw(fw);
  fw->add_option("--metric", f.metrics, "Metric to optimize")->required();

  std::string pi_path;
  std::string classifier_path;
  std::string sample_out;
  auto* sample = app.add_subcommand("sample", "Realize fractional predictions as exactly-k label sets");
  sample->add_option("--pi", pi_path, "Inclusion-probability file (rows sum to k)");
  sample->add_option("--classifier", classifier_path, "Saved mixture JSON (with --marginals)");
  sample->add_option("--marginals", f.marginals, "Marginal file");
  sample->add_option("--k", f.k, "Budget (required with --pi)");
  sample->add_option("--seed", f.seed, "Random seed");
  sample->add_option("--sampling", f.sampling, "instance | madow")->check(CLI::IsMember({"instance", "madow"}));
  sample->add_option("--out", sample_out, "Prediction file")->required();

  std::string dist = "builtin:appendixE-A";
  bool check = false;
  bool randomized = false;
  auto* oracle = app.add_subcommand("oracle", "Exhaustive optimum on a small discrete distribution");
  oracle->add_option("--metric", f.metrics, "Metric (default jaccard)");
  std::size_t oracle_k = 2;
  oracle->add_option("--k", oracle_k, "Budget");
  oracle->add_option("--dist", dist, "Distribution file or builtin:appendixE-A | builtin:appendixE-B");
  auto* oracle_smoothing = oracle->add_option("--smoothing", f.smoothing, "Constant added to metric denominators");
  oracle->add_flag("--randomized", randomized, "Also run Frank-Wolfe over the vertex hull");
  oracle->add_flag("--check-appendix-e", check, "Verify the label-coupling counterexample");

  std::string lambdas = "0,0.25,0.5,0.75,1";
  std::string inner = "f1";
  auto* sweep = app.add_subcommand("mixed-sweep", "Trade instance precision against a macro metric");
  add_data(sweep);
  add_fw(sweep);
  sweep->add_option("--lambdas", lambdas, "Comma-separated lambda grid");
  sweep->add_option("--inner", inner, "Macro metric mixed with instance precision");
  sweep->add_option("--test-labels", f.test_labels, "Evaluation labels (default: --labels)");
  sweep->add_option("--test-marginals", f.test_marginals, "Evaluation marginals (default: --marginals)");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge report JSON files into one sorted table");
  report->add_option("--in", report_inputs, "Report JSON files")->required();
  report->add_option("--out", report_out, "Merged TSV path (JSON mirror written alongside)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::parse_error);
  }

  try {
    if (infer->parsed()) {
      const auto res = cmd_infer(to_config(f));
      print_rows(res.rows);
    } else if (fw->parsed()) {
      const auto res = cmd_fw_train(to_config(f));
      write_trace_tsv(std::cout, res.trace);
      std::printf("components=%zu\n", res.classifier.size());
    } else if (sample->parsed()) {
      SampleInput in;
      if (!pi_path.empty()) in.inclusion = pi_path;
      if (!classifier_path.empty()) in.classifier = classifier_path;
      if (!f.marginals.empty()) in.marginals = f.marginals;
      in.k = f.k;
      in.seed = f.seed;
      in.sampling = f.sampling == "madow" ? SamplingMode::madow : SamplingMode::per_instance;
      in.out = sample_out;
      const auto pred = cmd_sample(in);
      std::printf("rows=%zu k=%zu\n", pred.num_rows(), pred.k());
    } else if (oracle->parsed()) {
      f.k = oracle_k;
      return run_oracle(f, dist, check, randomized, oracle_smoothing->count() > 0);
    } else if (sweep->parsed()) {
      std::vector<double> grid;
      std::string tok;
      std::istringstream ls(lambdas);
      while (std::getline(ls, tok, ',')) grid.push_back(detail::parse_real(tok, "lambda"));
      const MetricId inner_id = parse_metric(inner);
      if (!inner_id.is_binary()) throw ParseError("--inner must be a binary measure");
      const auto res = cmd_mixed_sweep(to_config(f), grid, inner_id);
      std::printf("lambda\tinstp@%zu\tmacro-%s@%zu\titerations\n", f.k, res.inner_name.c_str(), f.k);
      for (const auto& r : res.rows)
        std::printf("%.17g\t%.17g\t%.17g\t%zu\n", r.lambda, r.instance_precision, r.macro_inner, r.iterations);
    } else if (report->parsed()) {
      std::optional<std::filesystem::path> out;
      if (!report_out.empty()) out = report_out;
      print_rows(cmd_report({report_inputs.begin(), report_inputs.end()}, out));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::contract_violation);
  }
  return 0;
}
