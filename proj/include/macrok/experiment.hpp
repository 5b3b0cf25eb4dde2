#pragma once

// Reproducible experiment drivers behind the command-line subcommands.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "macrok/core.hpp"
#include "macrok/error.hpp"
#include "macrok/fw.hpp"
#include "macrok/io.hpp"
#include "macrok/linear.hpp"
#include "macrok/metrics.hpp"
#include "macrok/oracle.hpp"

namespace macrok {

// How a randomized classifier is realized on a test set.
enum class SamplingMode { per_instance, madow };

struct ExperimentConfig {
  std::size_t k = 5;
  std::vector<MetricId> metrics;
  std::vector<StrategyId> strategies;
  std::vector<std::filesystem::path> classifiers;  // saved mixtures to evaluate
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  SplitRatio split = SplitRatio::full;
  double stop_eps = 0.001;
  std::size_t max_iters = 100;
  FWInit init = FWInit::top_k;
  StepRule step = StepRule::line_search;
  SmoothingConfig smoothing;
  SamplingMode sampling = SamplingMode::per_instance;
  std::filesystem::path labels;
  std::filesystem::path marginals;
  std::optional<std::filesystem::path> prior_labels;  // defaults to labels
  std::optional<std::filesystem::path> test_labels;
  std::optional<std::filesystem::path> test_marginals;
  std::optional<std::size_t> kprime;
  std::optional<std::filesystem::path> out;
  bool audit = false;
  std::size_t threads = 1;

  void validate() const {
    if (repeats < 1) throw InvalidInput("repeats must be at least 1");
    if (k < 1) throw InvalidBudget("k must be at least 1");
    for (const auto& m : metrics) m.validate();
  }
};

namespace detail {

// Runs fn(0..count-1) on up to `threads` workers; results are written by index.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::jthread> pool;
  const std::size_t workers = std::min(threads, count);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scoring.

inline std::string at_k(const std::string& name, std::size_t k) { return name + "@" + std::to_string(k); }

inline std::string report_metric_name(const MetricId& id, std::size_t k) {
  if (id.is_binary()) return at_k("macro-" + metric_name(id), k);
  return at_k(metric_name(id), k);
}

// Mean over instances with at least one relevant label of |pred ∩ y| / |y|.
inline double instance_recall(const PredictionMatrix& pred, const LabelMatrix& labels) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < labels.num_rows(); ++i) {
    const auto y = labels.row(i);
    if (y.empty()) continue;
    const auto h = pred.row(i);
    std::size_t hits = 0;
    for (auto j : h) hits += std::binary_search(y.begin(), y.end(), j) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(y.size());
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

// Metrics always reported by infer, followed by any requested extras.
inline std::vector<MetricId> default_report_metrics(const std::vector<MetricId>& extra) {
  std::vector<MetricId> out{MetricId::of(Measure::instance_precision), MetricId::of(Measure::precision),
                            MetricId::of(Measure::recall), MetricId::f1()};
  for (const auto& m : extra)
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  return out;
}

struct ScoredMetric {
  std::string name;
  double value = 0.0;
};

inline std::vector<ScoredMetric> score_predictions(const PredictionMatrix& pred, const LabelMatrix& labels,
                                                   const std::vector<MetricId>& metrics,
                                                   const SmoothingConfig& s) {
  const ConfusionTensor c = empirical_confusion(pred, labels);
  std::vector<ScoredMetric> out;
  out.push_back({at_k("instr", pred.k()), instance_recall(pred, labels)});
  for (const auto& m : metrics) out.push_back({report_metric_name(m, pred.k()), macro_value(m, c, s)});
  return out;
}

// Recomputes the metrics of a prediction file through dense 0/1 counting,
// independent of the sparse confusion path.
inline std::vector<ScoredMetric> audit_prediction_file(const std::filesystem::path& path, const LabelMatrix& labels,
                                                       std::size_t k, const std::vector<MetricId>& metrics,
                                                       const SmoothingConfig& s) {
  const LabelMatrix pred = load_labels(path);
  const std::size_t n = labels.num_rows();
  const std::size_t m = labels.num_labels();
  if (pred.num_rows() != n || pred.num_labels() != m) throw ContractError("audit: prediction file shape mismatch");
  std::vector<std::vector<double>> cnt(m, std::vector<double>(4, 0.0));
  std::vector<std::uint8_t> yh(m), yy(m);
  double recall_sum = 0.0;
  std::size_t recall_rows = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(yh.begin(), yh.end(), 0);
    std::fill(yy.begin(), yy.end(), 0);
    if (pred.row(i).size() != k) throw ContractError("audit: row " + std::to_string(i) + " violates the budget");
    for (auto j : pred.row(i)) yh[j] = 1;
    for (auto j : labels.row(i)) yy[j] = 1;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < m; ++j) {
      cnt[j][2 * yy[j] + yh[j]] += 1.0;
      hits += yy[j] & yh[j];
    }
    if (!labels.row(i).empty()) {
      recall_sum += static_cast<double>(hits) / static_cast<double>(labels.row(i).size());
      ++recall_rows;
    }
  }
  std::vector<BinaryConfusion> per(m);
  for (std::size_t j = 0; j < m; ++j)
    per[j] = {cnt[j][0] / static_cast<double>(n), cnt[j][1] / static_cast<double>(n),
              cnt[j][2] / static_cast<double>(n), cnt[j][3] / static_cast<double>(n)};
  const ConfusionTensor c(std::move(per), k);
  std::vector<ScoredMetric> out;
  out.push_back({at_k("instr", k), recall_rows == 0 ? 0.0 : recall_sum / static_cast<double>(recall_rows)});
  for (const auto& id : metrics) out.push_back({report_metric_name(id, k), macro_value(id, c, s)});
  return out;
}

inline void sort_report(std::vector<ReportRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return a.strategy != b.strategy ? a.strategy < b.strategy : a.metric < b.metric;
  });
}

// ---------------------------------------------------------------------------
// infer

struct InferResult {
  std::vector<ReportRow> rows;
  std::vector<std::filesystem::path> prediction_files;
};

inline InferResult cmd_infer(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.strategies.empty() && cfg.classifiers.empty()) throw InvalidInput("infer needs a strategy or a classifier");
  const LabelMatrix labels = load_labels(cfg.labels);
  const MarginalMatrix marginals = load_marginals(cfg.marginals, cfg.kprime);
  if (labels.num_rows() != marginals.num_rows() || labels.num_labels() != marginals.num_labels())
    throw ShapeError("labels and marginals disagree in shape");
  if (cfg.k > labels.num_labels()) throw InvalidBudget("k exceeds the number of labels");
  const auto metrics = default_report_metrics(cfg.metrics);

  struct Job {
    std::string name;
    RandomizedClassifier clf;
    bool randomized;
  };
  std::vector<Job> jobs;
  if (!cfg.strategies.empty()) {
    const PriorVector priors = estimate_priors(cfg.prior_labels ? load_labels(*cfg.prior_labels) : labels);
    if (priors.size() != labels.num_labels()) throw ShapeError("prior labels disagree in label count");
    for (const auto& s : cfg.strategies)
      jobs.push_back({strategy_name(s), RandomizedClassifier::single(closed_form_strategy(s, priors, cfg.k)), false});
  }
  for (const auto& path : cfg.classifiers) {
    RandomizedClassifier clf = load_classifier(path);
    if (clf.k() != cfg.k || clf.num_labels() != labels.num_labels())
      throw ShapeError("classifier " + path.string() + " does not match k or m");
    const bool randomized = clf.size() > 1;
    jobs.push_back({"fw:" + path.stem().string(), std::move(clf), randomized});
  }

  InferResult result;
  for (const auto& job : jobs) {
    const std::size_t runs = job.randomized ? cfg.repeats : 1;
    std::vector<std::vector<ScoredMetric>> scores(runs);
    std::vector<PredictionMatrix> preds(runs);
    detail::parallel_for(runs, cfg.threads, [&](std::size_t r) {
      if (job.randomized) {
        Rng rng(cfg.seed + r);
        preds[r] = cfg.sampling == SamplingMode::madow ? sample_predictions_madow(job.clf, marginals, rng)
                                                       : sample_predictions(job.clf, marginals, rng);
      } else {
        preds[r] = predict_all(job.clf[0].classifier, marginals);
      }
      scores[r] = score_predictions(preds[r], labels, metrics, cfg.smoothing);
    });

    if (cfg.audit) {
      if (!cfg.out) throw InvalidInput("--audit needs --out to hold prediction files");
      for (std::size_t r = 0; r < runs; ++r) {
        std::string stem = job.name;
        std::replace(stem.begin(), stem.end(), ':', '_');
        const auto file = *cfg.out / "predictions" / (stem + "-r" + std::to_string(r) + ".txt");
        save_predictions(preds[r], file);
        result.prediction_files.push_back(file);
        const auto again = audit_prediction_file(file, labels, cfg.k, metrics, cfg.smoothing);
        for (std::size_t q = 0; q < again.size(); ++q)
          if (again[q].name != scores[r][q].name || std::abs(again[q].value - scores[r][q].value) > 1e-12)
            throw ContractError("audit mismatch for " + job.name + " " + scores[r][q].name);
      }
    }

    for (std::size_t q = 0; q < scores.front().size(); ++q) {
      // deterministic strategies are replicated, giving zero spread
      std::vector<double> values(cfg.repeats);
      for (std::size_t r = 0; r < cfg.repeats; ++r) values[r] = scores[job.randomized ? r : 0][q].value;
      const Summary s = summarize(values);
      result.rows.push_back({job.name, scores.front()[q].name, s.mean, s.std, cfg.repeats});
    }
  }
  sort_report(result.rows);
  if (cfg.out) save_report(result.rows, *cfg.out / "report.tsv");
  return result;
}

// ---------------------------------------------------------------------------
// fw-train

inline FWResult cmd_fw_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.metrics.size() != 1) throw InvalidInput("fw-train optimizes exactly one metric");
  const LabelMatrix labels = load_labels(cfg.labels);
  const MarginalMatrix marginals = load_marginals(cfg.marginals, cfg.kprime);
  const DatasetSplit split = split_dataset(labels, marginals, cfg.split, cfg.seed);
  FWConfig fw;
  fw.max_iters = cfg.max_iters;
  fw.stop_eps = cfg.stop_eps;
  fw.init = cfg.init;
  fw.step_rule = cfg.step;
  fw.seed = cfg.seed;
  FWResult res = run_frank_wolfe(cfg.metrics.front(), split.second.marginals, split.second.labels, cfg.k, fw,
                                 cfg.smoothing);
  if (cfg.out) {
    save_classifier(res.classifier, *cfg.out / "classifier.json");
    save_trace(res.trace, *cfg.out / "trace.tsv");
  }
  return res;
}

// ---------------------------------------------------------------------------
// sample

struct SampleInput {
  std::optional<std::filesystem::path> classifier;  // with marginals
  std::optional<std::filesystem::path> marginals;
  std::optional<std::filesystem::path> inclusion;   // rows already summing to k
  std::size_t k = 0;                                 // required with inclusion
  std::uint64_t seed = 0;
  SamplingMode sampling = SamplingMode::per_instance;
  std::optional<std::filesystem::path> out;
};

inline PredictionMatrix cmd_sample(const SampleInput& in) {
  Rng rng(in.seed);
  PredictionMatrix pred;
  if (in.inclusion) {
    const MarginalMatrix pi = load_marginals(*in.inclusion);
    if (in.k < 1 || in.k > pi.num_labels()) throw InvalidBudget("k must satisfy 1 <= k <= m");
    pred = PredictionMatrix(pi.num_labels(), in.k);
    for (std::size_t i = 0; i < pi.num_rows(); ++i) {
      const auto row = pi.dense_row(i);
      try {
        pred.push_row(madow_sample_indices(row, in.k, rng), i);
      } catch (const InvalidMarginals& e) {
        throw InvalidMarginals("row " + std::to_string(i) + ": " + e.what());
      }
    }
  } else {
    if (!in.classifier || !in.marginals) throw InvalidInput("sample needs --classifier with --marginals, or --pi");
    const RandomizedClassifier clf = load_classifier(*in.classifier);
    const MarginalMatrix mm = load_marginals(*in.marginals);
    if (mm.num_labels() != clf.num_labels()) throw ShapeError("classifier and marginals disagree in label count");
    pred = in.sampling == SamplingMode::madow ? sample_predictions_madow(clf, mm, rng)
                                              : sample_predictions(clf, mm, rng);
  }
  if (in.out) save_predictions(pred, *in.out);
  return pred;
}

// ---------------------------------------------------------------------------
// oracle

struct OracleInput {
  MetricId metric = MetricId::of(Measure::jaccard);
  std::size_t k = 2;
  std::string dist = "builtin:appendixE-A";  // file path or builtin:<name>
  std::optional<SmoothingConfig> smoothing;  // builtin distributions carry their own default
  bool randomized = false;
  std::size_t randomized_iters = 10000;
};

struct OracleResult {
  std::string dist_name;
  DeterministicOptimum deterministic;
  std::optional<RandomizedOptimum> randomized;
  std::optional<double> closed_form_value;  // linear metrics only
};

inline std::optional<StrategyId> closed_form_for(const MetricId& id) {
  switch (id.measure) {
    case Measure::accuracy:
    case Measure::instance_precision: return StrategyId{Strategy::top_k};
    case Measure::recall: return StrategyId{Strategy::macro_recall};
    case Measure::balanced_accuracy: return StrategyId{Strategy::balanced_accuracy};
    default: return std::nullopt;
  }
}

// Value of the closed-form classifier on a discrete distribution, using its
// exact priors.
inline double closed_form_value(const MetricId& id, const DiscreteDistribution& dist, std::size_t k,
                                const SmoothingConfig& s) {
  const auto strategy = closed_form_for(id);
  if (!strategy) throw UnsupportedMetric(metric_name(id) + " has no closed-form classifier");
  const AffineTopK h = closed_form_strategy(*strategy, PriorVector(dist.priors()), k);
  return macro_value(id, ExactConfusionProvider(dist).confusion(h), s);
}

inline OracleResult cmd_oracle(const OracleInput& in) {
  OracleResult res;
  DiscreteDistribution dist;
  SmoothingConfig smoothing = in.smoothing.value_or(SmoothingConfig{});
  if (in.dist.starts_with("builtin:")) {
    const std::string name = in.dist.substr(8);
    ReferenceDistribution ref;
    if (name == "appendixE-A") {
      ref = coupling_distribution_a();
    } else if (name == "appendixE-B") {
      ref = coupling_distribution_b();
    } else {
      throw ParseError("unknown builtin distribution '" + name + "'");
    }
    dist = ref.dist;
    smoothing = in.smoothing.value_or(ref.smoothing);
    res.dist_name = ref.name;
  } else {
    dist = load_distribution(in.dist);
    res.dist_name = in.dist;
  }
  const MacroObjective objective(in.metric, smoothing);
  res.deterministic = best_deterministic(objective, dist, in.k);
  if (in.randomized) res.randomized = best_randomized_vertex_fw(objective, dist, in.k, in.randomized_iters);
  if (closed_form_for(in.metric)) {
    bool priors_interior = true;
    for (double p : dist.priors()) priors_interior = priors_interior && p > 0.0 && p < 1.0;
    if (priors_interior) res.closed_form_value = closed_form_value(in.metric, dist, in.k, smoothing);
  }
  return res;
}

inline std::string format_assignment(const Assignment& a) {
  std::ostringstream os;
  for (std::size_t p = 0; p < a.size(); ++p) {
    os << (p ? " " : "") << "x" << (p + 1) << ":{";
    for (std::size_t q = 0; q < a[p].size(); ++q) os << (q ? "," : "") << (a[p][q] + 1);
    os << "}";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// mixed-sweep

struct SweepRow {
  double lambda = 0.0;
  double instance_precision = 0.0;
  double macro_inner = 0.0;
  std::size_t iterations = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RandomizedClassifier> classifiers;
  std::string inner_name;
};

// Trains one Frank-Wolfe mixture per lambda on the training set and reports
// the expected instance precision and macro inner metric on the evaluation set.
inline SweepResult cmd_mixed_sweep(const ExperimentConfig& cfg, std::vector<double> lambdas,
                                   const MetricId& inner = MetricId::f1()) {
  cfg.validate();
  for (double l : lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw InvalidInput("lambda grid must lie in [0,1]");
  std::sort(lambdas.begin(), lambdas.end());
  const LabelMatrix labels = load_labels(cfg.labels);
  const MarginalMatrix marginals = load_marginals(cfg.marginals, cfg.kprime);
  const LabelMatrix test_labels = cfg.test_labels ? load_labels(*cfg.test_labels) : labels;
  const MarginalMatrix test_marginals = cfg.test_marginals ? load_marginals(*cfg.test_marginals, cfg.kprime) : marginals;
  const DatasetSplit split = split_dataset(labels, marginals, cfg.split, cfg.seed);

  SweepResult out;
  out.inner_name = metric_name(inner);
  out.rows.resize(lambdas.size());
  out.classifiers.resize(lambdas.size());
  detail::parallel_for(lambdas.size(), cfg.threads, [&](std::size_t i) {
    FWConfig fw;
    fw.max_iters = cfg.max_iters;
    fw.stop_eps = cfg.stop_eps;
    fw.init = cfg.init;
    fw.step_rule = cfg.step;
    fw.seed = cfg.seed;
    const MetricId metric = MetricId::mixed_of(lambdas[i], inner);
    FWResult res = run_frank_wolfe(metric, split.second.marginals, split.second.labels, cfg.k, fw, cfg.smoothing);
    const ConfusionTensor c = expected_confusion_randomized(res.classifier, test_marginals, test_labels);
    out.rows[i] = {lambdas[i], instance_precision_value(c), macro_value(inner, c, cfg.smoothing),
                   res.trace.iterations()};
    out.classifiers[i] = std::move(res.classifier);
  });
  if (cfg.out) {
    auto os = io_detail::open_out(*cfg.out / "sweep.tsv");
    os << "lambda\t" << at_k("instp", cfg.k) << '\t' << at_k("macro-" + out.inner_name, cfg.k) << "\titerations\n";
    for (const auto& r : out.rows)
      os << io_detail::fmt_g17(r.lambda) << '\t' << io_detail::fmt_g17(r.instance_precision) << '\t'
         << io_detail::fmt_g17(r.macro_inner) << '\t' << r.iterations << '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// report: merge report JSON files into one sorted table.

inline std::vector<ReportRow> cmd_report(const std::vector<std::filesystem::path>& inputs,
                                         const std::optional<std::filesystem::path>& out) {
  if (inputs.empty()) throw InvalidInput("report needs at least one input");
  std::vector<ReportRow> rows;
  for (const auto& p : inputs) {
    auto r = load_report_json(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  sort_report(rows);
  if (out) save_report(rows, *out);
  return rows;
}

}  // namespace macrok
