#pragma once

// Frank-Wolfe over confusion tensors. Each iteration linearizes the objective
// at the current tensor, solves the linear subproblem with an affine top-k
// rule, and mixes the new classifier into a randomized classifier.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "macrok/core.hpp"
#include "macrok/error.hpp"
#include "macrok/linear.hpp"
#include "macrok/metrics.hpp"
#include "macrok/rng.hpp"

namespace macrok {

enum class FWInit { top_k, random };
enum class StepRule { line_search, fixed_schedule };

struct FWConfig {
  std::size_t max_iters = 100;
  double stop_eps = 0.001;
  FWInit init = FWInit::top_k;
  StepRule step_rule = StepRule::line_search;
  std::size_t line_search_iters = 60;
  std::uint64_t seed = 0;
  // Observes every confusion tensor the loop computes.
  std::function<void(const ConfusionTensor&)> on_tensor;

  void validate() const {
    if (max_iters < 1) throw InvalidInput("max_iters must be at least 1");
    if (!(stop_eps >= 0.0)) throw InvalidInput("stopping epsilon must be nonnegative");
    if (line_search_iters < 1) throw InvalidInput("line_search_iters must be at least 1");
  }
};

struct FWTrace {
  struct Record {
    std::size_t iteration = 0;
    double objective = 0.0;  // objective of the tensor kept after this iteration
    double step = 0.0;
    bool accepted = true;
  };
  std::vector<Record> records;

  // Loop iterations run, not counting initialization.
  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }
};

struct FWResult {
  RandomizedClassifier classifier;
  FWTrace trace;
  ConfusionTensor confusion;  // maintained incrementally
};

// Anything that maps an affine top-k classifier to its confusion tensor on a
// fixed evaluation population.
template <typename P>
concept ConfusionProvider = requires(const P& p, const AffineTopK& h) {
  { p.num_labels() } -> std::convertible_to<std::size_t>;
  { p.confusion(h) } -> std::same_as<ConfusionTensor>;
};

class EmpiricalConfusionProvider {
 public:
  EmpiricalConfusionProvider(const MarginalMatrix& marginals, const LabelMatrix& labels)
      : marginals_(&marginals), labels_(&labels) {
    if (labels.num_rows() == 0) throw InvalidInput("empty dataset");
    if (marginals.num_rows() != labels.num_rows() || marginals.num_labels() != labels.num_labels())
      throw ShapeError("marginals and labels disagree in shape");
  }

  std::size_t num_labels() const { return labels_->num_labels(); }
  ConfusionTensor confusion(const AffineTopK& h) const {
    return empirical_confusion(predict_all(h, *marginals_), *labels_);
  }

 private:
  const MarginalMatrix* marginals_;
  const LabelMatrix* labels_;
};

// Exact population confusion over a discrete distribution.
class ExactConfusionProvider {
 public:
  explicit ExactConfusionProvider(const DiscreteDistribution& dist) : dist_(&dist) {}

  std::size_t num_labels() const { return dist_->num_labels(); }
  ConfusionTensor confusion(const AffineTopK& h) const {
    std::vector<std::vector<double>> assignment;
    assignment.reserve(dist_->num_points());
    for (const auto& pt : dist_->points()) {
      const KHot y = predict_deterministic(h, std::span<const double>(pt.marginals));
      assignment.emplace_back(y.begin(), y.end());
    }
    return population_confusion_discrete(assignment, *dist_, h.k);
  }

 private:
  const DiscreteDistribution* dist_;
};

// ---------------------------------------------------------------------------
// Step sizes.

inline double fixed_schedule_step(std::size_t i) {
  if (i < 1) throw InvalidInput("fixed schedule starts at iteration 1");
  return 2.0 / (static_cast<double>(i) + 1.0);
}

// Maximizes f over [0, 1]: a 33-point grid picks the bracket, golden-section
// search refines it, and the endpoints stay candidates. Ties and improvements
// within rounding noise of f(0) resolve to the smaller step.
template <typename F>
double maximize_on_unit_interval(F&& f, std::size_t iters) {
  constexpr std::size_t grid = 33;
  std::array<double, grid> vals{};
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid; ++g) {
    vals[g] = f(static_cast<double>(g) / (grid - 1));
    if (vals[g] > vals[best]) best = g;
  }
  double best_x = static_cast<double>(best) / (grid - 1);
  double best_v = vals[best];

  double lo = static_cast<double>(best == 0 ? 0 : best - 1) / (grid - 1);
  double hi = static_cast<double>(std::min(best + 1, grid - 1)) / (grid - 1);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (std::size_t it = 0; it < iters && hi - lo > 1e-12; ++it) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  for (auto [x, v] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
    if (v > best_v || (v == best_v && x < best_x)) {
      best_x = x;
      best_v = v;
    }
  }
  const double base = vals[0];
  if (best_v <= base + 1e-13 * std::max(1.0, std::abs(base))) return 0.0;
  return best_x;
}

template <Objective Obj>
double line_search(const Obj& objective, const ConfusionTensor& current, const ConfusionTensor& proposal,
                   std::size_t iters = 60) {
  if (current.num_labels() != proposal.num_labels()) throw ShapeError("line search tensors differ in shape");
  return maximize_on_unit_interval(
      [&](double alpha) { return objective.value(mix(current, proposal, alpha)); }, iters);
}

inline double line_search(const MetricId& metric, const ConfusionTensor& current, const ConfusionTensor& proposal,
                          std::size_t iters = 60, const SmoothingConfig& s = {}) {
  return line_search(MacroObjective(metric, s), current, proposal, iters);
}

// ---------------------------------------------------------------------------

inline AffineTopK initial_classifier(std::size_t m, std::size_t k, const FWConfig& cfg) {
  std::vector<double> a(m, 1.0);
  if (cfg.init == FWInit::random) {
    Rng rng(cfg.seed, 0x1417);
    for (auto& v : a) v = rng.uniform(0.5, 1.5);
  }
  return AffineTopK(std::move(a), std::vector<double>(m, 0.0), k);
}

template <Objective Obj, ConfusionProvider Provider>
FWResult frank_wolfe(const Obj& objective, const Provider& provider, std::size_t k, const FWConfig& cfg) {
  cfg.validate();
  const std::size_t m = provider.num_labels();
  if (k < 1 || k > m) throw InvalidBudget("budget k must satisfy 1 <= k <= m");

  auto observe = [&](const ConfusionTensor& c) {
    if (cfg.on_tensor) cfg.on_tensor(c);
  };

  std::vector<AffineTopK> classifiers{initial_classifier(m, k, cfg)};
  std::vector<double> weights{1.0};
  ConfusionTensor current = provider.confusion(classifiers.front());
  observe(current);

  FWTrace trace;
  trace.records.push_back({0, objective.value(current), 1.0, true});

  for (std::size_t i = 1; i <= cfg.max_iters; ++i) {
    const GainTensor gains = objective.gradient(current);
    AffineTopK next = gains_to_affine(gains, k);
    const ConfusionTensor proposal = provider.confusion(next);
    observe(proposal);

    const double alpha = cfg.step_rule == StepRule::line_search
                             ? line_search(objective, current, proposal, cfg.line_search_iters)
                             : fixed_schedule_step(i);
    if (alpha < cfg.stop_eps) {
      trace.records.push_back({i, trace.records.back().objective, alpha, false});
      break;
    }
    current = mix(current, proposal, alpha);
    observe(current);
    for (auto& w : weights) w *= (1.0 - alpha);
    classifiers.push_back(std::move(next));
    weights.push_back(alpha);
    trace.records.push_back({i, objective.value(current), alpha, true});
  }

  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<RandomizedClassifier::Component> comps;
  comps.reserve(classifiers.size());
  for (std::size_t i = 0; i < classifiers.size(); ++i) comps.push_back({std::move(classifiers[i]), weights[i] / total});
  return {RandomizedClassifier(std::move(comps)), std::move(trace), std::move(current)};
}

inline FWResult run_frank_wolfe(const MetricId& metric, const MarginalMatrix& marginals, const LabelMatrix& labels,
                                std::size_t k, const FWConfig& cfg = {}, const SmoothingConfig& s = {}) {
  const MacroObjective objective(metric, s);
  const EmpiricalConfusionProvider provider(marginals, labels);
  return frank_wolfe(objective, provider, k, cfg);
}

// ---------------------------------------------------------------------------
// Dataset splitting: the first part is reserved for fitting marginals, the
// second for tuning the classifier.

enum class SplitRatio { half, three_quarters, full };

inline SplitRatio parse_split(std::string_view text) {
  if (text == "50" || text == "50/50") return SplitRatio::half;
  if (text == "75" || text == "75/25") return SplitRatio::three_quarters;
  if (text == "100" || text == "100/100") return SplitRatio::full;
  throw ParseError("unknown split ratio '" + std::string(text) + "'");
}

struct Dataset {
  LabelMatrix labels;
  MarginalMatrix marginals;
};

struct DatasetSplit {
  Dataset first;
  Dataset second;
  std::vector<std::size_t> first_rows;
  std::vector<std::size_t> second_rows;
};

inline DatasetSplit split_dataset(const LabelMatrix& labels, const MarginalMatrix& marginals, SplitRatio ratio,
                                  std::uint64_t seed) {
  const std::size_t n = labels.num_rows();
  if (marginals.num_rows() != n) throw ShapeError("labels and marginals differ in row count");
  DatasetSplit out;
  if (ratio == SplitRatio::full) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (n == 0) throw InvalidSplit("cannot split an empty dataset");
    out.first = {labels, marginals};
    out.second = {labels, marginals};
    out.first_rows = all;
    out.second_rows = std::move(all);
    return out;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, 0x5b1);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  const std::size_t n1 = ratio == SplitRatio::half ? n / 2 : (3 * n) / 4;
  if (n1 == 0 || n1 == n) throw InvalidSplit("split leaves an empty part");
  out.first_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
  out.second_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n1), perm.end());
  std::sort(out.first_rows.begin(), out.first_rows.end());
  std::sort(out.second_rows.begin(), out.second_rows.end());
  out.first = {labels.subset(out.first_rows), marginals.subset(out.first_rows)};
  out.second = {labels.subset(out.second_rows), marginals.subset(out.second_rows)};
  return out;
}

}  // namespace macrok
