#pragma once

// Exhaustive oracles for tiny discrete distributions: every exactly-k
// assignment of labels to points is scored, and Frank-Wolfe over the hull of
// those vertices gives the best randomized value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "macrok/core.hpp"
#include "macrok/error.hpp"
#include "macrok/fw.hpp"
#include "macrok/metrics.hpp"
#include "macrok/rng.hpp"

namespace macrok {

using LabelSet = std::vector<LabelIndex>;
using Assignment = std::vector<LabelSet>;  // one k-subset per point

inline std::vector<LabelSet> k_subsets(std::size_t m, std::size_t k) {
  if (k < 1 || k > m) throw InvalidBudget("budget k must satisfy 1 <= k <= m");
  std::vector<LabelSet> out;
  LabelSet cur(k);
  for (std::size_t i = 0; i < k; ++i) cur[i] = static_cast<LabelIndex>(i);
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == static_cast<LabelIndex>(m - k + i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t p = i; p < k; ++p) cur[p] = cur[p - 1] + 1;
  }
  return out;
}

// Walks {k-subsets of [m]}^n in lexicographic order, point 0 most significant.
class AssignmentEnumerator {
 public:
  static constexpr double default_limit = 1e6;

  AssignmentEnumerator(std::size_t n, std::size_t m, std::size_t k, double limit = default_limit)
      : subsets_(k_subsets(m, k)), choice_(n, 0), m_(m) {
    if (n == 0) throw InvalidInput("need at least one point");
    const double count = std::pow(static_cast<double>(subsets_.size()), static_cast<double>(n));
    if (count > limit)
      throw SearchSpaceTooLarge("C(m,k)^n = " + std::to_string(count) + " exceeds limit " + std::to_string(limit));
    total_ = static_cast<std::size_t>(std::llround(count));
  }

  std::size_t size() const { return total_; }
  std::size_t num_subsets() const { return subsets_.size(); }
  const std::vector<LabelSet>& subsets() const { return subsets_; }
  const std::vector<std::size_t>& choice() const { return choice_; }

  // Advances to the next assignment; false once all have been visited.
  bool next() {
    if (!started_) {
      started_ = true;
      return true;
    }
    for (std::size_t p = choice_.size(); p-- > 0;) {
      if (++choice_[p] < subsets_.size()) return true;
      choice_[p] = 0;
    }
    return false;
  }

  Assignment assignment() const {
    Assignment out;
    out.reserve(choice_.size());
    for (auto c : choice_) out.push_back(subsets_[c]);
    return out;
  }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(choice_.size(), std::vector<double>(m_, 0.0));
    for (std::size_t p = 0; p < choice_.size(); ++p)
      for (auto j : subsets_[choice_[p]]) out[p][j] = 1.0;
    return out;
  }

 private:
  std::vector<LabelSet> subsets_;
  std::vector<std::size_t> choice_;
  std::size_t m_;
  std::size_t total_ = 0;
  bool started_ = false;
};

inline std::vector<Assignment> enumerate_assignments(std::size_t n, std::size_t m, std::size_t k,
                                                     double limit = AssignmentEnumerator::default_limit) {
  AssignmentEnumerator e(n, m, k, limit);
  std::vector<Assignment> out;
  out.reserve(e.size());
  while (e.next()) out.push_back(e.assignment());
  return out;
}

inline std::vector<std::vector<double>> assignment_rows(const Assignment& a, std::size_t m) {
  std::vector<std::vector<double>> out(a.size(), std::vector<double>(m, 0.0));
  for (std::size_t p = 0; p < a.size(); ++p)
    for (auto j : a[p]) out[p][j] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------

struct DeterministicOptimum {
  Assignment assignment;
  double value = -std::numeric_limits<double>::infinity();
  ConfusionTensor confusion;
};

template <Objective Obj>
DeterministicOptimum best_deterministic(const Obj& objective, const DiscreteDistribution& dist, std::size_t k,
                                        double limit = AssignmentEnumerator::default_limit,
                                        const std::function<void(const ConfusionTensor&)>& observe = {}) {
  AssignmentEnumerator e(dist.num_points(), dist.num_labels(), k, limit);
  DeterministicOptimum best;
  while (e.next()) {
    ConfusionTensor c = population_confusion_discrete(e.rows(), dist, k);
    if (observe) observe(c);
    const double v = objective.value(c);
    // strict improvement keeps the lexicographically smallest optimum
    if (v > best.value) {
      best.value = v;
      best.assignment = e.assignment();
      best.confusion = std::move(c);
    }
  }
  return best;
}

inline DeterministicOptimum best_deterministic(const MetricId& metric, const DiscreteDistribution& dist, std::size_t k,
                                               const SmoothingConfig& s = {}) {
  return best_deterministic(MacroObjective(metric, s), dist, k);
}

struct RandomizedOptimum {
  std::vector<Assignment> vertices;  // support of the mixture
  std::vector<double> weights;
  double value = -std::numeric_limits<double>::infinity();
  ConfusionTensor confusion;
};

// Frank-Wolfe on the convex hull of all vertex confusion tensors, with the
// linear subproblem solved by scanning every vertex. Starts from the best
// vertex and returns the best iterate seen.
template <Objective Obj>
RandomizedOptimum best_randomized_vertex_fw(const Obj& objective, const DiscreteDistribution& dist, std::size_t k,
                                            std::size_t iters = 10000,
                                            double limit = AssignmentEnumerator::default_limit) {
  AssignmentEnumerator e(dist.num_points(), dist.num_labels(), k, limit);
  std::vector<ConfusionTensor> vertices;
  std::vector<Assignment> assignments;
  vertices.reserve(e.size());
  while (e.next()) {
    vertices.push_back(population_confusion_discrete(e.rows(), dist, k));
    assignments.push_back(e.assignment());
  }
  const std::size_t m = dist.num_labels();

  std::size_t start = 0;
  double start_value = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const double val = objective.value(vertices[v]);
    if (val > start_value) {
      start_value = val;
      start = v;
    }
  }

  std::vector<double> weights(vertices.size(), 0.0);
  weights[start] = 1.0;
  ConfusionTensor current = vertices[start];
  std::vector<double> best_weights = weights;
  double best_value = start_value;
  ConfusionTensor best_confusion = current;

  for (std::size_t it = 1; it <= iters; ++it) {
    const GainTensor g = objective.gradient(current);
    std::size_t arg = 0;
    double arg_score = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < vertices.size(); ++v) {
      double score = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const auto& c = vertices[v][j];
        score += g[j].tn * c.tn + g[j].fp * c.fp + g[j].fn * c.fn + g[j].tp * c.tp;
      }
      if (score > arg_score) {
        arg_score = score;
        arg = v;
      }
    }
    const double step = fixed_schedule_step(it);
    current = mix(current, vertices[arg], step);
    for (auto& w : weights) w *= (1.0 - step);
    weights[arg] += step;
    const double val = objective.value(current);
    if (val > best_value) {
      best_value = val;
      best_weights = weights;
      best_confusion = current;
    }
  }

  RandomizedOptimum out;
  out.value = best_value;
  out.confusion = std::move(best_confusion);
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    if (best_weights[v] > 0.0) {
      out.vertices.push_back(assignments[v]);
      out.weights.push_back(best_weights[v]);
    }
  }
  return out;
}

inline RandomizedOptimum best_randomized_vertex_fw(const MetricId& metric, const DiscreteDistribution& dist,
                                                   std::size_t k, std::size_t iters = 10000,
                                                   const SmoothingConfig& s = {}) {
  return best_randomized_vertex_fw(MacroObjective(metric, s), dist, k, iters);
}

// ---------------------------------------------------------------------------
// Test distributions.

// Dirichlet(1, ..., 1) point weights, Uniform(0, 1) marginals.
inline DiscreteDistribution random_discrete_distribution(std::uint64_t seed, std::size_t n, std::size_t m) {
  if (n < 1 || m < 1) throw InvalidInput("need at least one point and one label");
  Rng rng(seed, 0xd157);
  std::vector<DiscreteDistribution::Point> pts(n);
  double total = 0.0;
  for (auto& p : pts) {
    p.weight = -std::log(rng.uniform_open_closed());
    total += p.weight;
    p.marginals.resize(m);
    for (auto& v : p.marginals) v = rng.uniform();
  }
  for (auto& p : pts) p.weight /= total;
  return DiscreteDistribution(std::move(pts));
}

// Rounds weights to multiples of 1/denominator (largest remainders) and
// replicates each point accordingly; every copy carries weight 1/denominator.
inline DiscreteDistribution materialize(const DiscreteDistribution& dist, std::size_t denominator) {
  if (denominator < dist.num_points()) throw InvalidInput("denominator too small for the distribution");
  const std::size_t n = dist.num_points();
  std::vector<std::size_t> counts(n);
  std::vector<std::pair<double, std::size_t>> remainders(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = dist[i].weight * static_cast<double>(denominator);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = {exact - static_cast<double>(counts[i]), i};
    assigned += counts[i];
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  for (std::size_t r = 0; assigned < denominator; ++r, ++assigned) ++counts[remainders[r % n].second];
  std::vector<DiscreteDistribution::Point> pts;
  const double w = 1.0 / static_cast<double>(denominator);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < counts[i]; ++c) pts.push_back({w, dist[i].marginals});
  return DiscreteDistribution(std::move(pts), 1e-9);
}

// Two-point, three-label distributions that differ only in the third marginal
// of the second point. Reported optima assume 1e-5 added to each denominator.
struct ReferenceDistribution {
  std::string name;
  DiscreteDistribution dist;
  SmoothingConfig smoothing;
  double reported_value;
  Assignment reported_optimum;
};

inline ReferenceDistribution coupling_distribution_a() {
  return {"appendixE-A",
          DiscreteDistribution({{0.5, {0.4, 0.2, 0.6}}, {0.5, {0.8, 0.4, 0.4}}}),
          SmoothingConfig{1e-5},
          0.453962,
          {{0, 2}, {0, 1}}};
}

inline ReferenceDistribution coupling_distribution_b() {
  return {"appendixE-B",
          DiscreteDistribution({{0.5, {0.4, 0.2, 0.6}}, {0.5, {0.8, 0.4, 0.8}}}),
          SmoothingConfig{1e-5},
          0.471423,
          {{1, 2}, {0, 2}}};
}

struct CouplingReport {
  DeterministicOptimum optimum_a;
  DeterministicOptimum optimum_b;
  double randomized_value_a = 0.0;
  double randomized_value_b = 0.0;
  bool values_match = false;       // within 1e-6 of the reported values
  bool assignments_match = false;  // equal to the reported optimal tables
  bool first_point_flips = false;  // labels {1,2} of the first point swap between A and B
  bool deterministic = false;      // randomized optimum does not beat the vertex optimum

  bool ok() const { return values_match && assignments_match && first_point_flips && deterministic; }
};

inline CouplingReport coupling_witness(std::size_t randomized_iters = 2000) {
  const MetricId jaccard = MetricId::of(Measure::jaccard);
  const auto a = coupling_distribution_a();
  const auto b = coupling_distribution_b();
  const std::size_t k = 2;
  CouplingReport r;
  r.optimum_a = best_deterministic(jaccard, a.dist, k, a.smoothing);
  r.optimum_b = best_deterministic(jaccard, b.dist, k, b.smoothing);
  r.randomized_value_a = best_randomized_vertex_fw(jaccard, a.dist, k, randomized_iters, a.smoothing).value;
  r.randomized_value_b = best_randomized_vertex_fw(jaccard, b.dist, k, randomized_iters, b.smoothing).value;
  r.values_match = std::abs(r.optimum_a.value - a.reported_value) <= 1e-6 &&
                   std::abs(r.optimum_b.value - b.reported_value) <= 1e-6;
  r.assignments_match = r.optimum_a.assignment == a.reported_optimum && r.optimum_b.assignment == b.reported_optimum;
  auto has = [](const LabelSet& s, LabelIndex j) { return std::binary_search(s.begin(), s.end(), j); };
  const auto& xa = r.optimum_a.assignment.at(0);
  const auto& xb = r.optimum_b.assignment.at(0);
  r.first_point_flips = has(xa, 0) && !has(xa, 1) && !has(xb, 0) && has(xb, 1);
  r.deterministic = r.randomized_value_a <= r.optimum_a.value + 1e-9 && r.randomized_value_b <= r.optimum_b.value + 1e-9;
  return r;
}

}  // namespace macrok
