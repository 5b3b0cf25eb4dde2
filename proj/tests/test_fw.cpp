#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "macrok/fw.hpp"
#include "macrok/oracle.hpp"
#include "macrok/synthetic.hpp"

using namespace macrok;

namespace {

Dataset small_dataset(std::uint64_t seed, std::size_t n = 600, std::size_t m = 20) {
  SyntheticConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.seed = seed;
  return synthetic_dataset(cfg);
}

// A concave objective on a segment: -(alpha - 0.3)^2 encoded through tp of one label.
struct QuadraticProbe {
  double value(const ConfusionTensor& c) const {
    const double a = c[0].tp;
    return -(a - 0.3) * (a - 0.3);
  }
  GainTensor gradient(const ConfusionTensor& c) const {
    GainTensor g{std::vector<BinaryGain>(c.num_labels())};
    g[0].tp = -2.0 * (c[0].tp - 0.3);
    return g;
  }
};

ConfusionTensor with_tp(double tp) { return ConfusionTensor({{1.0 - tp, 0.0, 0.0, tp}}, 1); }

}  // namespace

// ---------------------------------------------------------------------------
// step sizes

TEST(FixedSchedule, Values) {
  EXPECT_EQ(fixed_schedule_step(1), 1.0);
  EXPECT_EQ(fixed_schedule_step(3), 0.5);
  EXPECT_DOUBLE_EQ(fixed_schedule_step(9), 0.2);
  EXPECT_THROW(fixed_schedule_step(0), InvalidInput);
}

TEST(LineSearch, LinearIncreasingGoesToOne) {
  const MetricId acc = MetricId::of(Measure::accuracy);
  const ConfusionTensor lo({{0.5, 0.2, 0.2, 0.1}}, 1);
  const ConfusionTensor hi({{0.6, 0.1, 0.1, 0.2}}, 1);
  EXPECT_EQ(line_search(acc, lo, hi), 1.0);
}

TEST(LineSearch, LinearDecreasingStaysAtZero) {
  const MetricId acc = MetricId::of(Measure::accuracy);
  const ConfusionTensor lo({{0.5, 0.2, 0.2, 0.1}}, 1);
  const ConfusionTensor hi({{0.6, 0.1, 0.1, 0.2}}, 1);
  EXPECT_EQ(line_search(acc, hi, lo), 0.0);
}

TEST(LineSearch, QuadraticProbeMaximizer) {
  const double alpha = line_search(QuadraticProbe{}, with_tp(0.0), with_tp(1.0));
  EXPECT_NEAR(alpha, 0.3, 1e-4);
}

TEST(LineSearch, FlatObjectivePrefersZero) {
  const MetricId acc = MetricId::of(Measure::accuracy);
  const ConfusionTensor c({{0.5, 0.2, 0.2, 0.1}}, 1);
  EXPECT_EQ(line_search(acc, c, c), 0.0);
}

TEST(LineSearch, MultimodalUsesGrid) {
  // two bumps; the taller one sits at 0.8
  auto f = [](double x) { return std::exp(-200 * (x - 0.2) * (x - 0.2)) + 1.5 * std::exp(-200 * (x - 0.8) * (x - 0.8)); };
  EXPECT_NEAR(maximize_on_unit_interval(f, 60), 0.8, 1e-4);
}

TEST(LineSearch, ShapeMismatch) {
  const ConfusionTensor one({{1, 0, 0, 0}}, 1);
  const ConfusionTensor two({{1, 0, 0, 0}, {1, 0, 0, 0}}, 1);
  EXPECT_THROW(line_search(MetricId::f1(), one, two), ShapeError);
}

// ---------------------------------------------------------------------------
// the loop

TEST(FrankWolfe, MacroRecallRecoversClosedForm) {
  const Dataset d = small_dataset(1);
  const std::size_t k = 3;
  const FWResult res = run_frank_wolfe(MetricId::of(Measure::recall), d.marginals, d.labels, k);
  const AffineTopK closed = closed_form_strategy({Strategy::macro_recall}, estimate_priors(d.labels, 0.0), k);
  // the last component carries all the weight and decides like the closed form
  const auto& last = res.classifier[res.classifier.size() - 1];
  EXPECT_NEAR(last.weight, 1.0, 1e-12);
  EXPECT_EQ(predict_all(last.classifier, d.marginals), predict_all(closed, d.marginals));
  const auto cc = empirical_confusion(predict_all(closed, d.marginals), d.labels);
  EXPECT_NEAR(macro_value(MetricId::of(Measure::recall), res.confusion),
              macro_value(MetricId::of(Measure::recall), cc), 1e-9);
  EXPECT_LE(res.trace.iterations(), 2u);
}

TEST(FrankWolfe, BalancedAccuracyMatchesClosedForm) {
  const Dataset d = small_dataset(2);
  const std::size_t k = 4;
  const MetricId bacc = MetricId::of(Measure::balanced_accuracy);
  const FWResult res = run_frank_wolfe(bacc, d.marginals, d.labels, k);
  const AffineTopK closed = closed_form_strategy({Strategy::balanced_accuracy}, estimate_priors(d.labels, 0.0), k);
  const auto cc = empirical_confusion(predict_all(closed, d.marginals), d.labels);
  EXPECT_NEAR(macro_value(bacc, res.confusion), macro_value(bacc, cc), 1e-9);
}

TEST(FrankWolfe, JaccardOnCouplingDistributionA) {
  const auto ref = coupling_distribution_a();
  const MacroObjective obj(MetricId::of(Measure::jaccard), ref.smoothing);
  FWConfig cfg;
  cfg.stop_eps = 0.0;
  cfg.max_iters = 500;
  const FWResult res = frank_wolfe(obj, ExactConfusionProvider(ref.dist), 2, cfg);
  EXPECT_NEAR(obj.value(res.confusion), 0.453962, 1e-4);
}

TEST(FrankWolfe, TraceMonotoneAndWeightsNormalized) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Dataset d = small_dataset(10 + seed);
    for (const auto& metric : {MetricId::f1(), MetricId::of(Measure::jaccard), MetricId::of(Measure::g_mean),
                               MetricId::of(Measure::auc), MetricId::mixed_of(0.5, MetricId::f1())}) {
      FWConfig cfg;
      cfg.seed = seed;
      cfg.init = seed % 2 ? FWInit::random : FWInit::top_k;
      const FWResult res = run_frank_wolfe(metric, d.marginals, d.labels, 3, cfg);
      for (std::size_t r = 1; r < res.trace.records.size(); ++r)
        EXPECT_GE(res.trace.records[r].objective, res.trace.records[r - 1].objective) << metric_name(metric);
      double total = 0.0;
      for (const auto& c : res.classifier.components()) {
        EXPECT_GE(c.weight, 0.0);
        total += c.weight;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
      EXPECT_LE(res.trace.iterations(), 50u);
    }
  }
}

TEST(FrankWolfe, IncrementalTensorMatchesRecomputation) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset d = small_dataset(20 + seed);
    for (auto rule : {StepRule::line_search, StepRule::fixed_schedule}) {
      FWConfig cfg;
      cfg.step_rule = rule;
      cfg.max_iters = 25;
      const FWResult res = run_frank_wolfe(MetricId::f1(), d.marginals, d.labels, 2, cfg);
      const ConfusionTensor again = expected_confusion_randomized(res.classifier, d.marginals, d.labels);
      for (std::size_t j = 0; j < again.num_labels(); ++j) {
        EXPECT_NEAR(res.confusion[j].tn, again[j].tn, 1e-9);
        EXPECT_NEAR(res.confusion[j].fp, again[j].fp, 1e-9);
        EXPECT_NEAR(res.confusion[j].fn, again[j].fn, 1e-9);
        EXPECT_NEAR(res.confusion[j].tp, again[j].tp, 1e-9);
      }
    }
  }
}

TEST(FrankWolfe, StopIterationIsExcluded) {
  const Dataset d = small_dataset(3);
  const FWResult res = run_frank_wolfe(MetricId::of(Measure::recall), d.marginals, d.labels, 2);
  ASSERT_FALSE(res.trace.records.back().accepted);
  std::size_t accepted = 0;
  for (const auto& r : res.trace.records) accepted += r.accepted;
  // initial classifier plus one component per accepted step
  EXPECT_EQ(res.classifier.size(), accepted);
}

TEST(FrankWolfe, FixedScheduleRunsToIterationLimit) {
  const Dataset d = small_dataset(4);
  FWConfig cfg;
  cfg.step_rule = StepRule::fixed_schedule;
  cfg.max_iters = 7;
  const FWResult res = run_frank_wolfe(MetricId::f1(), d.marginals, d.labels, 2, cfg);
  EXPECT_EQ(res.trace.iterations(), 7u);
  EXPECT_EQ(res.classifier.size(), 8u);
  EXPECT_EQ(res.classifier[0].weight, 0.0);  // the first step has alpha 1
}

TEST(FrankWolfe, ConfigAndInputErrors) {
  const Dataset d = small_dataset(5, 50, 5);
  FWConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(run_frank_wolfe(MetricId::f1(), d.marginals, d.labels, 2, cfg), InvalidInput);
  cfg = {};
  cfg.stop_eps = -1.0;
  EXPECT_THROW(run_frank_wolfe(MetricId::f1(), d.marginals, d.labels, 2, cfg), InvalidInput);
  EXPECT_THROW(run_frank_wolfe(MetricId::f1(), d.marginals, d.labels, 6), InvalidBudget);
  const LabelMatrix empty(5, {});
  const MarginalMatrix none(5, {0}, {}, {});
  EXPECT_THROW(run_frank_wolfe(MetricId::f1(), none, empty, 2), InvalidInput);
  const LabelMatrix wrong(4, std::vector<std::vector<LabelIndex>>(50));
  EXPECT_THROW(run_frank_wolfe(MetricId::f1(), d.marginals, wrong, 2), ShapeError);
  MetricId bad = MetricId::f1();
  bad.beta = -1.0;
  EXPECT_THROW(run_frank_wolfe(bad, d.marginals, d.labels, 2), UnsupportedMetric);
}

TEST(FrankWolfe, ObserverSeesBudgetedTensors) {
  const Dataset d = small_dataset(6);
  FWConfig cfg;
  std::size_t seen = 0;
  cfg.on_tensor = [&](const ConfusionTensor& c) {
    ++seen;
    EXPECT_TRUE(c.satisfies_budget(1e-9));
  };
  run_frank_wolfe(MetricId::f1(), d.marginals, d.labels, 3, cfg);
  EXPECT_GE(seen, 2u);
}

TEST(FrankWolfe, RandomInitIsSeeded) {
  FWConfig a, b, c;
  a.init = b.init = c.init = FWInit::random;
  a.seed = b.seed = 8;
  c.seed = 9;
  EXPECT_EQ(initial_classifier(10, 2, a), initial_classifier(10, 2, b));
  EXPECT_NE(initial_classifier(10, 2, a), initial_classifier(10, 2, c));
  for (double v : initial_classifier(10, 2, a).a) {
    EXPECT_GE(v, 0.5);
    EXPECT_LE(v, 1.5);
  }
}

// ---------------------------------------------------------------------------
// splitting

TEST(Split, Sizes) {
  const LabelMatrix y(3, {{0}, {1}, {2}, {0, 1}});
  const auto mm = MarginalMatrix::from_dense(std::vector<std::vector<double>>(4, {0.1, 0.2, 0.3}), 3);
  const auto half = split_dataset(y, mm, SplitRatio::half, 1);
  EXPECT_EQ(half.first.labels.num_rows(), 2u);
  EXPECT_EQ(half.second.labels.num_rows(), 2u);
  const auto full = split_dataset(y, mm, SplitRatio::full, 1);
  EXPECT_EQ(full.first.labels.num_rows(), 4u);
  EXPECT_EQ(full.second.labels.num_rows(), 4u);
  const auto tq = split_dataset(y, mm, SplitRatio::three_quarters, 1);
  EXPECT_EQ(tq.first.labels.num_rows(), 3u);
  EXPECT_EQ(tq.second.labels.num_rows(), 1u);
}

TEST(Split, SeedDeterminismAndDisjointness) {
  const Dataset d = small_dataset(7, 101, 5);
  const auto s1 = split_dataset(d.labels, d.marginals, SplitRatio::half, 42);
  const auto s2 = split_dataset(d.labels, d.marginals, SplitRatio::half, 42);
  EXPECT_EQ(s1.first_rows, s2.first_rows);
  EXPECT_EQ(s1.second_rows, s2.second_rows);
  std::vector<std::size_t> all = s1.first_rows;
  all.insert(all.end(), s1.second_rows.begin(), s1.second_rows.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(101);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
}

TEST(Split, Errors) {
  const LabelMatrix y(2, {{0}});
  const auto mm = MarginalMatrix::from_dense({{0.1, 0.2}}, 2);
  EXPECT_THROW(split_dataset(y, mm, SplitRatio::half, 0), InvalidSplit);
  EXPECT_EQ(parse_split("75"), SplitRatio::three_quarters);
  EXPECT_THROW(parse_split("60"), ParseError);
}
