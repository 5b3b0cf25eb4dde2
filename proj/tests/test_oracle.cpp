#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "macrok/fw.hpp"
#include "macrok/linear.hpp"
#include "macrok/oracle.hpp"

using namespace macrok;

namespace {

const SmoothingConfig kExact{0.0};

// Smoothed minimum of the true-positive mass of labels 0 and 1. Concave, and
// every vertex of a one-point two-label problem puts zero mass on one label,
// so only a mixture can lift the minimum.
struct SoftMinTp {
  double t = 50.0;
  double value(const ConfusionTensor& c) const {
    return -std::log(std::exp(-t * c[0].tp) + std::exp(-t * c[1].tp)) / t;
  }
  GainTensor gradient(const ConfusionTensor& c) const {
    const double e0 = std::exp(-t * c[0].tp), e1 = std::exp(-t * c[1].tp);
    GainTensor g{std::vector<BinaryGain>(c.num_labels())};
    g[0].tp = e0 / (e0 + e1);
    g[1].tp = e1 / (e0 + e1);
    return g;
  }
};

}  // namespace

TEST(KSubsets, CountsAndOrder) {
  EXPECT_EQ(k_subsets(3, 1), (std::vector<LabelSet>{{0}, {1}, {2}}));
  EXPECT_EQ(k_subsets(3, 2), (std::vector<LabelSet>{{0, 1}, {0, 2}, {1, 2}}));
  EXPECT_EQ(k_subsets(5, 2).size(), 10u);
  EXPECT_EQ(k_subsets(4, 4).size(), 1u);
  EXPECT_THROW(k_subsets(3, 0), InvalidBudget);
  EXPECT_THROW(k_subsets(3, 4), InvalidBudget);
}

TEST(Enumerator, Counts) {
  EXPECT_EQ(enumerate_assignments(1, 3, 2).size(), 3u);
  EXPECT_EQ(enumerate_assignments(2, 3, 2).size(), 9u);
  EXPECT_EQ(enumerate_assignments(3, 2, 2).size(), 1u);
  AssignmentEnumerator e(2, 3, 1);
  std::size_t visited = 0;
  while (e.next()) ++visited;
  EXPECT_EQ(visited, e.size());
}

TEST(Enumerator, FirstAndLastAssignment) {
  const auto all = enumerate_assignments(2, 3, 2);
  EXPECT_EQ(all.front(), (Assignment{{0, 1}, {0, 1}}));
  EXPECT_EQ(all[1], (Assignment{{0, 1}, {0, 2}}));
  EXPECT_EQ(all.back(), (Assignment{{1, 2}, {1, 2}}));
  EXPECT_EQ(assignment_rows(all[1], 3), (std::vector<std::vector<double>>{{1, 1, 0}, {1, 0, 1}}));
}

TEST(Enumerator, LimitIsEnforced) {
  // C(10,2)^4 = 4.1e6
  EXPECT_THROW(AssignmentEnumerator(4, 10, 2), SearchSpaceTooLarge);
  EXPECT_NO_THROW(AssignmentEnumerator(3, 10, 2));
  EXPECT_THROW(AssignmentEnumerator(3, 10, 2, 1000.0), SearchSpaceTooLarge);
  EXPECT_THROW(AssignmentEnumerator(0, 3, 1), InvalidInput);
}

TEST(BestDeterministic, CouplingDistributions) {
  const MetricId jaccard = MetricId::of(Measure::jaccard);
  for (const auto& ref : {coupling_distribution_a(), coupling_distribution_b()}) {
    const auto opt = best_deterministic(jaccard, ref.dist, 2, ref.smoothing);
    EXPECT_EQ(opt.assignment, ref.reported_optimum) << ref.name;
    EXPECT_NEAR(opt.value, ref.reported_value, 1e-6) << ref.name;
  }
}

TEST(BestDeterministic, WitnessReport) {
  const CouplingReport r = coupling_witness(500);
  EXPECT_TRUE(r.values_match);
  EXPECT_TRUE(r.assignments_match);
  EXPECT_TRUE(r.first_point_flips);
  EXPECT_TRUE(r.deterministic);
  EXPECT_TRUE(r.ok());
}

TEST(BestDeterministic, ObserverSeesEveryVertex) {
  const auto dist = random_discrete_distribution(3, 2, 4);
  std::size_t seen = 0;
  best_deterministic(MacroObjective(MetricId::f1()), dist, 2, AssignmentEnumerator::default_limit,
                     [&](const ConfusionTensor& c) {
                       ++seen;
                       EXPECT_TRUE(c.satisfies_budget(1e-12));
                     });
  EXPECT_EQ(seen, 36u);
}

TEST(BestRandomized, NeverBelowDeterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto dist = random_discrete_distribution(seed, 2 + seed % 2, 3 + seed % 2);
    for (const auto& metric : {MetricId::f1(), MetricId::of(Measure::jaccard), MetricId::of(Measure::g_mean)}) {
      const auto det = best_deterministic(metric, dist, 2);
      const auto rnd = best_randomized_vertex_fw(metric, dist, 2, 400);
      EXPECT_GE(rnd.value, det.value - 1e-9) << seed << " " << metric_name(metric);
      double total = 0.0;
      for (double w : rnd.weights) total += w;
      EXPECT_NEAR(total, 1.0, 1e-9);
      EXPECT_EQ(rnd.vertices.size(), rnd.weights.size());
    }
  }
}

TEST(BestDeterministic, MacroRecallMatchesClosedForm) {
  const MetricId recall = MetricId::of(Measure::recall);
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto dist = random_discrete_distribution(50 + seed, 3, 4);
    const std::size_t k = 1 + seed % 2;
    std::vector<double> p(4, 0.0);
    for (std::size_t i = 0; i < dist.num_points(); ++i)
      for (std::size_t j = 0; j < 4; ++j) p[j] += dist[i].weight * dist[i].marginals[j];
    const auto h = closed_form_strategy({Strategy::macro_recall}, PriorVector(p), k);
    const double closed = macro_value(recall, ExactConfusionProvider(dist).confusion(h), kExact);
    const double oracle = best_deterministic(recall, dist, k, kExact).value;
    EXPECT_NEAR(closed, oracle, 1e-6) << seed;
  }
}

// A non-linear objective where randomization strictly helps. The mixture value
// is checked independently by scanning a dense grid of two-vertex mixtures.
TEST(BestRandomized, MixtureStrictlyBeatsVerticesForSoftMin) {
  const DiscreteDistribution dist({{1.0, {0.5, 0.5}}});
  const SoftMinTp obj;
  const auto det = best_deterministic(obj, dist, 1);
  const auto rnd = best_randomized_vertex_fw(obj, dist, 1, 2000);

  const auto v0 = population_confusion_discrete({{1, 0}}, dist, 1);
  const auto v1 = population_confusion_discrete({{0, 1}}, dist, 1);
  double grid_best = -INFINITY;
  for (int s = 0; s <= 10000; ++s) grid_best = std::max(grid_best, obj.value(mix(v0, v1, s / 10000.0)));

  EXPECT_NEAR(det.value, std::max(obj.value(v0), obj.value(v1)), 1e-15);
  EXPECT_GT(grid_best, det.value + 0.2);
  EXPECT_NEAR(rnd.value, grid_best, 1e-4);
  EXPECT_EQ(rnd.vertices.size(), 2u);
}

TEST(RandomDistribution, SeededAndNormalized) {
  const auto a = random_discrete_distribution(9, 3, 4);
  const auto b = random_discrete_distribution(9, 3, 4);
  const auto c = random_discrete_distribution(10, 3, 4);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].weight, b[i].weight);
    EXPECT_EQ(a[i].marginals, b[i].marginals);
    total += a[i].weight;
    for (double v : a[i].marginals) {
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NE(a[0].weight, c[0].weight);
  EXPECT_THROW(random_discrete_distribution(1, 0, 3), InvalidInput);
}

TEST(Materialize, LargestRemainderCounts) {
  const DiscreteDistribution dist({{0.5, {0.1}}, {0.3, {0.2}}, {0.2, {0.3}}});
  const auto mat = materialize(dist, 10);
  ASSERT_EQ(mat.num_points(), 10u);
  std::size_t c1 = 0, c2 = 0, c3 = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_DOUBLE_EQ(mat[i].weight, 0.1);
    c1 += mat[i].marginals[0] == 0.1;
    c2 += mat[i].marginals[0] == 0.2;
    c3 += mat[i].marginals[0] == 0.3;
  }
  EXPECT_EQ(c1, 5u);
  EXPECT_EQ(c2, 3u);
  EXPECT_EQ(c3, 2u);
  const auto odd = materialize(DiscreteDistribution({{0.5, {0.1}}, {0.5, {0.2}}}), 3);
  EXPECT_EQ(odd.num_points(), 3u);
  EXPECT_THROW(materialize(dist, 2), InvalidInput);
}

TEST(Materialize, PopulationTensorIsPreservedForEvenWeights) {
  const DiscreteDistribution dist({{0.5, {0.4, 0.2, 0.6}}, {0.5, {0.8, 0.4, 0.4}}});
  const auto mat = materialize(dist, 2);
  const auto h = AffineTopK(std::vector<double>(3, 1.0), std::vector<double>(3, 0.0), 2);
  const auto c1 = ExactConfusionProvider(dist).confusion(h);
  const auto c2 = ExactConfusionProvider(mat).confusion(h);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(c1[j].tp, c2[j].tp, 1e-15);
    EXPECT_NEAR(c1[j].fp, c2[j].fp, 1e-15);
  }
}

TEST(FrankWolfeVsOracle, MacroF1OnTinyDistributions) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto dist = random_discrete_distribution(200 + seed, 3, 4);
    const auto det = best_deterministic(MetricId::f1(), dist, 2);
    const FWResult res = frank_wolfe(MacroObjective(MetricId::f1()), ExactConfusionProvider(dist), 2, FWConfig{});
    EXPECT_GE(macro_value(MetricId::f1(), res.confusion), det.value - 1e-3) << seed;
  }
}
