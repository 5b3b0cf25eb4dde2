#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "macrok/fw.hpp"
#include "macrok/linear.hpp"
#include "macrok/oracle.hpp"

using namespace macrok;

namespace {

GainTensor uniform_gains(std::size_t m, BinaryGain g) { return GainTensor{std::vector<BinaryGain>(m, g)}; }

KHot khot(std::initializer_list<int> bits) { return KHot(bits.begin(), bits.end()); }

}  // namespace

TEST(GainsToAffine, AccuracyGains) {
  const auto h = gains_to_affine(uniform_gains(3, {1, 0, 0, 1}), 2);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(h.a[j], 2.0);
    EXPECT_EQ(h.b[j], -1.0);
  }
}

TEST(GainsToAffine, RecallGains) {
  const std::vector<double> p{0.1, 0.4, 0.8};
  GainTensor g{std::vector<BinaryGain>(3)};
  for (std::size_t j = 0; j < 3; ++j) g[j].tp = 1.0 / p[j];
  const auto h = gains_to_affine(g, 1);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(h.a[j], 1.0 / p[j]);
    EXPECT_EQ(h.b[j], 0.0);
  }
}

TEST(GainsToAffine, ZeroTensorFallsBackToFirstLabels) {
  const auto h = gains_to_affine(uniform_gains(5, {0, 0, 0, 0}), 2);
  const std::vector<double> eta{0.1, 0.9, 0.3, 0.8, 0.2};
  EXPECT_EQ(predict_deterministic(h, eta), khot({1, 1, 0, 0, 0}));
}

TEST(GainsToAffine, RejectsNonFinite) {
  EXPECT_THROW(gains_to_affine(uniform_gains(2, {NAN, 0, 0, 1}), 1), InvalidInput);
}

TEST(ClosedForm, MacroRecallPrefersRareLabel) {
  const auto h = closed_form_strategy({Strategy::macro_recall}, PriorVector({0.1, 0.9}), 1);
  const std::vector<double> eta{0.08, 0.5};
  EXPECT_EQ(predict_deterministic(h, eta), khot({1, 0}));
}

TEST(ClosedForm, BalancedAccuracyAtHalfPriorsIsTopK) {
  const auto h = closed_form_strategy({Strategy::balanced_accuracy}, PriorVector({0.5, 0.5, 0.5, 0.5}), 2);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(h.a[j], 2.0);
    EXPECT_DOUBLE_EQ(h.b[j], -1.0);
  }
  Rng rng(1);
  const auto topk = closed_form_strategy({Strategy::top_k}, PriorVector({0.5, 0.5, 0.5, 0.5}), 2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> eta(4);
    for (auto& v : eta) v = rng.uniform();
    EXPECT_EQ(predict_deterministic(h, eta), predict_deterministic(topk, eta));
  }
}

TEST(ClosedForm, PowerAndLogWeights) {
  const auto pw = closed_form_strategy({Strategy::power_law, 0.5}, PriorVector({0.25, 0.64}), 1);
  EXPECT_DOUBLE_EQ(pw.a[0], 2.0);
  EXPECT_DOUBLE_EQ(pw.a[1], 1.25);
  const auto lg = closed_form_strategy({Strategy::log_weight}, PriorVector({0.25, 0.5}), 1);
  EXPECT_DOUBLE_EQ(lg.a[0], -std::log(0.25));
  EXPECT_DOUBLE_EQ(lg.a[1], std::log(2.0));
}

TEST(ClosedForm, TopKMatchesAccuracyGainsDecisions) {
  Rng rng(2);
  const auto topk = closed_form_strategy({Strategy::top_k}, PriorVector({0.3, 0.3, 0.3, 0.3, 0.3}), 2);
  const auto acc = gains_to_affine(uniform_gains(5, {1, 0, 0, 1}), 2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> eta(5);
    for (auto& v : eta) v = rng.uniform();
    EXPECT_EQ(predict_deterministic(topk, eta), predict_deterministic(acc, eta));
  }
}

TEST(Priors, Examples) {
  const LabelMatrix two_of_four(1, {{0}, {0}, {}, {}});
  EXPECT_DOUBLE_EQ(estimate_priors(two_of_four, 0.0)[0], 0.5);
  const LabelMatrix none(1, {{}, {}, {}, {}});
  EXPECT_DOUBLE_EQ(estimate_priors(none)[0], 1.0 / 6.0);
  const LabelMatrix all(1, {{0}, {0}, {0}, {0}});
  EXPECT_DOUBLE_EQ(estimate_priors(all)[0], 5.0 / 6.0);
}

TEST(Priors, Errors) {
  EXPECT_THROW(PriorVector({0.0, 0.5}), InvalidInput);
  EXPECT_THROW(PriorVector({1.0}), InvalidInput);
  EXPECT_THROW(estimate_priors(LabelMatrix(2, {})), InvalidInput);
  EXPECT_THROW(estimate_priors(LabelMatrix(1, {{}}), -1.0), InvalidInput);
  // zero counts without smoothing leave the open interval
  EXPECT_THROW(estimate_priors(LabelMatrix(1, {{}}), 0.0), InvalidInput);
}

TEST(StrategyNames, RoundTrip) {
  for (const char* name : {"topk", "macro-recall", "bacc", "pow:0.5", "pow:2", "log"})
    EXPECT_EQ(strategy_name(parse_strategy(name)), name);
  EXPECT_EQ(parse_strategy("pow").beta, 0.5);
  EXPECT_THROW(parse_strategy("pow:0"), ParseError);
  EXPECT_THROW(parse_strategy("pow:x"), ParseError);
  EXPECT_THROW(parse_strategy("random"), ParseError);
}

// Decisions are unchanged when every gain block is scaled by the same positive
// constant or shifted consistently (which moves every intercept equally).
TEST(AffineInvariance, ScaleAndShiftOfGains) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 6;
    GainTensor g{std::vector<BinaryGain>(m)};
    for (auto& gj : g.per_label) gj = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    GainTensor scaled = g, shifted = g;
    for (auto& gj : scaled.per_label) gj = 4.0 * gj;
    for (auto& gj : shifted.per_label) {
      // adding c to both entries of the y=0 row and of the y=1 row leaves a unchanged, shifts b by 0
      gj.tn += 0.5;
      gj.fp += 0.5;
      gj.fn += 0.25;
      gj.tp += 0.25;
    }
    const auto h = gains_to_affine(g, 3), hs = gains_to_affine(scaled, 3), hsh = gains_to_affine(shifted, 3);
    for (int r = 0; r < 20; ++r) {
      std::vector<double> eta(m);
      for (auto& v : eta) v = rng.uniform();
      EXPECT_EQ(predict_deterministic(h, eta), predict_deterministic(hs, eta));
      EXPECT_EQ(predict_deterministic(h, eta), predict_deterministic(hsh, eta));
    }
  }
}

// For any linear metric, the affine rule maximizes the objective among all
// exactly-k predictions; checked exhaustively on tiny evaluation sets.
TEST(LinearOptimality, ExhaustiveOnTinySets) {
  Rng rng(4);
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 4; ++n)
    for (std::size_t m = 2; m <= 5; ++m)
      for (std::size_t k = 1; k <= std::min<std::size_t>(2, m); ++k) {
        const auto dist = random_discrete_distribution(100 * n + 10 * m + k, n, m);
        GainTensor g{std::vector<BinaryGain>(m)};
        for (auto& gj : g.per_label) gj = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        auto linear = [&](const ConfusionTensor& c) {
          double v = 0.0;
          for (std::size_t j = 0; j < m; ++j)
            v += g[j].tn * c[j].tn + g[j].fp * c[j].fp + g[j].fn * c[j].fn + g[j].tp * c[j].tp;
          return v;
        };
        double best = -INFINITY;
        AssignmentEnumerator e(n, m, k);
        while (e.next()) best = std::max(best, linear(population_confusion_discrete(e.rows(), dist, k)));
        const auto h = gains_to_affine(g, k);
        const double achieved = linear(ExactConfusionProvider(dist).confusion(h));
        EXPECT_NEAR(achieved, best, 1e-12) << "n=" << n << " m=" << m << " k=" << k;
        ++cases;
      }
  EXPECT_EQ(cases, 32u);
}
