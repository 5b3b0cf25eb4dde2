#pragma once

// Closed-form optimal classifiers for metrics that are linear in the
// confusion tensor, and the prior-reweighted top-k baselines.

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "macrok/core.hpp"
#include "macrok/error.hpp"
#include "macrok/metrics.hpp"

namespace macrok {

// Label priors P(y_j = 1), strictly inside (0, 1).
class PriorVector {
 public:
  PriorVector() = default;
  explicit PriorVector(std::vector<double> p) : p_(std::move(p)) {
    for (double v : p_)
      if (!(v > 0.0 && v < 1.0)) throw InvalidInput("label priors must lie strictly inside (0,1)");
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t j) const { return p_[j]; }
  std::span<const double> values() const { return p_; }

 private:
  std::vector<double> p_;
};

enum class Strategy { top_k, macro_recall, balanced_accuracy, power_law, log_weight };

struct StrategyId {
  Strategy strategy = Strategy::top_k;
  double beta = 0.5;  // power_law exponent

  friend bool operator==(const StrategyId&, const StrategyId&) = default;
};

// CLI spelling: topk, macro-recall, bacc, pow:<beta>, log.
inline StrategyId parse_strategy(std::string_view text) {
  if (text == "topk") return {Strategy::top_k};
  if (text == "macro-recall") return {Strategy::macro_recall};
  if (text == "bacc") return {Strategy::balanced_accuracy};
  if (text == "log") return {Strategy::log_weight};
  if (text == "pow") return {Strategy::power_law, 0.5};
  if (text.starts_with("pow:")) {
    const double beta = detail::parse_real(text.substr(4), "power-law exponent");
    if (!(beta > 0.0)) throw ParseError("power-law exponent must be positive");
    return {Strategy::power_law, beta};
  }
  throw ParseError("unknown strategy '" + std::string(text) + "'");
}

inline std::string strategy_name(const StrategyId& s) {
  switch (s.strategy) {
    case Strategy::top_k: return "topk";
    case Strategy::macro_recall: return "macro-recall";
    case Strategy::balanced_accuracy: return "bacc";
    case Strategy::power_law: return "pow:" + detail::format_number(s.beta);
    case Strategy::log_weight: return "log";
  }
  return "unknown";
}

// a_j = G00 + G11 - G01 - G10, b_j = G01 - G00
inline AffineTopK gains_to_affine(const GainTensor& g, std::size_t k) {
  if (!g.is_finite()) throw InvalidInput("gain tensor must be finite");
  const std::size_t m = g.num_labels();
  std::vector<double> a(m), b(m);
  for (std::size_t j = 0; j < m; ++j) {
    a[j] = g[j].tn + g[j].tp - g[j].fp - g[j].fn;
    b[j] = g[j].fp - g[j].tn;
  }
  return AffineTopK(std::move(a), std::move(b), k);
}

inline AffineTopK closed_form_strategy(const StrategyId& s, const PriorVector& priors, std::size_t k) {
  const std::size_t m = priors.size();
  std::vector<double> a(m, 1.0), b(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double p = priors[j];
    switch (s.strategy) {
      case Strategy::top_k:
        break;
      case Strategy::macro_recall:
        a[j] = 1.0 / p;
        break;
      case Strategy::balanced_accuracy:
        a[j] = 1.0 / (2.0 * p) + 1.0 / (2.0 * (1.0 - p));
        b[j] = -1.0 / (2.0 * (1.0 - p));
        break;
      case Strategy::power_law:
        a[j] = std::pow(p, -s.beta);
        break;
      case Strategy::log_weight:
        a[j] = -std::log(p);
        break;
    }
  }
  return AffineTopK(std::move(a), std::move(b), k);
}

// p_j = (count_j + add) / (n + 2 add)
inline PriorVector estimate_priors(const LabelMatrix& labels, double add_count = 1.0) {
  if (labels.num_rows() == 0) throw InvalidInput("cannot estimate priors from an empty label matrix");
  if (!(add_count >= 0.0)) throw InvalidInput("smoothing count must be nonnegative");
  std::vector<double> counts(labels.num_labels(), 0.0);
  for (std::size_t i = 0; i < labels.num_rows(); ++i)
    for (auto j : labels.row(i)) counts[j] += 1.0;
  const double denom = static_cast<double>(labels.num_rows()) + 2.0 * add_count;
  for (auto& c : counts) c = (c + add_count) / denom;
  return PriorVector(std::move(counts));
}

}  // namespace macrok
