#pragma once

// Binary confusion-matrix measures, their analytic gradients, macro/micro
// aggregation over labels, and the "at least as good as" partial order.
//
// All gradients use the (tn, fp; fn, tp) layout of BinaryGain. Every
// denominator factor receives the smoothing constant eps, and values are
// clamped to [0, 1] after smoothing. Gradients are of the unclamped formula.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdlib>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "macrok/core.hpp"
#include "macrok/error.hpp"

namespace macrok {

enum class Measure {
  accuracy,
  precision,
  recall,
  balanced_accuracy,
  f_beta,
  g_mean,
  jaccard,
  auc,
  instance_precision,
  mixed,
};

struct SmoothingConfig {
  double eps = 1e-9;
};

struct MetricId {
  Measure measure = Measure::accuracy;
  double beta = 1.0;                 // f_beta, or the inner f_beta of a mixed metric
  double lambda = 0.0;               // mixed only
  Measure inner = Measure::f_beta;   // mixed only

  static MetricId of(Measure m) { return MetricId{m}; }
  static MetricId f_beta_of(double beta) { return MetricId{Measure::f_beta, beta}; }
  static MetricId f1() { return f_beta_of(1.0); }
  static MetricId mixed_of(double lambda, const MetricId& inner_metric) {
    MetricId id{Measure::mixed, inner_metric.beta, lambda, inner_metric.measure};
    id.validate();
    return id;
  }

  bool is_binary() const { return measure != Measure::instance_precision && measure != Measure::mixed; }
  MetricId inner_metric() const { return MetricId{inner, beta}; }

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw UnsupportedMetric("f-beta requires beta > 0");
    if (measure == Measure::mixed) {
      if (!(lambda >= 0.0 && lambda <= 1.0)) throw UnsupportedMetric("mixed metric requires lambda in [0,1]");
      if (inner == Measure::mixed || inner == Measure::instance_precision)
        throw UnsupportedMetric("mixed metric must nest a binary macro measure");
    }
  }

  friend bool operator==(const MetricId&, const MetricId&) = default;
};

namespace detail {

inline std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::string binary_name(Measure m, double beta) {
  switch (m) {
    case Measure::accuracy: return "accuracy";
    case Measure::precision: return "precision";
    case Measure::recall: return "recall";
    case Measure::balanced_accuracy: return "bacc";
    case Measure::f_beta: return beta == 1.0 ? "f1" : "fbeta:" + format_number(beta);
    case Measure::g_mean: return "gmean";
    case Measure::jaccard: return "jaccard";
    case Measure::auc: return "auc";
    case Measure::instance_precision: return "instp";
    case Measure::mixed: break;
  }
  return "mixed";
}

inline double parse_real(std::string_view text, std::string_view what) {
  std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ParseError("invalid " + std::string(what) + ": '" + s + "'");
  return v;
}

}  // namespace detail

// CLI spelling: accuracy, precision, recall, bacc, f1, fbeta:<b>, gmean,
// jaccard, auc, instp, mixed:<lambda>:<inner>.
inline std::string metric_name(const MetricId& id) {
  if (id.measure == Measure::mixed)
    return "mixed:" + detail::format_number(id.lambda) + ":" + detail::binary_name(id.inner, id.beta);
  return detail::binary_name(id.measure, id.beta);
}

inline MetricId parse_metric(std::string_view text) {
  if (text == "accuracy") return MetricId::of(Measure::accuracy);
  if (text == "precision") return MetricId::of(Measure::precision);
  if (text == "recall") return MetricId::of(Measure::recall);
  if (text == "bacc") return MetricId::of(Measure::balanced_accuracy);
  if (text == "f1") return MetricId::f1();
  if (text == "gmean") return MetricId::of(Measure::g_mean);
  if (text == "jaccard") return MetricId::of(Measure::jaccard);
  if (text == "auc") return MetricId::of(Measure::auc);
  if (text == "instp") return MetricId::of(Measure::instance_precision);
  if (text.starts_with("fbeta:")) {
    const double beta = detail::parse_real(text.substr(6), "beta");
    if (!(beta > 0.0)) throw ParseError("beta must be positive");
    return MetricId::f_beta_of(beta);
  }
  if (text.starts_with("mixed:")) {
    const auto rest = text.substr(6);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw ParseError("mixed metric needs the form mixed:<lambda>:<inner>");
    const double lambda = detail::parse_real(rest.substr(0, colon), "lambda");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParseError("lambda must lie in [0,1]");
    const MetricId inner = parse_metric(rest.substr(colon + 1));
    if (!inner.is_binary()) throw ParseError("mixed metric must nest a binary measure");
    return MetricId::mixed_of(lambda, inner);
  }
  throw ParseError("unknown metric '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

inline double binary_value(const MetricId& id, const BinaryConfusion& c, const SmoothingConfig& s = {}) {
  const double e = s.eps;
  const double tn = c.tn, fp = c.fp, fn = c.fn, tp = c.tp;
  double v = 0.0;
  switch (id.measure) {
    case Measure::accuracy:
      v = tn + tp;
      break;
    case Measure::precision:
      v = tp / (tp + fp + e);
      break;
    case Measure::recall:
      v = tp / (tp + fn + e);
      break;
    case Measure::balanced_accuracy:
      v = tp / (2.0 * (tp + fn + e)) + tn / (2.0 * (tn + fp + e));
      break;
    case Measure::f_beta: {
      const double b2 = id.beta * id.beta;
      v = (1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn + fp + e);
      break;
    }
    case Measure::g_mean:
      v = std::sqrt(std::max(0.0, tp * tn / ((tp + fn + e) * (tn + fp + e))));
      break;
    case Measure::jaccard:
      v = tp / (tp + fp + fn + e);
      break;
    case Measure::auc:
      v = (2.0 * tp * tn + tp * fp + fn * tn) / (2.0 * (tp + fn + e) * (fp + tn + e));
      break;
    case Measure::instance_precision:
    case Measure::mixed:
      throw NotABinaryMeasure(metric_name(id) + " is not a binary confusion-matrix measure");
  }
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, 0.0, 1.0);
}

inline BinaryGain binary_gradient(const MetricId& id, const BinaryConfusion& c, const SmoothingConfig& s = {}) {
  const double e = s.eps;
  const double tn = c.tn, fp = c.fp, fn = c.fn, tp = c.tp;
  switch (id.measure) {
    case Measure::accuracy:
      return {1.0, 0.0, 0.0, 1.0};
    case Measure::precision: {
      const double d = tp + fp + e;
      return {0.0, -tp / (d * d), 0.0, (fp + e) / (d * d)};
    }
    case Measure::recall: {
      const double d = tp + fn + e;
      return {0.0, 0.0, -tp / (d * d), (fn + e) / (d * d)};
    }
    case Measure::balanced_accuracy: {
      const double p = tp + fn + e;
      const double n = tn + fp + e;
      return {(fp + e) / (2.0 * n * n), -tn / (2.0 * n * n), -tp / (2.0 * p * p), (fn + e) / (2.0 * p * p)};
    }
    case Measure::f_beta: {
      const double b2 = id.beta * id.beta;
      const double w = 1.0 + b2;
      const double d = w * tp + b2 * fn + fp + e;
      const double d2 = d * d;
      return {0.0, -w * tp / d2, -w * tp * b2 / d2, w * (b2 * fn + fp + e) / d2};
    }
    case Measure::g_mean: {
      const double p = tp + fn + e;
      const double n = tn + fp + e;
      const double r = tp * tn / (p * n);
      // sqrt is not differentiable at zero; keep the slope finite there
      const double g = std::max(std::sqrt(std::max(r, 0.0)), std::max(e, 1e-12));
      const double h = 1.0 / (2.0 * g);
      return {h * tp * (fp + e) / (p * n * n), -h * tp * tn / (p * n * n), -h * tp * tn / (p * p * n),
              h * tn * (fn + e) / (p * p * n)};
    }
    case Measure::jaccard: {
      const double d = tp + fp + fn + e;
      const double d2 = d * d;
      return {0.0, -tp / d2, -tp / d2, (fp + fn + e) / d2};
    }
    case Measure::auc: {
      const double p = tp + fn + e;
      const double n = fp + tn + e;
      const double num = 2.0 * tp * tn + tp * fp + fn * tn;
      const double den = 2.0 * p * n;
      const double den2 = den * den;
      auto quotient = [&](double dnum, double dden) { return (dnum * den - num * dden) / den2; };
      return {quotient(2.0 * tp + fn, 2.0 * p), quotient(tp, 2.0 * p), quotient(tn, 2.0 * n),
              quotient(2.0 * tn + fp, 2.0 * n)};
    }
    case Measure::instance_precision:
    case Measure::mixed:
      break;
  }
  throw NotABinaryMeasure(metric_name(id) + " is not a binary confusion-matrix measure");
}

// ---------------------------------------------------------------------------
// Aggregations over the labels of a confusion tensor.

inline double instance_precision_value(const ConfusionTensor& c) {
  double s = 0.0;
  for (const auto& cj : c.labels()) s += cj.tp;
  return s / static_cast<double>(c.k());
}

inline double macro_value(const MetricId& id, const ConfusionTensor& c, const SmoothingConfig& s = {}) {
  if (id.measure == Measure::instance_precision) return instance_precision_value(c);
  if (id.measure == Measure::mixed)
    return (1.0 - id.lambda) * instance_precision_value(c) + id.lambda * macro_value(id.inner_metric(), c, s);
  double total = 0.0;
  for (const auto& cj : c.labels()) total += binary_value(id, cj, s);
  return total / static_cast<double>(c.num_labels());
}

inline GainTensor macro_gradient(const MetricId& id, const ConfusionTensor& c, const SmoothingConfig& s = {}) {
  const std::size_t m = c.num_labels();
  GainTensor g{std::vector<BinaryGain>(m)};
  if (id.measure == Measure::instance_precision) {
    const double w = 1.0 / static_cast<double>(c.k());
    for (auto& gj : g.per_label) gj.tp = w;
    return g;
  }
  if (id.measure == Measure::mixed) {
    const GainTensor inst = macro_gradient(MetricId::of(Measure::instance_precision), c, s);
    const GainTensor macro = macro_gradient(id.inner_metric(), c, s);
    for (std::size_t j = 0; j < m; ++j) {
      g[j] = (1.0 - id.lambda) * inst[j];
      g[j] += id.lambda * macro[j];
    }
    return g;
  }
  const double w = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) g[j] = w * binary_gradient(id, c[j], s);
  return g;
}

// Binary measure of the weighted entrywise average of the per-label matrices.
inline double micro_value(const MetricId& id, const ConfusionTensor& c, std::span<const double> weights,
                          const SmoothingConfig& s = {}) {
  if (weights.size() != c.num_labels()) throw ShapeError("micro weights must have one entry per label");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidWeights("micro weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidWeights("micro weights must sum to 1");
  BinaryConfusion avg;
  for (std::size_t j = 0; j < weights.size(); ++j) avg += weights[j] * c[j];
  return binary_value(id, avg, s);
}

inline double micro_value(const MetricId& id, const ConfusionTensor& c, const SmoothingConfig& s = {}) {
  const std::vector<double> w(c.num_labels(), 1.0 / static_cast<double>(c.num_labels()));
  return micro_value(id, c, w, s);
}

// ---------------------------------------------------------------------------
// Partial order: better moves mass from fp to tn and from fn to tp.

inline bool is_at_least_as_good(const BinaryConfusion& better, const BinaryConfusion& worse, double tol = 1e-9) {
  const double gained_tn = better.tn - worse.tn;
  const double gained_tp = better.tp - worse.tp;
  return gained_tn >= -tol && gained_tp >= -tol && std::abs((better.fp - worse.fp) + gained_tn) <= tol &&
         std::abs((better.fn - worse.fn) + gained_tp) <= tol;
}

inline bool tensor_at_least_as_good(const ConfusionTensor& better, const ConfusionTensor& worse, double tol = 1e-9) {
  if (better.num_labels() != worse.num_labels()) throw ShapeError("confusion tensors differ in label count");
  for (std::size_t j = 0; j < better.num_labels(); ++j)
    if (!is_at_least_as_good(better[j], worse[j], tol)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Objectives over confusion tensors, as consumed by the optimizers.

template <typename T>
concept Objective = requires(const T& f, const ConfusionTensor& c) {
  { f.value(c) } -> std::convertible_to<double>;
  { f.gradient(c) } -> std::same_as<GainTensor>;
};

struct MacroObjective {
  MetricId metric;
  SmoothingConfig smoothing;

  MacroObjective(MetricId id, SmoothingConfig s = {}) : metric(id), smoothing(s) { metric.validate(); }

  double value(const ConfusionTensor& c) const { return macro_value(metric, c, smoothing); }
  GainTensor gradient(const ConfusionTensor& c) const { return macro_gradient(metric, c, smoothing); }
};

}  // namespace macrok
