#pragma once

// Domain types for budgeted multi-label prediction: confusion tensors,
// marginal and label matrices, affine top-k classifiers and their mixtures,
// plus the top-k selector and Madow's exact-budget sampler.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "macrok/error.hpp"
#include "macrok/rng.hpp"

namespace macrok {

using LabelIndex = std::uint32_t;
using KHot = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Binary confusion matrix, stored as probability mass.
// Layout is (tn, fp; fn, tp): row = true label, column = prediction.

struct BinaryConfusion {
  double tn = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double tp = 0.0;

  double total() const { return tn + fp + fn + tp; }
  double predicted_positive() const { return fp + tp; }
  double actual_positive() const { return fn + tp; }

  bool is_valid(double tol = 1e-9) const {
    return tn >= -tol && fp >= -tol && fn >= -tol && tp >= -tol && std::abs(total() - 1.0) <= tol;
  }

  BinaryConfusion& operator+=(const BinaryConfusion& o) {
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    tp += o.tp;
    return *this;
  }
  friend BinaryConfusion operator+(BinaryConfusion a, const BinaryConfusion& b) { return a += b; }
  friend BinaryConfusion operator*(double s, const BinaryConfusion& c) {
    return {s * c.tn, s * c.fp, s * c.fn, s * c.tp};
  }
  friend bool operator==(const BinaryConfusion&, const BinaryConfusion&) = default;
};

// Partial derivatives of a binary measure, same (tn, fp; fn, tp) layout.
struct BinaryGain {
  double tn = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double tp = 0.0;

  BinaryGain& operator+=(const BinaryGain& o) {
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    tp += o.tp;
    return *this;
  }
  friend BinaryGain operator*(double s, const BinaryGain& g) { return {s * g.tn, s * g.fp, s * g.fn, s * g.tp}; }
  friend bool operator==(const BinaryGain&, const BinaryGain&) = default;
};

struct GainTensor {
  std::vector<BinaryGain> per_label;

  std::size_t num_labels() const { return per_label.size(); }
  const BinaryGain& operator[](std::size_t j) const { return per_label[j]; }
  BinaryGain& operator[](std::size_t j) { return per_label[j]; }

  bool is_finite() const {
    return std::all_of(per_label.begin(), per_label.end(), [](const BinaryGain& g) {
      return std::isfinite(g.tn) && std::isfinite(g.fp) && std::isfinite(g.fn) && std::isfinite(g.tp);
    });
  }
};

// Per-label confusion matrices of a classifier that predicts exactly k labels.
class ConfusionTensor {
 public:
  ConfusionTensor() = default;
  ConfusionTensor(std::vector<BinaryConfusion> per_label, std::size_t k) : per_label_(std::move(per_label)), k_(k) {
    if (per_label_.empty()) throw ShapeError("confusion tensor needs at least one label");
  }

  std::size_t num_labels() const { return per_label_.size(); }
  std::size_t k() const { return k_; }
  const BinaryConfusion& operator[](std::size_t j) const { return per_label_[j]; }
  std::span<const BinaryConfusion> labels() const { return per_label_; }

  // Sum over labels of fp + tp; equals k for exactly-k predictions.
  double predicted_mass() const {
    double s = 0.0;
    for (const auto& c : per_label_) s += c.predicted_positive();
    return s;
  }
  bool satisfies_budget(double tol = 1e-6) const {
    return std::abs(predicted_mass() - static_cast<double>(k_)) <= tol;
  }
  bool is_valid(double tol = 1e-9) const {
    return std::all_of(per_label_.begin(), per_label_.end(), [tol](const auto& c) { return c.is_valid(tol); });
  }

  friend bool operator==(const ConfusionTensor&, const ConfusionTensor&) = default;

 private:
  std::vector<BinaryConfusion> per_label_;
  std::size_t k_ = 0;
};

// (1 - alpha) * from + alpha * to
inline ConfusionTensor mix(const ConfusionTensor& from, const ConfusionTensor& to, double alpha) {
  if (from.num_labels() != to.num_labels()) throw ShapeError("cannot mix confusion tensors of different label counts");
  std::vector<BinaryConfusion> out(from.num_labels());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto& a = from[j];
    const auto& b = to[j];
    out[j] = {(1.0 - alpha) * a.tn + alpha * b.tn, (1.0 - alpha) * a.fp + alpha * b.fp,
              (1.0 - alpha) * a.fn + alpha * b.fn, (1.0 - alpha) * a.tp + alpha * b.tp};
  }
  return ConfusionTensor(std::move(out), from.k());
}

// ---------------------------------------------------------------------------
// Conditional label marginals, CSR storage. Labels absent from a row have
// marginal exactly zero.

class MarginalMatrix {
 public:
  struct RowView {
    std::span<const LabelIndex> labels;
    std::span<const double> values;

    std::size_t nnz() const { return labels.size(); }
    double at(LabelIndex j) const {
      auto it = std::lower_bound(labels.begin(), labels.end(), j);
      if (it == labels.end() || *it != j) return 0.0;
      return values[static_cast<std::size_t>(it - labels.begin())];
    }
  };

  MarginalMatrix() = default;

  MarginalMatrix(std::size_t num_labels, std::vector<std::size_t> row_ptr, std::vector<LabelIndex> indices,
                 std::vector<double> values, std::optional<std::size_t> truncation = std::nullopt)
      : m_(num_labels),
        row_ptr_(std::move(row_ptr)),
        indices_(std::move(indices)),
        values_(std::move(values)),
        truncation_(truncation) {
    if (row_ptr_.empty() || row_ptr_.front() != 0 || row_ptr_.back() != indices_.size() ||
        indices_.size() != values_.size())
      throw ShapeError("inconsistent CSR layout for marginal matrix");
    for (std::size_t i = 0; i + 1 < row_ptr_.size(); ++i) {
      if (row_ptr_[i] > row_ptr_[i + 1]) throw ShapeError("row pointers must be non-decreasing");
      const std::size_t len = row_ptr_[i + 1] - row_ptr_[i];
      if (truncation_ && len > *truncation_)
        throw InvalidInput("row " + std::to_string(i) + " exceeds truncation " + std::to_string(*truncation_));
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        if (indices_[p] >= m_) throw InvalidInput("label index out of range in row " + std::to_string(i));
        if (p > row_ptr_[i] && indices_[p] <= indices_[p - 1])
          throw InvalidInput("row " + std::to_string(i) + " is not strictly sorted by label index");
        if (!(values_[p] >= 0.0 && values_[p] <= 1.0))
          throw InvalidInput("marginal outside [0,1] in row " + std::to_string(i));
      }
    }
  }

  static MarginalMatrix from_dense(const std::vector<std::vector<double>>& rows, std::size_t num_labels) {
    std::vector<std::size_t> ptr{0};
    std::vector<LabelIndex> idx;
    std::vector<double> val;
    for (const auto& r : rows) {
      if (r.size() != num_labels) throw ShapeError("dense marginal row has wrong length");
      for (std::size_t j = 0; j < r.size(); ++j) {
        idx.push_back(static_cast<LabelIndex>(j));
        val.push_back(r[j]);
      }
      ptr.push_back(idx.size());
    }
    return MarginalMatrix(num_labels, std::move(ptr), std::move(idx), std::move(val));
  }

  std::size_t num_rows() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t num_labels() const { return m_; }
  std::size_t nnz() const { return indices_.size(); }
  std::optional<std::size_t> truncation() const { return truncation_; }

  RowView row(std::size_t i) const {
    const std::size_t b = row_ptr_[i];
    const std::size_t e = row_ptr_[i + 1];
    return {std::span<const LabelIndex>(indices_.data() + b, e - b), std::span<const double>(values_.data() + b, e - b)};
  }

  std::vector<double> dense_row(std::size_t i) const {
    std::vector<double> out(m_, 0.0);
    const auto r = row(i);
    for (std::size_t p = 0; p < r.nnz(); ++p) out[r.labels[p]] = r.values[p];
    return out;
  }

  // Keeps the kprime largest marginals of every row; ties go to the smaller index.
  MarginalMatrix truncated(std::size_t kprime) const {
    if (kprime == 0) throw InvalidInput("truncation must be positive");
    std::vector<std::size_t> ptr{0};
    std::vector<LabelIndex> idx;
    std::vector<double> val;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < num_rows(); ++i) {
      const auto r = row(i);
      order.resize(r.nnz());
      std::iota(order.begin(), order.end(), std::size_t{0});
      if (r.nnz() > kprime) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kprime), order.end(),
                         [&](std::size_t x, std::size_t y) {
                           if (r.values[x] != r.values[y]) return r.values[x] > r.values[y];
                           return r.labels[x] < r.labels[y];
                         });
        order.resize(kprime);
        std::sort(order.begin(), order.end());
      }
      for (std::size_t p : order) {
        idx.push_back(r.labels[p]);
        val.push_back(r.values[p]);
      }
      ptr.push_back(idx.size());
    }
    const std::size_t t = truncation_ ? std::min(*truncation_, kprime) : kprime;
    return MarginalMatrix(m_, std::move(ptr), std::move(idx), std::move(val), t);
  }

  MarginalMatrix subset(std::span<const std::size_t> rows) const {
    std::vector<std::size_t> ptr{0};
    std::vector<LabelIndex> idx;
    std::vector<double> val;
    for (std::size_t i : rows) {
      const auto r = row(i);
      idx.insert(idx.end(), r.labels.begin(), r.labels.end());
      val.insert(val.end(), r.values.begin(), r.values.end());
      ptr.push_back(idx.size());
    }
    return MarginalMatrix(m_, std::move(ptr), std::move(idx), std::move(val), truncation_);
  }

  friend bool operator==(const MarginalMatrix&, const MarginalMatrix&) = default;

 private:
  std::size_t m_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<LabelIndex> indices_;
  std::vector<double> values_;
  std::optional<std::size_t> truncation_;
};

// ---------------------------------------------------------------------------
// Sparse binary matrix of sorted label sets; used for ground truth and, with a
// fixed row length k, for predictions.

class LabelMatrix {
 public:
  LabelMatrix() = default;

  // Rows must already be strictly increasing and in range.
  LabelMatrix(std::size_t num_labels, const std::vector<std::vector<LabelIndex>>& rows) : m_(num_labels) {
    row_ptr_.reserve(rows.size() + 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      for (std::size_t p = 0; p < r.size(); ++p) {
        if (r[p] >= m_) throw InvalidInput("label index out of range in row " + std::to_string(i));
        if (p > 0 && r[p] <= r[p - 1]) throw InvalidInput("row " + std::to_string(i) + " is not strictly increasing");
      }
      indices_.insert(indices_.end(), r.begin(), r.end());
      row_ptr_.push_back(indices_.size());
    }
  }

  // Sorts and deduplicates each row first.
  static LabelMatrix from_unsorted(std::size_t num_labels, std::vector<std::vector<LabelIndex>> rows) {
    for (auto& r : rows) {
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
    }
    return LabelMatrix(num_labels, rows);
  }

  std::size_t num_rows() const { return row_ptr_.size() - 1; }
  std::size_t num_labels() const { return m_; }
  std::size_t nnz() const { return indices_.size(); }

  std::span<const LabelIndex> row(std::size_t i) const {
    return {indices_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  LabelMatrix subset(std::span<const std::size_t> rows) const {
    std::vector<std::vector<LabelIndex>> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) {
      const auto r = row(i);
      out.emplace_back(r.begin(), r.end());
    }
    return LabelMatrix(m_, out);
  }

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::size_t m_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<LabelIndex> indices_;
};

// n rows of exactly k sorted label indices.
class PredictionMatrix {
 public:
  PredictionMatrix() = default;
  PredictionMatrix(std::size_t num_labels, std::size_t k) : m_(num_labels), k_(k) {}

  static PredictionMatrix from_rows(std::size_t num_labels, std::size_t k,
                                    const std::vector<std::vector<LabelIndex>>& rows) {
    PredictionMatrix out(num_labels, k);
    out.indices_.reserve(rows.size() * k);
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_row(rows[i], i);
    return out;
  }

  static PredictionMatrix from_khot(std::size_t k, const std::vector<KHot>& rows) {
    const std::size_t m = rows.empty() ? 0 : rows.front().size();
    PredictionMatrix out(m, k);
    std::vector<LabelIndex> r;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m) throw ShapeError("k-hot rows have inconsistent lengths");
      r.clear();
      for (std::size_t j = 0; j < m; ++j)
        if (rows[i][j]) r.push_back(static_cast<LabelIndex>(j));
      out.push_row(r, i);
    }
    return out;
  }

  void push_row(std::span<const LabelIndex> r, std::size_t row_number) {
    if (r.size() != k_)
      throw BudgetViolation("prediction row " + std::to_string(row_number) + " has " + std::to_string(r.size()) +
                            " labels, budget is " + std::to_string(k_));
    for (std::size_t p = 0; p < r.size(); ++p) {
      if (r[p] >= m_) throw InvalidInput("predicted label out of range in row " + std::to_string(row_number));
      if (p > 0 && r[p] <= r[p - 1])
        throw InvalidInput("prediction row " + std::to_string(row_number) + " is not strictly increasing");
    }
    indices_.insert(indices_.end(), r.begin(), r.end());
  }

  std::size_t num_rows() const { return k_ == 0 ? 0 : indices_.size() / k_; }
  std::size_t num_labels() const { return m_; }
  std::size_t k() const { return k_; }
  std::span<const LabelIndex> row(std::size_t i) const { return {indices_.data() + i * k_, k_}; }
  KHot khot_row(std::size_t i) const {
    KHot out(m_, 0);
    for (auto j : row(i)) out[j] = 1;
    return out;
  }

  friend bool operator==(const PredictionMatrix&, const PredictionMatrix&) = default;

 private:
  std::size_t m_ = 0;
  std::size_t k_ = 0;
  std::vector<LabelIndex> indices_;
};

// ---------------------------------------------------------------------------
// Classifiers.

// Predicts topk(a .* eta + b).
struct AffineTopK {
  std::vector<double> a;
  std::vector<double> b;
  std::size_t k = 1;

  AffineTopK() = default;
  AffineTopK(std::vector<double> slope, std::vector<double> intercept, std::size_t budget)
      : a(std::move(slope)), b(std::move(intercept)), k(budget) {
    validate();
  }

  std::size_t num_labels() const { return a.size(); }

  void validate() const {
    if (a.size() != b.size()) throw ShapeError("affine classifier slope and intercept lengths differ");
    if (k < 1 || k > a.size()) throw InvalidBudget("budget k must satisfy 1 <= k <= m");
    for (std::size_t j = 0; j < a.size(); ++j)
      if (!std::isfinite(a[j]) || !std::isfinite(b[j])) throw InvalidInput("affine coefficients must be finite");
  }

  friend bool operator==(const AffineTopK&, const AffineTopK&) = default;
};

class RandomizedClassifier {
 public:
  struct Component {
    AffineTopK classifier;
    double weight = 0.0;
    friend bool operator==(const Component&, const Component&) = default;
  };

  RandomizedClassifier() = default;
  explicit RandomizedClassifier(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw InvalidClassifier("randomized classifier needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
      c.classifier.validate();
      if (c.classifier.k != k() || c.classifier.num_labels() != num_labels())
        throw InvalidClassifier("mixture components must share k and m");
      if (!(c.weight >= 0.0)) throw InvalidClassifier("mixture weights must be nonnegative");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidClassifier("mixture weights must sum to 1");
  }

  static RandomizedClassifier single(AffineTopK clf) { return RandomizedClassifier({{std::move(clf), 1.0}}); }

  std::size_t size() const { return components_.size(); }
  std::size_t k() const { return components_.front().classifier.k; }
  std::size_t num_labels() const { return components_.front().classifier.num_labels(); }
  std::span<const Component> components() const { return components_; }
  const Component& operator[](std::size_t i) const { return components_[i]; }

  friend bool operator==(const RandomizedClassifier&, const RandomizedClassifier&) = default;

 private:
  std::vector<Component> components_;
};

// ---------------------------------------------------------------------------
// Finite distribution over instances, each described by its marginal vector.

class DiscreteDistribution {
 public:
  struct Point {
    double weight = 0.0;
    std::vector<double> marginals;
  };

  DiscreteDistribution() = default;
  DiscreteDistribution(std::vector<Point> points, double tol = 1e-12) : points_(std::move(points)) {
    if (points_.empty()) throw InvalidDistribution("distribution needs at least one point");
    const std::size_t m = points_.front().marginals.size();
    if (m == 0) throw InvalidDistribution("distribution needs at least one label");
    double total = 0.0;
    for (const auto& p : points_) {
      if (p.marginals.size() != m) throw InvalidDistribution("points have inconsistent label counts");
      if (!(p.weight >= 0.0)) throw InvalidDistribution("point weights must be nonnegative");
      for (double v : p.marginals)
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidDistribution("marginals must lie in [0,1]");
      total += p.weight;
    }
    if (std::abs(total - 1.0) > tol) throw InvalidDistribution("point weights must sum to 1");
  }

  std::size_t num_points() const { return points_.size(); }
  std::size_t num_labels() const { return points_.front().marginals.size(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point> points() const { return points_; }

  // Probability of each label being relevant.
  std::vector<double> priors() const {
    std::vector<double> p(num_labels(), 0.0);
    for (const auto& pt : points_)
      for (std::size_t j = 0; j < p.size(); ++j) p[j] += pt.weight * pt.marginals[j];
    return p;
  }

 private:
  std::vector<Point> points_;
};

// ---------------------------------------------------------------------------
// Top-k selection. Ties go to the smaller label index.

namespace detail {

struct ScoredLabel {
  double score;
  LabelIndex label;
};

inline bool ranks_before(const ScoredLabel& x, const ScoredLabel& y) {
  if (x.score != y.score) return x.score > y.score;
  return x.label < y.label;
}

// Leaves the k best candidates in out, sorted by label index.
inline void select_top(std::vector<ScoredLabel>& candidates, std::size_t k, std::vector<LabelIndex>& out) {
  if (candidates.size() > k)
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                     ranks_before);
  out.clear();
  for (std::size_t p = 0; p < k; ++p) out.push_back(candidates[p].label);
  std::sort(out.begin(), out.end());
}

}  // namespace detail

inline std::vector<LabelIndex> topk_indices(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) throw InvalidBudget("budget k must satisfy 1 <= k <= m");
  std::vector<detail::ScoredLabel> cand(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!std::isfinite(scores[j])) throw InvalidInput("non-finite score at label " + std::to_string(j));
    cand[j] = {scores[j], static_cast<LabelIndex>(j)};
  }
  std::vector<LabelIndex> out;
  detail::select_top(cand, k, out);
  return out;
}

inline KHot topk_select(std::span<const double> scores, std::size_t k) {
  KHot out(scores.size(), 0);
  for (auto j : topk_indices(scores, k)) out[j] = 1;
  return out;
}

// Applies an AffineTopK to sparse rows in O(nnz + k) expected time per row.
// Absent labels score b_j, so only the k best absent labels by intercept
// can ever be selected.
class AffinePredictor {
 public:
  explicit AffinePredictor(const AffineTopK& clf) : clf_(clf), present_(clf.num_labels(), 0) {
    clf.validate();
    intercept_order_.resize(clf.num_labels());
    std::iota(intercept_order_.begin(), intercept_order_.end(), LabelIndex{0});
    std::sort(intercept_order_.begin(), intercept_order_.end(), [&](LabelIndex x, LabelIndex y) {
      if (clf.b[x] != clf.b[y]) return clf.b[x] > clf.b[y];
      return x < y;
    });
  }

  const AffineTopK& classifier() const { return clf_; }

  void predict(const MarginalMatrix::RowView& row, std::vector<LabelIndex>& out) {
    const auto& a = clf_.a;
    const auto& b = clf_.b;
    const std::size_t k = clf_.k;
    cand_.clear();
    for (std::size_t p = 0; p < row.nnz(); ++p) {
      const LabelIndex j = row.labels[p];
      present_[j] = 1;
      cand_.push_back({a[j] * row.values[p] + b[j], j});
    }
    std::size_t taken = 0;
    for (std::size_t q = 0; q < intercept_order_.size() && taken < k; ++q) {
      const LabelIndex j = intercept_order_[q];
      if (present_[j]) continue;
      cand_.push_back({a[j] * 0.0 + b[j], j});
      ++taken;
    }
    for (std::size_t p = 0; p < row.nnz(); ++p) present_[row.labels[p]] = 0;
    detail::select_top(cand_, k, out);
  }

 private:
  AffineTopK clf_;
  std::vector<LabelIndex> intercept_order_;
  std::vector<std::uint8_t> present_;
  std::vector<detail::ScoredLabel> cand_;
};

inline KHot predict_deterministic(const AffineTopK& clf, std::span<const double> marginal_row) {
  if (marginal_row.size() != clf.num_labels()) throw ShapeError("marginal row length differs from classifier");
  std::vector<double> scores(marginal_row.size());
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = clf.a[j] * marginal_row[j] + clf.b[j];
  return topk_select(scores, clf.k);
}

inline KHot predict_deterministic(const AffineTopK& clf, const MarginalMatrix::RowView& row) {
  AffinePredictor pred(clf);
  std::vector<LabelIndex> idx;
  pred.predict(row, idx);
  KHot out(clf.num_labels(), 0);
  for (auto j : idx) out[j] = 1;
  return out;
}

inline PredictionMatrix predict_all(const AffineTopK& clf, const MarginalMatrix& marginals) {
  if (marginals.num_labels() != clf.num_labels()) throw ShapeError("marginal matrix label count differs from classifier");
  AffinePredictor pred(clf);
  PredictionMatrix out(clf.num_labels(), clf.k);
  std::vector<LabelIndex> idx;
  for (std::size_t i = 0; i < marginals.num_rows(); ++i) {
    pred.predict(marginals.row(i), idx);
    out.push_row(idx, i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Madow's systematic sampling: exactly k labels with inclusion
// probabilities pi, one uniform draw, one pass over the labels.

inline std::vector<LabelIndex> madow_sample_indices(std::span<const double> pi, std::size_t k, Rng& rng) {
  const std::size_t m = pi.size();
  if (k < 1 || k > m) throw InvalidBudget("budget k must satisfy 1 <= k <= m");
  double total = 0.0;
  for (double v : pi) {
    if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) throw InvalidMarginals("inclusion probabilities must lie in [0,1]");
    total += v;
  }
  if (std::abs(total - static_cast<double>(k)) > 1e-6)
    throw InvalidMarginals("inclusion probabilities sum to " + std::to_string(total) + ", expected " +
                           std::to_string(k));
  const double scale = static_cast<double>(k) / total;

  const double u = rng.uniform_open_closed();
  std::vector<LabelIndex> out;
  out.reserve(k);
  double cumulative = 0.0;
  std::size_t i = 0;
  for (std::size_t j = 0; j < m && i < k; ++j) {
    cumulative += std::clamp(pi[j] * scale, 0.0, 1.0);
    if (j + 1 == m) cumulative = static_cast<double>(k);
    // Each label owns the interval (cumulative_prev, cumulative]; a width of at
    // most one holds at most one of the points u, u+1, ..., u+k-1.
    if (u + static_cast<double>(i) <= cumulative) {
      out.push_back(static_cast<LabelIndex>(j));
      ++i;
    }
  }
  // Rounding can leave a point past the last selected interval; fill from the
  // highest unselected labels.
  for (std::size_t j = m; i < k && j-- > 0;) {
    if (!std::binary_search(out.begin(), out.end(), static_cast<LabelIndex>(j))) {
      out.push_back(static_cast<LabelIndex>(j));
      std::sort(out.begin(), out.end());
      ++i;
    }
  }
  return out;
}

inline KHot madow_sample(std::span<const double> pi, std::size_t k, Rng& rng) {
  KHot out(pi.size(), 0);
  for (auto j : madow_sample_indices(pi, k, rng)) out[j] = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Randomized classifiers.

inline std::size_t sample_component(const RandomizedClassifier& rclf, Rng& rng) {
  if (rclf.size() == 0) throw InvalidClassifier("empty mixture");
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < rclf.size(); ++i) {
    if (rclf[i].weight <= 0.0) continue;
    last_positive = i;
    cumulative += rclf[i].weight;
    if (u < cumulative) return i;
  }
  return last_positive;
}

template <typename Row>
KHot predict_randomized(const RandomizedClassifier& rclf, const Row& marginal_row, Rng& rng) {
  if (rclf.size() == 0) throw InvalidClassifier("empty mixture");
  return predict_deterministic(rclf[sample_component(rclf, rng)].classifier, marginal_row);
}

// Per-label inclusion probabilities of the mixture on one row.
inline std::vector<double> mixture_marginals(const RandomizedClassifier& rclf, const MarginalMatrix::RowView& row) {
  std::vector<double> pi(rclf.num_labels(), 0.0);
  std::vector<LabelIndex> idx;
  for (const auto& c : rclf.components()) {
    AffinePredictor pred(c.classifier);
    pred.predict(row, idx);
    for (auto j : idx) pi[j] += c.weight;
  }
  return pi;
}

// Per-instance sampling: each row draws its own mixture component.
inline PredictionMatrix sample_predictions(const RandomizedClassifier& rclf, const MarginalMatrix& marginals, Rng& rng) {
  std::vector<AffinePredictor> preds;
  preds.reserve(rclf.size());
  for (const auto& c : rclf.components()) preds.emplace_back(c.classifier);
  PredictionMatrix out(rclf.num_labels(), rclf.k());
  std::vector<LabelIndex> idx;
  for (std::size_t i = 0; i < marginals.num_rows(); ++i) {
    preds[sample_component(rclf, rng)].predict(marginals.row(i), idx);
    out.push_row(idx, i);
  }
  return out;
}

// Per-instance Madow realization of the mixture's inclusion probabilities.
inline PredictionMatrix sample_predictions_madow(const RandomizedClassifier& rclf, const MarginalMatrix& marginals,
                                                 Rng& rng) {
  PredictionMatrix out(rclf.num_labels(), rclf.k());
  for (std::size_t i = 0; i < marginals.num_rows(); ++i) {
    const auto pi = mixture_marginals(rclf, marginals.row(i));
    out.push_row(madow_sample_indices(pi, rclf.k(), rng), i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confusion tensors.

// Integer per-label counts; partial counts from disjoint instance blocks merge
// by addition, so partitioned computation is exact.
struct ConfusionCounts {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::int64_t> true_positive;
  std::vector<std::int64_t> predicted;
  std::vector<std::int64_t> relevant;

  ConfusionCounts() = default;
  ConfusionCounts(std::size_t m, std::size_t budget)
      : k(budget), true_positive(m, 0), predicted(m, 0), relevant(m, 0) {}

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    if (o.true_positive.size() != true_positive.size()) throw ShapeError("cannot merge counts of different shapes");
    n += o.n;
    for (std::size_t j = 0; j < true_positive.size(); ++j) {
      true_positive[j] += o.true_positive[j];
      predicted[j] += o.predicted[j];
      relevant[j] += o.relevant[j];
    }
    return *this;
  }

  ConfusionTensor tensor() const {
    if (n == 0) throw InvalidInput("confusion tensor of an empty sample");
    const double inv = 1.0 / static_cast<double>(n);
    const auto nn = static_cast<std::int64_t>(n);
    std::vector<BinaryConfusion> out(true_positive.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
      const std::int64_t tp = true_positive[j];
      const std::int64_t fp = predicted[j] - tp;
      const std::int64_t fn = relevant[j] - tp;
      const std::int64_t tn = nn - tp - fp - fn;
      out[j] = {static_cast<double>(tn) * inv, static_cast<double>(fp) * inv, static_cast<double>(fn) * inv,
                static_cast<double>(tp) * inv};
    }
    return ConfusionTensor(std::move(out), k);
  }
};

inline ConfusionCounts count_confusion(const PredictionMatrix& predictions, const LabelMatrix& labels,
                                       std::size_t begin, std::size_t end) {
  ConfusionCounts counts(labels.num_labels(), predictions.k());
  for (std::size_t i = begin; i < end; ++i) {
    const auto h = predictions.row(i);
    const auto y = labels.row(i);
    for (auto j : h) ++counts.predicted[j];
    for (auto j : y) ++counts.relevant[j];
    // both rows sorted: linear intersection
    std::size_t p = 0;
    std::size_t q = 0;
    while (p < h.size() && q < y.size()) {
      if (h[p] < y[q]) {
        ++p;
      } else if (y[q] < h[p]) {
        ++q;
      } else {
        ++counts.true_positive[h[p]];
        ++p;
        ++q;
      }
    }
  }
  counts.n = end - begin;
  return counts;
}

inline ConfusionTensor empirical_confusion(const PredictionMatrix& predictions, const LabelMatrix& labels) {
  if (predictions.num_rows() != labels.num_rows() || predictions.num_labels() != labels.num_labels())
    throw ShapeError("predictions and labels disagree in shape");
  return count_confusion(predictions, labels, 0, labels.num_rows()).tensor();
}

inline ConfusionTensor empirical_confusion(const std::vector<KHot>& predictions, std::size_t k,
                                           const LabelMatrix& labels) {
  return empirical_confusion(PredictionMatrix::from_khot(k, predictions), labels);
}

inline ConfusionTensor expected_confusion_randomized(const RandomizedClassifier& rclf, const MarginalMatrix& marginals,
                                                     const LabelMatrix& labels) {
  if (rclf.size() == 0) throw InvalidClassifier("empty mixture");
  if (marginals.num_rows() != labels.num_rows() || marginals.num_labels() != labels.num_labels() ||
      rclf.num_labels() != labels.num_labels())
    throw ShapeError("classifier, marginals and labels disagree in shape");
  std::vector<BinaryConfusion> acc(labels.num_labels());
  for (const auto& c : rclf.components()) {
    const auto t = empirical_confusion(predict_all(c.classifier, marginals), labels);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += c.weight * t[j];
  }
  return ConfusionTensor(std::move(acc), rclf.k());
}

// Population confusion over a discrete distribution. Assignment rows may be
// fractional (inclusion probabilities summing to k).
inline ConfusionTensor population_confusion_discrete(const std::vector<std::vector<double>>& assignment,
                                                     const DiscreteDistribution& dist, std::size_t k) {
  if (assignment.size() != dist.num_points()) throw ShapeError("assignment and distribution disagree in size");
  const std::size_t m = dist.num_labels();
  if (k < 1 || k > m) throw InvalidBudget("budget k must satisfy 1 <= k <= m");
  double total_weight = 0.0;
  for (const auto& p : dist.points()) total_weight += p.weight;
  if (std::abs(total_weight - 1.0) > 1e-9) throw InvalidDistribution("distribution weights must sum to 1");
  std::vector<BinaryConfusion> out(m);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto& h = assignment[i];
    const auto& pt = dist[i];
    if (h.size() != m) throw ShapeError("assignment row has wrong length");
    double row_sum = 0.0;
    for (double v : h) {
      if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) throw InvalidInput("assignment entries must lie in [0,1]");
      row_sum += v;
    }
    if (std::abs(row_sum - static_cast<double>(k)) > 1e-9)
      throw BudgetViolation("assignment row " + std::to_string(i) + " does not sum to k");
    for (std::size_t j = 0; j < m; ++j) {
      const double eta = pt.marginals[j];
      const double w = pt.weight;
      out[j].tn += w * (1.0 - eta) * (1.0 - h[j]);
      out[j].fp += w * (1.0 - eta) * h[j];
      out[j].fn += w * eta * (1.0 - h[j]);
      out[j].tp += w * eta * h[j];
    }
  }
  return ConfusionTensor(std::move(out), k);
}

}  // namespace macrok
