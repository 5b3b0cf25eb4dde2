#pragma once

// Text formats.
//
//   labels / predictions   first line "n m", then n lines of comma-separated
//                          label indices (possibly empty), optionally followed
//                          by whitespace and ignored feat:val tokens.
//   marginals              first line "n m" or "n m k'", then n lines of
//                          space-separated j:p pairs.
//   distributions          first line "n m", then n lines "weight eta_1 ... eta_m".
//   classifier             JSON document, see save_classifier.
//   report                 TSV (strategy, metric, mean, std) plus a JSON mirror.
//   trace                  TSV (iteration, objective, step, accepted).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "macrok/core.hpp"
#include "macrok/error.hpp"
#include "macrok/fw.hpp"

namespace macrok {

namespace io_detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t p = 0;
  while (p < line.size()) {
    while (p < line.size() && (line[p] == ' ' || line[p] == '\t')) ++p;
    const std::size_t b = p;
    while (p < line.size() && line[p] != ' ' && line[p] != '\t') ++p;
    if (p > b) out.push_back(line.substr(b, p - b));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if constexpr (std::is_floating_point_v<T>) {
    if (*b == '+') ++b;
  }
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }
  std::size_t line_no() const { return line_no_; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_no_, what); }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

struct Header {
  std::size_t n = 0;
  std::size_t m = 0;
  std::optional<std::size_t> extra;
};

inline Header read_header(LineReader& r, bool allow_extra) {
  std::string line;
  if (!r.next(line)) r.fail("missing header");
  const auto tok = split_ws(line);
  Header h;
  if (tok.size() < 2 || tok.size() > (allow_extra ? 3u : 2u)) r.fail("malformed header, expected 'n m'");
  if (!parse_number(tok[0], h.n) || !parse_number(tok[1], h.m)) r.fail("malformed header, expected 'n m'");
  if (h.m == 0) r.fail("label count must be positive");
  if (tok.size() == 3) {
    std::size_t e = 0;
    if (!parse_number(tok[2], e) || e == 0) r.fail("malformed truncation field in header");
    h.extra = e;
  }
  return h;
}

inline void expect_end(LineReader& r) {
  std::string line;
  if (r.next(line)) r.fail("more body lines than the header declares");
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ExitCode::contract_violation, "cannot write '" + path.string() + "'");
  return out;
}

inline std::string fmt_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Labels and predictions.

inline LabelMatrix read_labels(std::istream& in, const std::string& source = "<labels>") {
  io_detail::LineReader r(in, source);
  const auto h = io_detail::read_header(r, false);
  std::vector<std::vector<LabelIndex>> rows(h.n);
  std::string line;
  for (std::size_t i = 0; i < h.n; ++i) {
    if (!r.next(line)) r.fail("expected " + std::to_string(h.n) + " body lines, found " + std::to_string(i));
    const auto tok = io_detail::split_ws(line);
    if (tok.empty() || tok[0].find(':') != std::string_view::npos) continue;  // no labels, maybe features
    std::string_view labels = tok[0];
    std::size_t p = 0;
    while (p <= labels.size()) {
      std::size_t q = labels.find(',', p);
      if (q == std::string_view::npos) q = labels.size();
      std::size_t j = 0;
      if (!io_detail::parse_number(labels.substr(p, q - p), j)) r.fail("malformed label index");
      if (j >= h.m) r.fail("label index " + std::to_string(j) + " out of range");
      rows[i].push_back(static_cast<LabelIndex>(j));
      p = q + 1;
    }
  }
  io_detail::expect_end(r);
  return LabelMatrix::from_unsorted(h.m, std::move(rows));
}

inline LabelMatrix load_labels(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  return read_labels(in, path.string());
}

inline void write_label_rows(std::ostream& out, std::size_t m, std::size_t n,
                             const std::function<std::span<const LabelIndex>(std::size_t)>& row) {
  out << n << ' ' << m << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = row(i);
    for (std::size_t p = 0; p < r.size(); ++p) {
      if (p) out << ',';
      out << r[p];
    }
    out << '\n';
  }
}

inline void write_labels(std::ostream& out, const LabelMatrix& labels) {
  write_label_rows(out, labels.num_labels(), labels.num_rows(), [&](std::size_t i) { return labels.row(i); });
}

inline void write_predictions(std::ostream& out, const PredictionMatrix& pred) {
  write_label_rows(out, pred.num_labels(), pred.num_rows(), [&](std::size_t i) { return pred.row(i); });
}

inline void save_predictions(const PredictionMatrix& pred, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  write_predictions(out, pred);
}

// Reads a prediction file and checks every row holds exactly k labels.
inline PredictionMatrix load_predictions(const std::filesystem::path& path, std::size_t k) {
  const LabelMatrix rows = load_labels(path);
  PredictionMatrix out(rows.num_labels(), k);
  for (std::size_t i = 0; i < rows.num_rows(); ++i) out.push_row(rows.row(i), i);
  return out;
}

// ---------------------------------------------------------------------------
// Marginals.

inline MarginalMatrix read_marginals(std::istream& in, std::optional<std::size_t> kprime = std::nullopt,
                                     const std::string& source = "<marginals>") {
  io_detail::LineReader r(in, source);
  const auto h = io_detail::read_header(r, true);
  std::vector<std::size_t> ptr{0};
  std::vector<LabelIndex> idx;
  std::vector<double> val;
  std::vector<std::pair<LabelIndex, double>> row;
  std::string line;
  for (std::size_t i = 0; i < h.n; ++i) {
    if (!r.next(line)) r.fail("expected " + std::to_string(h.n) + " body lines, found " + std::to_string(i));
    row.clear();
    for (auto tok : io_detail::split_ws(line)) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) r.fail("expected j:p pair, got '" + std::string(tok) + "'");
      std::size_t j = 0;
      double p = 0.0;
      if (!io_detail::parse_number(tok.substr(0, colon), j)) r.fail("malformed label index");
      if (!io_detail::parse_number(tok.substr(colon + 1), p)) r.fail("malformed probability");
      if (j >= h.m) r.fail("label index " + std::to_string(j) + " out of range");
      if (!(p >= 0.0 && p <= 1.0)) r.fail("probability outside [0,1]");
      row.emplace_back(static_cast<LabelIndex>(j), p);
    }
    std::sort(row.begin(), row.end());
    for (std::size_t p = 1; p < row.size(); ++p)
      if (row[p].first == row[p - 1].first) r.fail("duplicate label index " + std::to_string(row[p].first));
    if (h.extra && row.size() > *h.extra) r.fail("row longer than the declared truncation");
    for (const auto& [j, p] : row) {
      idx.push_back(j);
      val.push_back(p);
    }
    ptr.push_back(idx.size());
  }
  io_detail::expect_end(r);
  MarginalMatrix out(h.m, std::move(ptr), std::move(idx), std::move(val), h.extra);
  if (kprime) return out.truncated(*kprime);
  return out;
}

inline MarginalMatrix load_marginals(const std::filesystem::path& path,
                                     std::optional<std::size_t> kprime = std::nullopt) {
  auto in = io_detail::open_in(path);
  return read_marginals(in, kprime, path.string());
}

inline void write_marginals(std::ostream& out, const MarginalMatrix& mm) {
  out << mm.num_rows() << ' ' << mm.num_labels();
  if (mm.truncation()) out << ' ' << *mm.truncation();
  out << '\n';
  for (std::size_t i = 0; i < mm.num_rows(); ++i) {
    const auto r = mm.row(i);
    for (std::size_t p = 0; p < r.nnz(); ++p) {
      if (p) out << ' ';
      out << r.labels[p] << ':' << io_detail::fmt_g17(r.values[p]);
    }
    out << '\n';
  }
}

inline void save_marginals(const MarginalMatrix& mm, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  write_marginals(out, mm);
}

// ---------------------------------------------------------------------------
// Discrete distributions.

inline DiscreteDistribution read_distribution(std::istream& in, const std::string& source = "<dist>") {
  io_detail::LineReader r(in, source);
  const auto h = io_detail::read_header(r, false);
  if (h.n == 0) r.fail("distribution needs at least one point");
  std::vector<DiscreteDistribution::Point> pts(h.n);
  std::string line;
  double total = 0.0;
  for (std::size_t i = 0; i < h.n; ++i) {
    if (!r.next(line)) r.fail("expected " + std::to_string(h.n) + " body lines, found " + std::to_string(i));
    const auto tok = io_detail::split_ws(line);
    if (tok.size() != h.m + 1) r.fail("expected weight followed by " + std::to_string(h.m) + " marginals");
    if (!io_detail::parse_number(tok[0], pts[i].weight) || !(pts[i].weight >= 0.0)) r.fail("malformed weight");
    pts[i].marginals.resize(h.m);
    for (std::size_t j = 0; j < h.m; ++j) {
      double& v = pts[i].marginals[j];
      if (!io_detail::parse_number(tok[j + 1], v) || !(v >= 0.0 && v <= 1.0)) r.fail("malformed marginal");
    }
    total += pts[i].weight;
  }
  io_detail::expect_end(r);
  if (std::abs(total - 1.0) > 1e-6) throw ParseError(source + ": weights sum to " + std::to_string(total));
  for (auto& p : pts) p.weight /= total;
  return DiscreteDistribution(std::move(pts), 1e-9);
}

inline DiscreteDistribution load_distribution(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  return read_distribution(in, path.string());
}

// ---------------------------------------------------------------------------
// Randomized classifiers as JSON:
//   {"format": "macrok-mixture", "version": 1, "k": k, "m": m,
//    "components": [{"weight": w, "a": [...], "b": [...]}, ...]}
// Doubles are written in shortest round-trip form, so loading is bit-exact.

inline nlohmann::json classifier_to_json(const RandomizedClassifier& rclf) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : rclf.components())
    comps.push_back({{"weight", c.weight}, {"a", c.classifier.a}, {"b", c.classifier.b}});
  return {{"format", "macrok-mixture"},
          {"version", 1},
          {"k", rclf.k()},
          {"m", rclf.num_labels()},
          {"components", std::move(comps)}};
}

inline RandomizedClassifier classifier_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "macrok-mixture") throw ParseError("not a mixture document");
    const auto k = doc.at("k").get<std::size_t>();
    const auto m = doc.at("m").get<std::size_t>();
    const auto& comps = doc.at("components");
    if (!comps.is_array() || comps.empty()) throw ParseError("mixture needs a non-empty component array");
    std::vector<RandomizedClassifier::Component> out;
    double total = 0.0;
    for (const auto& c : comps) {
      auto a = c.at("a").get<std::vector<double>>();
      auto b = c.at("b").get<std::vector<double>>();
      const double w = c.at("weight").get<double>();
      if (a.size() != m || b.size() != m) throw ParseError("component coefficient length differs from m");
      if (!(w >= 0.0)) throw ParseError("negative component weight");
      total += w;
      out.push_back({AffineTopK(std::move(a), std::move(b), k), w});
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParseError("component weights sum to " + io_detail::fmt_g17(total));
    if (total != 1.0)
      for (auto& c : out) c.weight /= total;
    return RandomizedClassifier(std::move(out));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("classifier schema violation: ") + e.what());
  } catch (const ContractError& e) {
    throw ParseError(std::string("invalid classifier: ") + e.what());
  }
}

inline void save_classifier(const RandomizedClassifier& rclf, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  out << classifier_to_json(rclf).dump(2) << '\n';
}

inline RandomizedClassifier load_classifier(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return classifier_from_json(doc);
}

// ---------------------------------------------------------------------------
// Reports.

struct ReportRow {
  std::string strategy;
  std::string metric;  // e.g. "macro-f1@5"
  double mean = 0.0;
  double std = 0.0;
  std::size_t repeats = 1;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population standard deviation.
inline Summary summarize(std::span<const double> xs) {
  if (xs.empty()) return {};
  // identical repeats (deterministic strategies) report exactly zero spread
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) return {xs.front(), 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

inline void write_report_tsv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "strategy\tmetric\tmean\tstd\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f", r.mean, r.std);
    out << r.strategy << '\t' << r.metric << '\t' << buf << '\n';
  }
}

inline nlohmann::json report_to_json(const std::vector<ReportRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"strategy", r.strategy}, {"metric", r.metric}, {"mean", r.mean}, {"std", r.std},
                   {"repeats", r.repeats}});
  return {{"format", "macrok-report"}, {"version", 1}, {"rows", std::move(arr)}};
}

inline std::vector<ReportRow> report_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "macrok-report") throw ParseError("not a report document");
    std::vector<ReportRow> rows;
    for (const auto& r : doc.at("rows"))
      rows.push_back({r.at("strategy").get<std::string>(), r.at("metric").get<std::string>(),
                      r.at("mean").get<double>(), r.at("std").get<double>(), r.at("repeats").get<std::size_t>()});
    return rows;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report schema violation: ") + e.what());
  }
}

inline std::filesystem::path json_mirror_path(std::filesystem::path tsv) { return tsv.replace_extension(".json"); }

// Writes path (TSV) and the same path with a .json extension.
inline void save_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  {
    auto out = io_detail::open_out(path);
    write_report_tsv(out, rows);
  }
  auto out = io_detail::open_out(json_mirror_path(path));
  out << report_to_json(rows).dump(2) << '\n';
}

inline std::vector<ReportRow> load_report_json(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return report_from_json(doc);
}

// ---------------------------------------------------------------------------
// Frank-Wolfe traces.

inline void write_trace_tsv(std::ostream& out, const FWTrace& trace) {
  out << "iteration\tobjective\tstep\taccepted\n";
  for (const auto& r : trace.records)
    out << r.iteration << '\t' << io_detail::fmt_g17(r.objective) << '\t' << io_detail::fmt_g17(r.step) << '\t'
        << (r.accepted ? 1 : 0) << '\n';
}

inline void save_trace(const FWTrace& trace, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  write_trace_tsv(out, trace);
}

}  // namespace macrok
