#pragma once

// Candidate predictors: raw band values and normalized-difference indices
// (a - b) / (a + b) of every within-epoch band pair.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dagb/epoch.hpp"
#include "dagb/error.hpp"
#include "dagb/spectra.hpp"

namespace dagb {

enum class ModelMode { bi_temporal, uni_temporal };

inline std::string_view to_string(ModelMode m) noexcept {
  return m == ModelMode::bi_temporal ? "bi_temporal" : "uni_temporal";
}

inline ModelMode parse_mode(std::string_view s) {
  if (s == "bi_temporal") return ModelMode::bi_temporal;
  if (s == "uni_temporal") return ModelMode::uni_temporal;
  throw SchemaError("unknown model mode '" + std::string(s) + "'");
}

struct NdiValue {
  double value = 0.0;
  bool degenerate = false;  // a + b == 0; value is defined as 0
};

inline NdiValue ndi(double a, double b) noexcept {
  const double sum = a + b;
  if (sum == 0.0) return {0.0, true};
  return {(a - b) / sum, false};
}

enum class TermKind { raw, ndi };

struct TermSpec {
  TermKind kind = TermKind::raw;
  Epoch epoch = Epoch::t2;
  std::string band_a;
  std::string band_b;  // empty for raw terms

  static TermSpec raw(Epoch e, std::string band) { return {TermKind::raw, e, std::move(band), {}}; }
  static TermSpec index(Epoch e, std::string a, std::string b) {
    if (a == b) throw SchemaError("ndi term needs two distinct bands, got '" + a + "' twice");
    return {TermKind::ndi, e, std::move(a), std::move(b)};
  }

  // e.g. "ndi(B7,B12)@t1", "raw(B5)@t2"
  std::string name() const {
    std::string s = kind == TermKind::raw ? "raw(" + band_a + ")" : "ndi(" + band_a + "," + band_b + ")";
    s += "@";
    s += to_string(epoch);
    return s;
  }

  bool operator==(const TermSpec&) const = default;
};

inline TermSpec parse_term_name(std::string_view s) {
  auto fail = [&] { return SchemaError("malformed term name '" + std::string(s) + "'"); };
  const auto at = s.rfind('@');
  if (at == std::string_view::npos) throw fail();
  const Epoch e = parse_epoch(s.substr(at + 1));
  const auto body = s.substr(0, at);
  if (body.size() < 6 || body.back() != ')') throw fail();
  const auto inner = body.substr(4, body.size() - 5);
  if (body.starts_with("raw(")) {
    if (inner.empty()) throw fail();
    return TermSpec::raw(e, std::string(inner));
  }
  if (body.starts_with("ndi(")) {
    const auto comma = inner.find(',');
    if (comma == std::string_view::npos || comma == 0 || comma + 1 == inner.size()) throw fail();
    return TermSpec::index(e, std::string(inner.substr(0, comma)), std::string(inner.substr(comma + 1)));
  }
  throw fail();
}

using EpochBands = std::map<Epoch, std::vector<std::string>>;

// All raw bands followed by all C(B,2) indices, per included epoch, t1 first.
// Uni-temporal mode uses only the t2 bands.
inline std::vector<TermSpec> enumerate_terms(const EpochBands& bands, ModelMode mode) {
  std::vector<Epoch> epochs;
  if (mode == ModelMode::bi_temporal) epochs = {Epoch::t1, Epoch::t2};
  else epochs = {Epoch::t2};

  std::vector<TermSpec> terms;
  for (Epoch e : epochs) {
    auto it = bands.find(e);
    if (it == bands.end() || it->second.empty())
      throw SchemaError("no bands supplied for epoch " + std::string(to_string(e)));
    const auto& names = it->second;
    std::set<std::string> uniq(names.begin(), names.end());
    if (uniq.size() != names.size())
      throw SchemaError("duplicate band names for epoch " + std::string(to_string(e)));
    for (const auto& b : names) terms.push_back(TermSpec::raw(e, b));
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j) terms.push_back(TermSpec::index(e, names[i], names[j]));
  }
  return terms;
}

// Evaluates a term given lookup(epoch, band) -> std::optional<double>.
// Returns nullopt when a referenced band is missing.
template <class Lookup>
std::optional<double> evaluate_term(const TermSpec& t, Lookup&& lookup, bool* degenerate = nullptr) {
  const std::optional<double> a = lookup(t.epoch, t.band_a);
  if (!a) return std::nullopt;
  if (t.kind == TermKind::raw) return *a;
  const std::optional<double> b = lookup(t.epoch, t.band_b);
  if (!b) return std::nullopt;
  const NdiValue v = ndi(*a, *b);
  if (v.degenerate && degenerate) *degenerate = true;
  return v.value;
}

struct TermRange {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();

  bool contains(double v) const noexcept { return v >= min && v <= max; }
  bool operator==(const TermRange&) const = default;
};

struct ExcludedRow {
  std::string plot_id;
  SpectrumStatus status;
};

struct FeatureMatrix {
  std::vector<std::string> row_ids;
  std::vector<TermSpec> terms;
  Eigen::MatrixXd values;  // rows x terms
  std::vector<TermRange> ranges;
  std::vector<ExcludedRow> excluded;
  std::size_t degenerate_ndi = 0;  // cells where an index had a zero denominator

  std::size_t rows() const noexcept { return row_ids.size(); }
  std::size_t cols() const noexcept { return terms.size(); }
};

inline std::vector<TermRange> column_ranges(const Eigen::MatrixXd& values) {
  std::vector<TermRange> ranges(static_cast<std::size_t>(values.cols()));
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    auto& r = ranges[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      r.min = std::min(r.min, values(i, j));
      r.max = std::max(r.max, values(i, j));
    }
  }
  return ranges;
}

// Evaluates every term on every plot with usable spectra; flagged plots are
// listed in `excluded` and contribute no row.
inline FeatureMatrix build_design(const PlotSpectra& spectra, const std::vector<TermSpec>& terms) {
  FeatureMatrix fm;
  fm.terms = terms;
  std::vector<const PlotSpectrum*> usable;
  for (const auto& s : spectra) {
    if (s.usable()) usable.push_back(&s);
    else fm.excluded.push_back({s.plot_id, s.status});
  }
  fm.values.resize(static_cast<Eigen::Index>(usable.size()), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const PlotSpectrum& s = *usable[i];
    fm.row_ids.push_back(s.plot_id);
    auto lookup = [&](Epoch e, std::string_view b) { return s.value(e, b); };
    for (std::size_t j = 0; j < terms.size(); ++j) {
      bool degenerate = false;
      auto v = evaluate_term(terms[j], lookup, &degenerate);
      if (!v) throw SchemaError("term " + terms[j].name() + " references a band missing from the spectra");
      if (degenerate) ++fm.degenerate_ndi;
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  fm.ranges = column_ranges(fm.values);
  return fm;
}

// Audit export: plot_id followed by one column per canonical term name.
inline std::string feature_matrix_csv(const FeatureMatrix& fm) {
  auto quoted = [](const std::string& s) {
    return s.find(',') == std::string::npos ? s : "\"" + s + "\"";
  };
  std::string out = "plot_id";
  for (const auto& t : fm.terms) out += "," + quoted(t.name());
  out += '\n';
  char buf[64];
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    out += quoted(fm.row_ids[i]);
    for (std::size_t j = 0; j < fm.cols(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof buf, fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

}  // namespace dagb
