#pragma once

// Wall-to-wall application of a fitted change model.
//
// Pixels are processed in fixed blocks of rows. Each block keeps its own
// compensated sum and the blocks are merged in row order, so MapStats and
// the map itself do not depend on the number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dagb/error.hpp"
#include "dagb/features.hpp"
#include "dagb/raster.hpp"
#include "dagb/spectra.hpp"
#include "dagb/subset_selection.hpp"
#include "dagb/summation.hpp"

namespace dagb {

inline constexpr double kMapNodata = -9999.0;
inline constexpr std::size_t kRowsPerBlock = 16;

// intercept + sum(coef * term). Predictions are never truncated.
inline double predict_point(const ModelFit& model, std::span<const double> term_values) {
  if (term_values.size() != model.terms.size())
    throw SchemaError("model has " + std::to_string(model.terms.size()) + " terms, got " +
                      std::to_string(term_values.size()) + " values");
  CompensatedSum acc;
  acc.add(model.intercept);
  for (std::size_t j = 0; j < term_values.size(); ++j) acc.add(model.coefficients[j] * term_values[j]);
  return acc.value();
}

// Same, with term values keyed by canonical term name.
inline double predict_point(const ModelFit& model, const std::map<std::string, double, std::less<>>& by_name) {
  std::vector<double> v;
  v.reserve(model.terms.size());
  for (const auto& t : model.terms) {
    auto it = by_name.find(t.name());
    if (it == by_name.end()) throw SchemaError("missing value for model term " + t.name());
    v.push_back(it->second);
  }
  return predict_point(model, v);
}

// Predictions at plot locations; plots without usable spectra get 0.
inline std::vector<double> predict_plots(const ModelFit& model, const PlotSpectra& spectra) {
  std::vector<double> out;
  out.reserve(spectra.size());
  std::vector<double> values(model.terms.size());
  for (const auto& s : spectra) {
    if (!s.usable()) {
      out.push_back(0.0);
      continue;
    }
    auto lookup = [&](Epoch e, std::string_view b) { return s.value(e, b); };
    for (std::size_t j = 0; j < model.terms.size(); ++j) {
      auto v = evaluate_term(model.terms[j], lookup);
      if (!v) throw SchemaError("plot " + s.plot_id + " lacks bands for term " + model.terms[j].name());
      values[j] = *v;
    }
    out.push_back(predict_point(model, values));
  }
  return out;
}

enum class Accounting { population_mean, forest_mean };

inline std::string_view to_string(Accounting a) noexcept {
  return a == Accounting::population_mean ? "population_mean" : "forest_mean";
}

inline Accounting parse_accounting(std::string_view s) {
  if (s == "population_mean") return Accounting::population_mean;
  if (s == "forest_mean") return Accounting::forest_mean;
  throw SchemaError("unknown accounting '" + std::string(s) + "'");
}

struct MapStats {
  std::size_t n_forest_pixels = 0;   // predicted forest pixels (N)
  std::size_t n_nodata_in_mask = 0;  // forest pixels with a nodata band
  std::size_t n_extent_pixels = 0;   // mask 0 or 1, minus n_nodata_in_mask
  std::size_t n_out_of_range = 0;
  double sum_predictions = 0.0;      // t/ha summed over predicted pixels
  double pixel_area_ha = 0.0;
  double out_of_range_fraction = 0.0;
  double prediction_min = std::numeric_limits<double>::quiet_NaN();
  double prediction_max = std::numeric_limits<double>::quiet_NaN();
};

struct MapPrediction {
  RasterStack delta_map;  // single band "dagb", nodata -9999
  MapStats stats;
};

// population_mean: forest prediction sum over all extent pixels (non-forest
// counted as 0). forest_mean: over forest pixels only.
inline double synthetic_mean_for_estimator(const MapStats& s, Accounting accounting) {
  const std::size_t denom = accounting == Accounting::population_mean ? s.n_extent_pixels : s.n_forest_pixels;
  if (denom == 0) {
    if (accounting == Accounting::population_mean && s.n_forest_pixels == 0) return 0.0;
    throw RangeError(std::string("synthetic mean (") + std::string(to_string(accounting)) +
                     ") has a zero pixel count");
  }
  return s.sum_predictions / static_cast<double>(denom);
}

namespace detail {

struct BlockResult {
  CompensatedSum sum;
  std::size_t forest = 0, nodata = 0, extent = 0, out_of_range = 0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
};

struct ResolvedTerm {
  TermKind kind;
  const std::vector<float>* a;
  const std::vector<float>* b;
};

}  // namespace detail

// Evaluates the model on every forest pixel. Non-forest, mask-nodata and
// pixels where any input band is nodata are written as nodata.
inline MapPrediction predict_map(const ModelFit& model, std::span<const RasterStack> stacks, const ForestMask& mask,
                                 unsigned workers = 1) {
  check_stacks(stacks);
  const GridGeometry& g = stacks.front().geometry;
  if (!(mask.geometry() == g)) throw GeometryError("forest mask geometry differs from the raster stacks");
  if (model.coefficients.size() != model.terms.size() || model.ranges.size() != model.terms.size())
    throw SchemaError("model terms, coefficients and ranges are not aligned");

  auto stack_for = [&](Epoch e) -> const RasterStack& {
    for (const auto& s : stacks)
      if (parse_epoch(s.epoch_label) == e) return s;
    throw SchemaError("model needs a raster stack for epoch " + std::string(to_string(e)));
  };
  std::vector<detail::ResolvedTerm> terms;
  for (const auto& t : model.terms) {
    const RasterStack& s = stack_for(t.epoch);
    const Band* a = s.find_band(t.band_a);
    const Band* b = t.kind == TermKind::ndi ? s.find_band(t.band_b) : nullptr;
    if (!a || (t.kind == TermKind::ndi && !b))
      throw SchemaError("raster stack " + s.epoch_label + " lacks bands for term " + t.name());
    terms.push_back({t.kind, &a->values, b ? &b->values : nullptr});
  }

  MapPrediction out;
  out.delta_map.geometry = g;
  out.delta_map.nodata = kMapNodata;
  out.delta_map.epoch_label = "t2";
  out.delta_map.bands.push_back({"dagb", std::vector<float>(g.n_pixels(), static_cast<float>(kMapNodata))});
  auto& dst = out.delta_map.bands.front().values;

  const std::size_t nblocks = (g.nrows + kRowsPerBlock - 1) / kRowsPerBlock;
  std::vector<detail::BlockResult> blocks(nblocks);

  auto run_block = [&](std::size_t bi) {
    auto& br = blocks[bi];
    std::vector<double> values(terms.size());
    const std::size_t r0 = bi * kRowsPerBlock, r1 = std::min(g.nrows, r0 + kRowsPerBlock);
    for (std::size_t idx = r0 * g.ncols; idx < r1 * g.ncols; ++idx) {
      if (mask.is_nodata(idx)) continue;
      if (!mask.is_forest(idx)) {
        ++br.extent;
        continue;
      }
      bool nodata = false;
      for (const auto& s : stacks)
        for (const auto& band : s.bands) nodata = nodata || s.is_nodata(band.values[idx]);
      if (nodata) {
        ++br.nodata;
        continue;
      }
      bool outside = false;
      for (std::size_t j = 0; j < terms.size(); ++j) {
        const double a = (*terms[j].a)[idx];
        values[j] = terms[j].kind == TermKind::raw ? a : ndi(a, (*terms[j].b)[idx]).value;
        outside = outside || !model.ranges[j].contains(values[j]);
      }
      const double yhat = predict_point(model, values);
      dst[idx] = static_cast<float>(yhat);
      br.sum.add(yhat);
      ++br.forest;
      ++br.extent;
      if (outside) ++br.out_of_range;
      br.min = std::min(br.min, yhat);
      br.max = std::max(br.max, yhat);
    }
  };

  const unsigned nthreads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(nblocks, 1))));
  if (nthreads == 1) {
    for (std::size_t b = 0; b < nblocks; ++b) run_block(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nthreads; ++t)
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < nblocks; b = next++) run_block(b);
      });
  }

  MapStats& st = out.stats;
  st.pixel_area_ha = g.pixel_area_ha();
  CompensatedSum total;
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (const auto& br : blocks) {
    total.merge(br.sum);
    st.n_forest_pixels += br.forest;
    st.n_nodata_in_mask += br.nodata;
    st.n_extent_pixels += br.extent;
    st.n_out_of_range += br.out_of_range;
    mn = std::min(mn, br.min);
    mx = std::max(mx, br.max);
  }
  st.sum_predictions = total.value();
  if (st.n_forest_pixels > 0) {
    st.prediction_min = mn;
    st.prediction_max = mx;
    st.out_of_range_fraction = static_cast<double>(st.n_out_of_range) / static_cast<double>(st.n_forest_pixels);
  }
  return out;
}

}  // namespace dagb
