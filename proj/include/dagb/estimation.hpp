#pragma once

// Design-based estimators of total net change under simple random sampling.
//
//   basic expansion:   t = A/n sum(y_i),            Var = A^2 S^2 / n
//   model-assisted:    t = A ybar_synth + A/n sum(e_i),
//                      Var = A^2 / (n (n-1)) sum(e_i - ebar)^2
//   with e_i = y_i - yhat_i I_i.
//
// Inputs are in t/ha and ha, so totals come out in tonnes; reports convert
// to Mt (1e6 t) only at serialisation time.

#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "dagb/error.hpp"
#include "dagb/plot_table.hpp"
#include "dagb/summation.hpp"

namespace dagb {

inline constexpr double kZ95 = 1.96;
inline constexpr double kTonnesPerMt = 1e6;

struct TotalEstimate {
  double total = 0.0;     // t
  double variance = 0.0;  // t^2
};

struct ModelAssistedEstimate {
  double total = 0.0;
  double variance = 0.0;
  double synthetic = 0.0;   // A * synthetic mean
  double correction = 0.0;  // A/n * sum of residuals
};

// One sampled plot as the estimators see it.
struct SampleUnit {
  double y = 0.0;     // observed change, t/ha (0 for non-forest)
  double yhat = 0.0;  // model prediction at the plot, t/ha
  bool forest = false;  // I_i
};

namespace detail {

// A^2 * (ss / (n - 1)) / n. Shared by both estimators so that identical
// residuals give bit-identical variances.
inline double expansion_variance(double area, double ss, std::size_t n) {
  const double dn = static_cast<double>(n);
  return area * area * (ss / (dn - 1.0)) / dn;
}

inline double expansion_total(double area, std::span<const double> ys) {
  return area / static_cast<double>(ys.size()) * compensated_sum(ys);
}

inline void check_sample(double area, std::size_t n) {
  if (n < 2) throw RangeError("variance needs at least 2 sampled plots (n = " + std::to_string(n) + ")");
  if (!(area > 0.0) || !std::isfinite(area)) throw RangeError("total area A must be finite and > 0");
}

}  // namespace detail

// Observed change per plot with non-forest plots zeroed.
inline std::vector<double> plot_responses(const PlotTable& plots) {
  std::vector<double> y;
  y.reserve(plots.size());
  for (const auto& p : plots) y.push_back(p.forest ? p.delta_agb : 0.0);
  return y;
}

inline TotalEstimate be_total(std::span<const double> y, double area) {
  detail::check_sample(area, y.size());
  return {detail::expansion_total(area, y), detail::expansion_variance(area, sum_sq_dev(y), y.size())};
}

inline TotalEstimate be_total(const PlotTable& plots, double area) {
  const auto y = plot_responses(plots);
  return be_total(std::span<const double>(y), area);
}

inline std::vector<double> residuals(std::span<const SampleUnit> sample) {
  std::vector<double> e;
  e.reserve(sample.size());
  for (const auto& s : sample) e.push_back(s.y - (s.forest ? s.yhat : 0.0));
  return e;
}

inline ModelAssistedEstimate ma_total(std::span<const SampleUnit> sample, double synthetic_mean, double area) {
  detail::check_sample(area, sample.size());
  if (!std::isfinite(synthetic_mean)) throw RangeError("synthetic mean must be finite");
  const auto e = residuals(sample);
  ModelAssistedEstimate out;
  out.synthetic = area * synthetic_mean;
  out.correction = detail::expansion_total(area, e);
  out.total = out.synthetic + out.correction;
  out.variance = detail::expansion_variance(area, sum_sq_dev(e), e.size());
  return out;
}

// var_be / var_ma; +infinity when the model-assisted variance is zero.
inline double relative_efficiency(double var_be, double var_ma) {
  if (var_ma == 0.0) return std::numeric_limits<double>::infinity();
  return var_be / var_ma;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Normal-approximation interval; only the 95% level is supported.
inline Interval confidence_interval(double total, double se, double level = 0.95) {
  if (level != 0.95) throw RangeError("only 95% confidence intervals are supported");
  if (!(se >= 0.0)) throw RangeError("standard error must be >= 0");
  return {total - kZ95 * se, total + kZ95 * se};
}

struct EstimateReport {
  double area_ha = 0.0;
  std::size_t n = 0;
  TotalEstimate be;
  ModelAssistedEstimate ma;
  double re = 0.0;

  double se_be() const { return std::sqrt(be.variance); }
  double se_ma() const { return std::sqrt(ma.variance); }
  Interval ci95_be() const { return confidence_interval(be.total, se_be()); }
  Interval ci95_ma() const { return confidence_interval(ma.total, se_ma()); }
};

inline EstimateReport estimate(std::span<const SampleUnit> sample, double synthetic_mean, double area) {
  EstimateReport r;
  r.area_ha = area;
  r.n = sample.size();
  std::vector<double> y;
  y.reserve(sample.size());
  for (const auto& s : sample) y.push_back(s.y);
  r.be = be_total(std::span<const double>(y), area);
  r.ma = ma_total(sample, synthetic_mean, area);
  r.re = relative_efficiency(r.be.variance, r.ma.variance);
  return r;
}

}  // namespace dagb

namespace dagb {

// Pairs plots with their predictions; non-forest plots get y = 0, I = 0.
inline std::vector<SampleUnit> sample_units(const PlotTable& plots, std::span<const double> predictions) {
  if (predictions.size() != plots.size()) throw RangeError("one prediction per plot is required");
  std::vector<SampleUnit> out;
  out.reserve(plots.size());
  for (std::size_t i = 0; i < plots.size(); ++i)
    out.push_back({plots[i].forest ? plots[i].delta_agb : 0.0, predictions[i], plots[i].forest});
  return out;
}

}  // namespace dagb
