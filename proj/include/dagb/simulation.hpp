#pragma once

// Synthetic populations with known total change, and a Monte Carlo harness
// that runs the full fit-map-estimate pipeline on repeated simple random
// samples to check bias, variance calibration and interval coverage.
//
// Generative model, per pixel k:
//   forest      ~ Bernoulli(forest_fraction)
//   agb_t1      ~ max(0, Normal(initial_agb_mean, initial_agb_sd))
//   harvested   ~ Bernoulli(harvest_probability)
//   agb_t2      =  agb_t1 (1 - harvest_loss_fraction)            if harvested
//               =  max(0, agb_t1 + Normal(growth_mean, growth_sd))  otherwise
//   delta       =  agb_t2 - agb_t1   (0 and no biomass off-forest)
// Band j at epoch t:
//   level_j + agb_loading * slope_j * agb_t / 100 + Normal(0, spectral_noise_sd)
// and the last ("SWIR-like") band at t2 additionally carries
//   - signal_strength * d + nonlinearity * d^2,   d = delta / 100,
// which makes it fall with biomass change; nonlinearity != 0 makes any
// linear model in the bands misspecified.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "dagb/error.hpp"
#include "dagb/estimation.hpp"
#include "dagb/features.hpp"
#include "dagb/map_prediction.hpp"
#include "dagb/plot_table.hpp"
#include "dagb/raster.hpp"
#include "dagb/rng.hpp"
#include "dagb/spectra.hpp"
#include "dagb/subset_selection.hpp"
#include "dagb/summation.hpp"

namespace dagb {

struct SimConfig {
  std::size_t n_pixels = 10000;
  double pixel_size = 30.0;
  std::vector<std::string> bands_t1 = {"blue", "red", "nir", "swir"};
  std::vector<std::string> bands_t2 = {"blue", "red", "nir", "swir"};
  double growth_mean = 20.0;
  double growth_sd = 10.0;
  double harvest_probability = 0.3;
  double harvest_loss_fraction = 0.3;
  double initial_agb_mean = 120.0;
  double initial_agb_sd = 50.0;
  double spectral_noise_sd = 0.01;
  double forest_fraction = 0.7;
  double signal_strength = 0.04;  // reflectance per 100 t/ha of change
  double nonlinearity = 0.0;
  double agb_loading = 1.0;
  std::uint64_t seed = 1;

  // Throws RangeError naming every invalid field.
  void validate() const {
    std::vector<std::string> bad;
    auto prob = [&](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) bad.emplace_back(name);
    };
    auto nonneg = [&](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) bad.emplace_back(name);
    };
    auto finite = [&](double v, const char* name) {
      if (!std::isfinite(v)) bad.emplace_back(name);
    };
    if (n_pixels < 1) bad.emplace_back("n_pixels");
    if (!(pixel_size > 0.0) || !std::isfinite(pixel_size)) bad.emplace_back("pixel_size");
    if (bands_t1.empty()) bad.emplace_back("bands_t1");
    if (bands_t2.empty()) bad.emplace_back("bands_t2");
    finite(growth_mean, "growth_mean");
    nonneg(growth_sd, "growth_sd");
    prob(harvest_probability, "harvest_probability");
    prob(harvest_loss_fraction, "harvest_loss_fraction");
    finite(initial_agb_mean, "initial_agb_mean");
    nonneg(initial_agb_sd, "initial_agb_sd");
    nonneg(spectral_noise_sd, "spectral_noise_sd");
    prob(forest_fraction, "forest_fraction");
    finite(signal_strength, "signal_strength");
    finite(nonlinearity, "nonlinearity");
    finite(agb_loading, "agb_loading");
    if (bad.empty()) return;
    std::string msg = "invalid simulation config fields:";
    for (const auto& b : bad) msg += " " + b;
    throw RangeError(msg);
  }
};

struct SyntheticPopulation {
  GridGeometry geometry;
  std::size_t n_pixels = 0;  // real pixels; the grid tail is padding
  std::vector<std::uint8_t> forest;
  std::vector<double> agb_t1, agb_t2, delta;
  std::vector<RasterStack> stacks;  // t1, t2
  ForestMask mask;
  double true_total = 0.0;  // t

  double area_ha() const noexcept { return static_cast<double>(n_pixels) * geometry.pixel_area_ha(); }
};

namespace detail {

// Band levels and AGB slopes cycle through these; the last band's slope is
// negative like a shortwave-infrared band over dense canopy.
inline double band_level(std::size_t j, std::size_t nb) {
  if (j + 1 == nb) return 0.15;
  static constexpr double levels[] = {0.04, 0.05, 0.30, 0.12, 0.20};
  return levels[j % 5];
}

inline double band_slope(std::size_t j, std::size_t nb) {
  if (j + 1 == nb) return -0.03;
  static constexpr double slopes[] = {-0.005, -0.01, 0.05, -0.02, 0.02};
  return slopes[j % 5];
}

}  // namespace detail

inline SyntheticPopulation gen_population(const SimConfig& cfg) {
  cfg.validate();
  SyntheticPopulation pop;
  const std::size_t N = cfg.n_pixels;
  const auto ncols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(N))));
  const std::size_t nrows = (N + ncols - 1) / ncols;
  pop.geometry = {ncols, nrows, 0.0, static_cast<double>(nrows) * cfg.pixel_size, cfg.pixel_size};
  pop.n_pixels = N;
  const std::size_t cells = pop.geometry.n_pixels();

  Rng rng(derive_seed(cfg.seed, 0));
  pop.forest.assign(N, 0);
  pop.agb_t1.assign(N, 0.0);
  pop.agb_t2.assign(N, 0.0);
  pop.delta.assign(N, 0.0);
  for (std::size_t k = 0; k < N; ++k) {
    const bool forest = rng.bernoulli(cfg.forest_fraction);
    const double a1 = std::max(0.0, rng.normal(cfg.initial_agb_mean, cfg.initial_agb_sd));
    const bool harvested = rng.bernoulli(cfg.harvest_probability);
    const double growth = rng.normal(cfg.growth_mean, cfg.growth_sd);
    if (!forest) continue;
    pop.forest[k] = 1;
    pop.agb_t1[k] = a1;
    pop.agb_t2[k] = harvested ? a1 * (1.0 - cfg.harvest_loss_fraction) : std::max(0.0, a1 + growth);
    pop.delta[k] = pop.agb_t2[k] - pop.agb_t1[k];
  }

  const float nodata = static_cast<float>(kMapNodata);
  auto make_stack = [&](const std::vector<std::string>& names, const std::vector<double>& agb, bool end) {
    RasterStack s;
    s.geometry = pop.geometry;
    s.nodata = kMapNodata;
    s.epoch_label = end ? "t2" : "t1";
    const std::size_t nb = names.size();
    for (std::size_t j = 0; j < nb; ++j) {
      Band b{names[j], std::vector<float>(cells, nodata)};
      const double level = detail::band_level(j, nb);
      const double slope = cfg.agb_loading * detail::band_slope(j, nb);
      const bool signal = end && j + 1 == nb;
      for (std::size_t k = 0; k < N; ++k) {
        double v = level + slope * agb[k] / 100.0 + rng.normal(0.0, cfg.spectral_noise_sd);
        if (signal) {
          const double d = pop.delta[k] / 100.0;
          v += -cfg.signal_strength * d + cfg.nonlinearity * d * d;
        }
        b.values[k] = static_cast<float>(v);
      }
      s.bands.push_back(std::move(b));
    }
    return s;
  };
  pop.stacks.push_back(make_stack(cfg.bands_t1, pop.agb_t1, false));
  pop.stacks.push_back(make_stack(cfg.bands_t2, pop.agb_t2, true));

  std::vector<float> mask(cells, nodata);
  for (std::size_t k = 0; k < N; ++k) mask[k] = pop.forest[k] ? 1.0f : 0.0f;
  pop.mask = ForestMask::from_values(pop.geometry, std::move(mask), kMapNodata);

  const double area = pop.geometry.pixel_area_ha();
  CompensatedSum total;
  for (std::size_t k = 0; k < N; ++k)
    if (pop.forest[k]) total.add(pop.delta[k] * area);
  pop.true_total = total.value();
  return pop;
}

// n distinct pixels, uniformly without replacement, as plots at pixel centres.
inline PlotTable draw_srs(const SyntheticPopulation& pop, std::size_t n, std::uint64_t seed) {
  if (n > pop.n_pixels)
    throw RangeError("sample size " + std::to_string(n) + " exceeds population size " + std::to_string(pop.n_pixels));
  Rng rng(seed);
  std::vector<std::size_t> idx(pop.n_pixels);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  PlotTable plots;
  plots.reserve(n);
  const auto& g = pop.geometry;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pop.n_pixels - i));
    std::swap(idx[i], idx[j]);
    const std::size_t k = idx[i];
    PlotRecord r;
    r.plot_id = "px" + std::to_string(k);
    r.x = g.x0 + (static_cast<double>(k % g.ncols) + 0.5) * g.pixel_size;
    r.y = g.y0 - (static_cast<double>(k / g.ncols) + 0.5) * g.pixel_size;
    r.forest = pop.forest[k] != 0;
    r.agb_t1 = pop.agb_t1[k];
    r.agb_t2 = pop.agb_t2[k];
    r.delta_agb = r.agb_t2 - r.agb_t1;
    plots.push_back(std::move(r));
  }
  return plots;
}

struct PipelineOptions {
  ModelMode mode = ModelMode::uni_temporal;
  std::size_t k_max = 3;
  std::size_t m = 10;
  Accounting accounting = Accounting::population_mean;
  unsigned workers = 1;
};

struct PipelineResult {
  ModelFit model;
  MapStats map;
  double synthetic_mean = 0.0;
  EstimateReport report;
};

// Fit on forest plots with usable spectra, map, and estimate. This is the
// same sequence the command-line fit + estimate steps perform.
inline PipelineResult run_pipeline(const PlotTable& plots, std::span<const RasterStack> stacks, const ForestMask& mask,
                                   double area, const PipelineOptions& opt) {
  EpochBands bands;
  for (const auto& s : stacks) {
    auto& names = bands[parse_epoch(s.epoch_label)];
    for (const auto& b : s.bands) names.push_back(b.name);
  }
  const auto terms = enumerate_terms(bands, opt.mode);
  const auto spectra = extract_plot_spectra(plots, stacks);

  PlotSpectra forest_spectra;
  std::map<std::string, double, std::less<>> y_by_id;
  for (std::size_t i = 0; i < plots.size(); ++i) {
    if (!plots[i].forest) continue;
    forest_spectra.push_back(spectra[i]);
    y_by_id[plots[i].plot_id] = plots[i].delta_agb;
  }
  const FeatureMatrix fm = build_design(forest_spectra, terms);
  Eigen::VectorXd y(static_cast<Eigen::Index>(fm.rows()));
  for (std::size_t i = 0; i < fm.rows(); ++i) y(static_cast<Eigen::Index>(i)) = y_by_id.at(fm.row_ids[i]);

  PipelineResult out;
  out.model = select_model(fm, y, opt.mode, opt.k_max, opt.m);
  const auto mp = predict_map(out.model, stacks, mask, opt.workers);
  out.map = mp.stats;
  out.synthetic_mean = synthetic_mean_for_estimator(out.map, opt.accounting);
  const auto preds = predict_plots(out.model, spectra);
  const auto sample = sample_units(plots, preds);
  out.report = estimate(sample, out.synthetic_mean, area);
  return out;
}

struct ReplicateResult {
  bool ok = false;
  double t_be = 0.0, var_be = 0.0, t_ma = 0.0, var_ma = 0.0;
};

struct MomentSummary {
  double mean = 0.0;
  double emp_var = 0.0;       // across replicates, n-1 denominator
  double mean_var_hat = 0.0;  // mean of the variance estimates
  double bias = 0.0;          // mean - true total
  double mcse = 0.0;          // sqrt(emp_var / R)
  double calibration = 0.0;   // mean_var_hat / emp_var
  double coverage = 0.0;      // share of 95% intervals covering the truth
};

struct MCReport {
  std::size_t replicates = 0;
  std::size_t n = 0;
  std::size_t failures = 0;
  std::string first_failure;
  double true_total = 0.0;
  MomentSummary be, ma;
  double empirical_re = 0.0;
  std::vector<ReplicateResult> per_replicate;
};

namespace detail {

inline MomentSummary summarise(const std::vector<double>& t, const std::vector<double>& v, double truth) {
  MomentSummary s;
  const double R = static_cast<double>(t.size());
  s.mean = compensated_sum(t) / R;
  s.emp_var = sum_sq_dev(t) / (R - 1.0);
  s.mean_var_hat = compensated_sum(v) / R;
  s.bias = s.mean - truth;
  s.mcse = std::sqrt(s.emp_var / R);
  s.calibration = s.emp_var > 0.0 ? s.mean_var_hat / s.emp_var : 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto ci = confidence_interval(t[i], std::sqrt(v[i]));
    if (ci.lo <= truth && truth <= ci.hi) ++covered;
  }
  s.coverage = static_cast<double>(covered) / R;
  return s;
}

}  // namespace detail

// Replicate r samples with stream derive_seed(seed, r + 1); stream 0 built
// the population. Results are identical for any worker count.
inline MCReport monte_carlo(const SimConfig& cfg, std::size_t n, std::size_t replicates,
                            const PipelineOptions& opt = {}) {
  if (replicates < 100) throw RangeError("Monte Carlo needs at least 100 replicates");
  if (n < 2) throw RangeError("Monte Carlo needs n >= 2");
  const SyntheticPopulation pop = gen_population(cfg);
  if (n > pop.n_pixels) throw RangeError("sample size exceeds population size");

  std::vector<ReplicateResult> results(replicates);
  std::vector<std::string> errors(replicates);
  PipelineOptions inner = opt;
  inner.workers = 1;
  auto run_one = [&](std::size_t r) {
    try {
      const auto plots = draw_srs(pop, n, derive_seed(cfg.seed, r + 1));
      const auto res = run_pipeline(plots, pop.stacks, pop.mask, pop.area_ha(), inner);
      results[r] = {true, res.report.be.total, res.report.be.variance, res.report.ma.total, res.report.ma.variance};
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  };
  const unsigned nthreads = std::max(1u, opt.workers);
  if (nthreads == 1) {
    for (std::size_t r = 0; r < replicates; ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nthreads; ++t)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < replicates; r = next++) run_one(r);
      });
  }

  MCReport rep;
  rep.replicates = replicates;
  rep.n = n;
  rep.true_total = pop.true_total;
  std::vector<double> tb, vb, tm, vm;
  for (std::size_t r = 0; r < replicates; ++r) {
    if (!results[r].ok) {
      if (rep.failures++ == 0) rep.first_failure = errors[r];
      continue;
    }
    tb.push_back(results[r].t_be);
    vb.push_back(results[r].var_be);
    tm.push_back(results[r].t_ma);
    vm.push_back(results[r].var_ma);
  }
  rep.per_replicate = std::move(results);
  if (tb.size() < 2) throw Error("Monte Carlo produced fewer than 2 successful replicates: " + rep.first_failure);
  rep.be = detail::summarise(tb, vb, pop.true_total);
  rep.ma = detail::summarise(tm, vm, pop.true_total);
  rep.empirical_re = rep.ma.emp_var > 0.0 ? rep.be.emp_var / rep.ma.emp_var : std::numeric_limits<double>::infinity();
  return rep;
}

}  // namespace dagb
