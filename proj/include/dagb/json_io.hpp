#pragma once

// JSON forms of the model file, the estimate report and the Monte Carlo
// report. Keys are emitted in a fixed order so that identical inputs give
// byte-identical files.

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <string>

#include "dagb/error.hpp"
#include "dagb/estimation.hpp"
#include "dagb/map_prediction.hpp"
#include "dagb/simulation.hpp"
#include "dagb/subset_selection.hpp"

namespace dagb {

using Json = nlohmann::ordered_json;

namespace detail {

// Non-finite values have no JSON literal: +/-inf become "inf"/"-inf", NaN null.
inline Json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double read_number(const Json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing key '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw SchemaError(std::string("key '") + key + "' is not a number");
}

inline Json mt(double tonnes) { return number(tonnes / kTonnesPerMt); }
inline Json mt2(double tonnes2) { return number(tonnes2 / (kTonnesPerMt * kTonnesPerMt)); }

}  // namespace detail

inline Json to_json(const TermSpec& t) {
  Json j;
  j["name"] = t.name();
  j["kind"] = t.kind == TermKind::raw ? "raw" : "ndi";
  j["epoch"] = std::string(to_string(t.epoch));
  Json bands = Json::array({t.band_a});
  if (t.kind == TermKind::ndi) bands.push_back(t.band_b);
  j["bands"] = bands;
  return j;
}

inline TermSpec term_from_json(const Json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    const Epoch e = parse_epoch(j.at("epoch").get<std::string>());
    const auto& bands = j.at("bands");
    if (kind == "raw" && bands.size() == 1) return TermSpec::raw(e, bands[0].get<std::string>());
    if (kind == "ndi" && bands.size() == 2)
      return TermSpec::index(e, bands[0].get<std::string>(), bands[1].get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed term: ") + ex.what());
  }
  throw SchemaError("malformed term: kind must be raw (1 band) or ndi (2 bands)");
}

inline Json to_json(const ModelFit& m) {
  Json j;
  j["mode"] = std::string(to_string(m.mode));
  j["terms"] = Json::array();
  for (const auto& t : m.terms) j["terms"].push_back(to_json(t));
  j["intercept"] = m.intercept;
  j["coefficients"] = m.coefficients;
  j["n"] = m.n;
  j["adj_r2"] = detail::number(m.adj_r2);
  j["bic"] = m.bic.perfect ? Json("perfect_fit") : detail::number(m.bic.value);
  j["max_vif"] = detail::number(m.max_vif);
  j["training_ranges"] = Json::array();
  for (const auto& r : m.ranges) j["training_ranges"].push_back({{"min", detail::number(r.min)}, {"max", detail::number(r.max)}});
  return j;
}

// Only mode, terms, intercept and coefficients are required; missing
// training ranges mean "unbounded".
inline ModelFit model_from_json(const Json& j) {
  ModelFit m;
  try {
    m.mode = parse_mode(j.at("mode").get<std::string>());
    for (const auto& t : j.at("terms")) m.terms.push_back(term_from_json(t));
    m.intercept = detail::read_number(j, "intercept");
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    if (j.contains("n")) m.n = j.at("n").get<std::size_t>();
    if (j.contains("adj_r2")) m.adj_r2 = detail::read_number(j, "adj_r2");
    if (j.contains("bic")) {
      if (j.at("bic").is_string() && j.at("bic").get<std::string>() == "perfect_fit") m.bic = {true, 0.0};
      else m.bic = {false, detail::read_number(j, "bic")};
    }
    if (j.contains("max_vif")) m.max_vif = detail::read_number(j, "max_vif");
    if (j.contains("training_ranges")) {
      for (const auto& r : j.at("training_ranges")) m.ranges.push_back({detail::read_number(r, "min"), detail::read_number(r, "max")});
    } else {
      m.ranges.assign(m.terms.size(), TermRange{-std::numeric_limits<double>::infinity(),
                                                std::numeric_limits<double>::infinity()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed model JSON: ") + ex.what());
  }
  if (m.coefficients.size() != m.terms.size()) throw SchemaError("model JSON: coefficients and terms differ in length");
  if (m.ranges.size() != m.terms.size()) throw SchemaError("model JSON: training_ranges and terms differ in length");
  if (m.mode == ModelMode::uni_temporal)
    for (const auto& t : m.terms)
      if (t.epoch != Epoch::t2) throw SchemaError("uni_temporal model contains t1 term " + t.name());
  return m;
}

inline Json to_json(const MapStats& s) {
  Json j;
  j["n_forest_pixels"] = s.n_forest_pixels;
  j["n_nodata_in_mask"] = s.n_nodata_in_mask;
  j["n_extent_pixels"] = s.n_extent_pixels;
  j["pixel_area_ha"] = s.pixel_area_ha;
  j["sum_predictions_t_per_ha"] = detail::number(s.sum_predictions);
  j["n_out_of_range"] = s.n_out_of_range;
  j["out_of_range_fraction"] = detail::number(s.out_of_range_fraction);
  j["prediction_min_t_per_ha"] = detail::number(s.prediction_min);
  j["prediction_max_t_per_ha"] = detail::number(s.prediction_max);
  return j;
}

inline Json to_json(const EstimateReport& r) {
  Json j;
  j["A_ha"] = r.area_ha;
  j["n"] = r.n;
  j["t_be_Mt"] = detail::mt(r.be.total);
  j["var_be_Mt2"] = detail::mt2(r.be.variance);
  j["se_be_Mt"] = detail::mt(r.se_be());
  j["t_ma_Mt"] = detail::mt(r.ma.total);
  j["var_ma_Mt2"] = detail::mt2(r.ma.variance);
  j["se_ma_Mt"] = detail::mt(r.se_ma());
  j["synthetic_component_Mt"] = detail::mt(r.ma.synthetic);
  j["correction_component_Mt"] = detail::mt(r.ma.correction);
  j["re"] = detail::number(r.re);
  const auto cb = r.ci95_be(), cm = r.ci95_ma();
  j["ci95_be_Mt"] = Json::array({detail::mt(cb.lo), detail::mt(cb.hi)});
  j["ci95_ma_Mt"] = Json::array({detail::mt(cm.lo), detail::mt(cm.hi)});
  return j;
}

inline Json to_json(const MomentSummary& s) {
  Json j;
  j["mean_t"] = detail::number(s.mean);
  j["empirical_var_t2"] = detail::number(s.emp_var);
  j["mean_var_hat_t2"] = detail::number(s.mean_var_hat);
  j["bias_t"] = detail::number(s.bias);
  j["mcse_t"] = detail::number(s.mcse);
  j["calibration"] = detail::number(s.calibration);
  j["ci95_coverage"] = detail::number(s.coverage);
  return j;
}

inline Json to_json(const MCReport& r) {
  Json j;
  j["replicates"] = r.replicates;
  j["n"] = r.n;
  j["failures"] = r.failures;
  if (r.failures) j["first_failure"] = r.first_failure;
  j["true_total_t"] = r.true_total;
  j["be"] = to_json(r.be);
  j["ma"] = to_json(r.ma);
  j["empirical_re"] = detail::number(r.empirical_re);
  return j;
}

inline std::string per_replicate_csv(const MCReport& r) {
  std::string out = "replicate,ok,t_be,var_be,t_ma,var_ma\n";
  for (std::size_t i = 0; i < r.per_replicate.size(); ++i) {
    const auto& x = r.per_replicate[i];
    out += std::to_string(i) + "," + (x.ok ? "1" : "0") + "," + Json(x.t_be).dump() + "," + Json(x.var_be).dump() +
           "," + Json(x.t_ma).dump() + "," + Json(x.var_ma).dump() + "\n";
  }
  return out;
}

inline Json to_json(const SimConfig& c) {
  Json j;
  j["n_pixels"] = c.n_pixels;
  j["pixel_size"] = c.pixel_size;
  j["bands_t1"] = c.bands_t1;
  j["bands_t2"] = c.bands_t2;
  j["growth_mean"] = c.growth_mean;
  j["growth_sd"] = c.growth_sd;
  j["harvest_probability"] = c.harvest_probability;
  j["harvest_loss_fraction"] = c.harvest_loss_fraction;
  j["initial_agb_mean"] = c.initial_agb_mean;
  j["initial_agb_sd"] = c.initial_agb_sd;
  j["spectral_noise_sd"] = c.spectral_noise_sd;
  j["forest_fraction"] = c.forest_fraction;
  j["signal_strength"] = c.signal_strength;
  j["nonlinearity"] = c.nonlinearity;
  j["agb_loading"] = c.agb_loading;
  j["seed"] = c.seed;
  return j;
}

// Fields absent from j keep their defaults; unknown keys are rejected.
inline SimConfig sim_config_from_json(const Json& j) {
  SimConfig c;
  if (!j.is_object()) throw SchemaError("simulation config must be a JSON object");
  const Json known = to_json(c);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw SchemaError("unknown simulation config key '" + k + "'");
  try {
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("n_pixels", c.n_pixels);
    get("pixel_size", c.pixel_size);
    get("bands_t1", c.bands_t1);
    get("bands_t2", c.bands_t2);
    get("growth_mean", c.growth_mean);
    get("growth_sd", c.growth_sd);
    get("harvest_probability", c.harvest_probability);
    get("harvest_loss_fraction", c.harvest_loss_fraction);
    get("initial_agb_mean", c.initial_agb_mean);
    get("initial_agb_sd", c.initial_agb_sd);
    get("spectral_noise_sd", c.spectral_noise_sd);
    get("forest_fraction", c.forest_fraction);
    get("signal_strength", c.signal_strength);
    get("nonlinearity", c.nonlinearity);
    get("agb_loading", c.agb_loading);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed simulation config: ") + ex.what());
  }
  return c;
}

}  // namespace dagb
