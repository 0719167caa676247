#pragma once

// Command-line front end: validate, fit, estimate, predict, simulate.
//
// Settings come from an optional JSON config file (--config) and are then
// overridden by flags. Every command that writes an output also writes
// <output>.manifest.json recording the inputs, the effective config, its
// hash and the seed; there are no timestamps, so reruns are byte-identical.
//
// Exit codes: 0 success, 1 input error, 2 computation infeasibility.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dagb/error.hpp"
#include "dagb/estimation.hpp"
#include "dagb/features.hpp"
#include "dagb/json_io.hpp"
#include "dagb/map_prediction.hpp"
#include "dagb/plot_table.hpp"
#include "dagb/raster.hpp"
#include "dagb/simulation.hpp"
#include "dagb/spectra.hpp"
#include "dagb/subset_selection.hpp"

namespace dagb::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kInputError = 1, kInfeasible = 2 };

struct RunConfig {
  std::string plots;
  std::string stack_t1;
  std::string stack_t2;
  std::string mask;
  std::string model;
  std::string out;          // primary output of the command
  std::string map_out;      // optional change map (estimate)
  std::string features_out; // optional design-matrix CSV (fit)
  std::string replicate_csv;
  ModelMode mode = ModelMode::bi_temporal;
  std::optional<double> area_ha;
  std::size_t k_max = 5;
  std::size_t m = 50;
  Accounting accounting = Accounting::population_mean;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::size_t replicates = 100;
  std::size_t sample_size = 200;
  Json simulation = Json::object();
};

inline Json to_json(const RunConfig& c) {
  Json j;
  j["plots"] = c.plots;
  j["stacks"] = {{"t1", c.stack_t1}, {"t2", c.stack_t2}};
  j["mask"] = c.mask;
  j["model"] = c.model;
  j["out"] = c.out;
  j["map_out"] = c.map_out;
  j["features_out"] = c.features_out;
  j["replicate_csv"] = c.replicate_csv;
  j["mode"] = std::string(to_string(c.mode));
  j["area_ha"] = c.area_ha ? Json(*c.area_ha) : Json(nullptr);
  j["k_max"] = c.k_max;
  j["m"] = c.m;
  j["accounting"] = std::string(to_string(c.accounting));
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["replicates"] = c.replicates;
  j["sample_size"] = c.sample_size;
  j["simulation"] = c.simulation;
  return j;
}

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  if (!j.is_object()) throw SchemaError("config file must hold a JSON object");
  try {
    auto str = [&](const char* k, std::string& f) {
      if (j.contains(k)) f = j.at(k).get<std::string>();
    };
    str("plots", c.plots);
    str("mask", c.mask);
    str("model", c.model);
    str("out", c.out);
    str("map_out", c.map_out);
    str("features_out", c.features_out);
    str("replicate_csv", c.replicate_csv);
    if (j.contains("stacks")) {
      const auto& s = j.at("stacks");
      if (s.contains("t1")) c.stack_t1 = s.at("t1").get<std::string>();
      if (s.contains("t2")) c.stack_t2 = s.at("t2").get<std::string>();
    }
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("area_ha") && !j.at("area_ha").is_null()) c.area_ha = j.at("area_ha").get<double>();
    if (j.contains("k_max")) c.k_max = j.at("k_max").get<std::size_t>();
    if (j.contains("m")) c.m = j.at("m").get<std::size_t>();
    if (j.contains("accounting")) c.accounting = parse_accounting(j.at("accounting").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
    if (j.contains("replicates")) c.replicates = j.at("replicates").get<std::size_t>();
    if (j.contains("sample_size")) c.sample_size = j.at("sample_size").get<std::size_t>();
    if (j.contains("simulation")) c.simulation = j.at("simulation");
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed config: ") + ex.what());
  }
  return c;
}

// FNV-1a, used for the config hash and input fingerprints in manifests.
inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline RasterStack load_raster(const std::string& path) {
  const std::string bytes = read_file(path);
  return read_raster(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

inline void save_raster(const std::string& path, const RasterStack& s) {
  const auto bytes = write_raster(s);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// Writes <out>.manifest.json next to an output.
inline void write_manifest(const std::string& out, const std::string& command, const RunConfig& cfg,
                           const std::vector<std::string>& inputs) {
  Json m;
  m["tool"] = "dagb";
  m["version"] = kVersion;
  m["command"] = command;
  Json in = Json::array();
  for (const auto& p : inputs) {
    if (p.empty()) continue;
    in.push_back({{"path", p}, {"fnv1a64", hex64(fnv1a(read_file(p)))}});
  }
  m["inputs"] = in;
  const Json cj = to_json(cfg);
  m["config"] = cj;
  m["config_hash"] = hex64(fnv1a(cj.dump()));
  m["seed"] = cfg.seed;
  write_file(out + ".manifest.json", dump(m));
}

inline std::vector<RasterStack> load_stacks(const RunConfig& cfg, bool need_t1) {
  std::vector<RasterStack> stacks;
  if (!cfg.stack_t1.empty()) {
    stacks.push_back(load_raster(cfg.stack_t1));
    stacks.back().epoch_label = "t1";
  } else if (need_t1) {
    throw SchemaError("a t1 raster stack is required");
  }
  if (cfg.stack_t2.empty()) throw SchemaError("a t2 raster stack is required");
  stacks.push_back(load_raster(cfg.stack_t2));
  stacks.back().epoch_label = "t2";
  return stacks;
}

inline void require(const std::string& value, const char* what) {
  if (value.empty()) throw SchemaError(std::string("missing required setting: ") + what);
}

inline EpochBands band_names(const std::vector<RasterStack>& stacks) {
  EpochBands bands;
  for (const auto& s : stacks) {
    auto& names = bands[parse_epoch(s.epoch_label)];
    for (const auto& b : s.bands) names.push_back(b.name);
  }
  return bands;
}

// ---- validate --------------------------------------------------------------

inline int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  int errors = 0, warnings = 0;
  auto error = [&](const char* code, const std::string& msg) {
    out << code << ": " << msg << "\n";
    ++errors;
  };
  auto warn = [&](const char* code, const std::string& msg) {
    out << code << ": " << msg << "\n";
    ++warnings;
  };
  auto classify = [&](const std::exception& e) {
    if (dynamic_cast<const GeometryError*>(&e)) return "E-GEOM";
    if (dynamic_cast<const RangeError*>(&e)) return "E-RANGE";
    return "E-SCHEMA";
  };

  std::optional<PlotTable> plots;
  if (cfg.plots.empty()) error("E-SCHEMA", "no plot table configured");
  else {
    try {
      plots = parse_plot_table(read_file(cfg.plots));
    } catch (const std::exception& e) {
      error(classify(e), cfg.plots + ": " + e.what());
    }
  }

  std::vector<RasterStack> stacks;
  auto load = [&](const std::string& path, const char* label) {
    if (path.empty()) return;
    try {
      stacks.push_back(load_raster(path));
      stacks.back().epoch_label = label;
    } catch (const std::exception& e) {
      error(classify(e), path + ": " + e.what());
    }
  };
  if (cfg.mode == ModelMode::bi_temporal && cfg.stack_t1.empty()) error("E-SCHEMA", "bi_temporal mode needs a t1 stack");
  if (cfg.stack_t2.empty()) error("E-SCHEMA", "no t2 raster stack configured");
  load(cfg.stack_t1, "t1");
  load(cfg.stack_t2, "t2");
  for (std::size_t i = 1; i < stacks.size(); ++i)
    if (!(stacks[i].geometry == stacks[0].geometry))
      error("E-GEOM", "stacks " + stacks[0].epoch_label + " and " + stacks[i].epoch_label + " differ in grid geometry");

  if (!cfg.mask.empty()) {
    try {
      const ForestMask mask = ForestMask::from_stack(load_raster(cfg.mask));
      for (const auto& s : stacks)
        if (!(mask.geometry() == s.geometry))
          error("E-GEOM", "forest mask geometry differs from stack " + s.epoch_label);
    } catch (const std::exception& e) {
      error(classify(e), cfg.mask + ": " + e.what());
    }
  }

  if (cfg.area_ha && !(*cfg.area_ha > 0.0)) error("E-RANGE", "area_ha must be > 0");
  if (cfg.k_max < 1) error("E-RANGE", "k_max must be >= 1");
  if (cfg.m < 1) error("E-RANGE", "m must be >= 1");

  if (plots && !stacks.empty()) {
    for (const auto& p : *plots)
      if (!locate_pixel(stacks.front().geometry, p.x, p.y))
        warn("W-OOB", "plot " + p.plot_id + " lies outside the raster extent");
  }
  out << (errors ? "FAILED" : "OK") << ": " << errors << " error(s), " << warnings << " warning(s)\n";
  return errors ? kInputError : kOk;
}

// ---- fit -------------------------------------------------------------------

inline int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  require(cfg.plots, "plots");
  require(cfg.model, "model (output path)");
  const PlotTable plots = parse_plot_table(read_file(cfg.plots));
  const auto stacks = load_stacks(cfg, cfg.mode == ModelMode::bi_temporal);
  const auto terms = enumerate_terms(band_names(stacks), cfg.mode);
  const auto spectra = extract_plot_spectra(plots, stacks);

  PlotSpectra forest;
  std::map<std::string, double, std::less<>> y_by_id;
  for (std::size_t i = 0; i < plots.size(); ++i) {
    if (!plots[i].forest) continue;
    forest.push_back(spectra[i]);
    y_by_id[plots[i].plot_id] = plots[i].delta_agb;
  }
  const FeatureMatrix fm = build_design(forest, terms);
  if (!cfg.features_out.empty()) write_file(cfg.features_out, feature_matrix_csv(fm));
  Eigen::VectorXd y(static_cast<Eigen::Index>(fm.rows()));
  for (std::size_t i = 0; i < fm.rows(); ++i) y(static_cast<Eigen::Index>(i)) = y_by_id.at(fm.row_ids[i]);

  const ModelFit model = select_model(fm, y, cfg.mode, cfg.k_max, cfg.m);
  write_file(cfg.model, dump(to_json(model)));
  write_manifest(cfg.model, "fit", cfg, {cfg.plots, cfg.stack_t1, cfg.stack_t2});

  Json report;
  report["mode"] = std::string(to_string(cfg.mode));
  report["candidate_pool_size"] = terms.size();
  report["n"] = model.n;
  report["n_excluded_plots"] = fm.excluded.size();
  report["degenerate_ndi_cells"] = fm.degenerate_ndi;
  Json names = Json::array();
  for (const auto& t : model.terms) names.push_back(t.name());
  report["terms"] = names;
  report["adj_r2"] = model.adj_r2;
  report["bic"] = model.bic.perfect ? Json("perfect_fit") : Json(model.bic.value);
  report["max_vif"] = model.max_vif;
  out << dump(report);
  return kOk;
}

// ---- estimate / predict ----------------------------------------------------

inline MapPrediction map_from_config(const RunConfig& cfg, const ModelFit& model, std::vector<RasterStack>& stacks) {
  require(cfg.mask, "mask");
  bool need_t1 = false;
  for (const auto& t : model.terms) need_t1 = need_t1 || t.epoch == Epoch::t1;
  stacks = load_stacks(cfg, need_t1);
  const ForestMask mask = ForestMask::from_stack(load_raster(cfg.mask));
  return predict_map(model, stacks, mask, cfg.workers);
}

inline int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
  require(cfg.plots, "plots");
  require(cfg.model, "model");
  if (!cfg.area_ha || !(*cfg.area_ha > 0.0)) throw RangeError("area_ha must be set and > 0");
  const ModelFit model = model_from_json(Json::parse(read_file(cfg.model), nullptr, true, true));
  const PlotTable plots = parse_plot_table(read_file(cfg.plots));
  std::vector<RasterStack> stacks;
  const MapPrediction mp = map_from_config(cfg, model, stacks);
  const double synthetic_mean = synthetic_mean_for_estimator(mp.stats, cfg.accounting);
  const auto preds = predict_plots(model, extract_plot_spectra(plots, stacks));
  const auto sample = sample_units(plots, preds);
  const EstimateReport rep = estimate(sample, synthetic_mean, *cfg.area_ha);

  Json j = to_json(rep);
  j["accounting"] = std::string(to_string(cfg.accounting));
  j["synthetic_mean_t_per_ha"] = synthetic_mean;
  j["map_stats"] = to_json(mp.stats);
  const std::string text = dump(j);
  if (!cfg.map_out.empty()) save_raster(cfg.map_out, mp.delta_map);
  if (!cfg.out.empty()) {
    write_file(cfg.out, text);
    write_manifest(cfg.out, "estimate", cfg, {cfg.plots, cfg.stack_t1, cfg.stack_t2, cfg.mask, cfg.model});
  } else {
    out << text;
  }
  return kOk;
}

inline int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  require(cfg.model, "model");
  require(cfg.out, "out (map path)");
  const ModelFit model = model_from_json(Json::parse(read_file(cfg.model), nullptr, true, true));
  std::vector<RasterStack> stacks;
  const MapPrediction mp = map_from_config(cfg, model, stacks);
  save_raster(cfg.out, mp.delta_map);
  write_manifest(cfg.out, "predict", cfg, {cfg.stack_t1, cfg.stack_t2, cfg.mask, cfg.model});
  out << dump(to_json(mp.stats));
  return kOk;
}

// ---- simulate --------------------------------------------------------------

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  SimConfig sim;
  try {
    sim = sim_config_from_json(cfg.simulation);
    sim.seed = cfg.seed;
    sim.validate();
    if (cfg.replicates < 100) throw RangeError("invalid simulation config fields: replicates (must be >= 100)");
    if (cfg.sample_size < 2 || cfg.sample_size > sim.n_pixels)
      throw RangeError("invalid simulation config fields: sample_size");
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  }
  PipelineOptions opt;
  opt.mode = cfg.mode;
  opt.k_max = cfg.k_max;
  opt.m = cfg.m;
  opt.accounting = cfg.accounting;
  opt.workers = cfg.workers;
  const MCReport rep = monte_carlo(sim, cfg.sample_size, cfg.replicates, opt);
  Json j = to_json(rep);
  j["simulation"] = to_json(sim);
  const std::string text = dump(j);
  if (!cfg.replicate_csv.empty()) write_file(cfg.replicate_csv, per_replicate_csv(rep));
  if (!cfg.out.empty()) {
    write_file(cfg.out, text);
    write_manifest(cfg.out, "simulate", cfg, {});
  } else {
    out << text;
  }
  return kOk;
}

// ---- entry point -----------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forest biomass change estimation from field plots and satellite rasters"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string plots, t1, t2, mask, model, outp, map_out, features_out, replicate_csv, mode, accounting;
  std::optional<double> area;
  std::optional<std::size_t> k_max, m, replicates, sample_size;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;

  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--config", config_path, "JSON config file; flags override its values");
    sc->add_option("--plots", plots, "plot table (CSV)");
    sc->add_option("--stack-t1", t1, "BGRID raster stack at the start of the period");
    sc->add_option("--stack-t2", t2, "BGRID raster stack at the end of the period");
    sc->add_option("--mask", mask, "BGRID forest mask");
    sc->add_option("--model", model, "model JSON");
    sc->add_option("--out,-o", outp, "output path");
    sc->add_option("--mode", mode, "bi_temporal or uni_temporal");
    sc->add_option("--area", area, "total land area A (ha)");
    sc->add_option("--k-max", k_max, "largest subset size searched");
    sc->add_option("--m", m, "subsets kept per size");
    sc->add_option("--accounting", accounting, "population_mean or forest_mean");
    sc->add_option("--seed", seed, "random seed");
    sc->add_option("--workers", workers, "worker threads");
  };
  auto* validate = app.add_subcommand("validate", "check inputs for format and geometry problems");
  auto* fit = app.add_subcommand("fit", "select and fit a change model");
  auto* est = app.add_subcommand("estimate", "basic-expansion and model-assisted totals");
  auto* pred = app.add_subcommand("predict", "write the change map only");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo validation on a synthetic population");
  for (auto* sc : {validate, fit, est, pred, sim}) add_common(sc);
  fit->add_option("--features-out", features_out, "write the candidate design matrix as CSV");
  est->add_option("--map-out", map_out, "also write the change map (BGRID)");
  sim->add_option("--replicates,-R", replicates, "Monte Carlo replicates (>= 100)");
  sim->add_option("--n", sample_size, "plots per sample");
  sim->add_option("--replicate-csv", replicate_csv, "per-replicate estimates as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = run_config_from_json(Json::parse(read_file(config_path), nullptr, true, true));
    if (!plots.empty()) cfg.plots = plots;
    if (!t1.empty()) cfg.stack_t1 = t1;
    if (!t2.empty()) cfg.stack_t2 = t2;
    if (!mask.empty()) cfg.mask = mask;
    if (!model.empty()) cfg.model = model;
    if (!outp.empty()) cfg.out = outp;
    if (!map_out.empty()) cfg.map_out = map_out;
    if (!features_out.empty()) cfg.features_out = features_out;
    if (!replicate_csv.empty()) cfg.replicate_csv = replicate_csv;
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    if (!accounting.empty()) cfg.accounting = parse_accounting(accounting);
    if (area) cfg.area_ha = *area;
    if (k_max) cfg.k_max = *k_max;
    if (m) cfg.m = *m;
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (replicates) cfg.replicates = *replicates;
    if (sample_size) cfg.sample_size = *sample_size;

    if (validate->parsed()) return cmd_validate(cfg, out);
    if (fit->parsed()) return cmd_fit(cfg, out);
    if (est->parsed()) return cmd_estimate(cfg, out);
    if (pred->parsed()) return cmd_predict(cfg, out);
    return cmd_simulate(cfg, out, err);
  } catch (const SingularDesignError& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const SelectionInfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const GeometryError& e) {
    err << "E-GEOM: " << e.what() << "\n";
    return kInputError;
  } catch (const RangeError& e) {
    err << "E-RANGE: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    err << "E-SCHEMA: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "E-SCHEMA: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace dagb::cli
