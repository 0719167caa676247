#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "dagb/cli.hpp"
#include "test_support.hpp"

using namespace dagb;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("dagb_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dagb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

Json parse(const std::string& text) { return Json::parse(text); }

// 4x4 grid, 10 m pixels, band B1 = column + 1.
struct HandFixture {
  TempDir dir;
  std::string plots = dir.file("plots.csv"), t2 = dir.file("t2.bgrid"), mask = dir.file("mask.bgrid"),
              model = dir.file("model.json");
  HandFixture() {
    const GridGeometry g{4, 4, 0.0, 40.0, 10.0};
    std::vector<float> b1(16);
    for (std::size_t i = 0; i < 16; ++i) b1[i] = static_cast<float>(i % 4 + 1);
    cli::save_raster(t2, test::make_stack(g, {{"B1", b1}}, "t2"));
    const std::vector<float> m{1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0};
    cli::save_raster(mask, test::make_stack(g, {{"mask", m}}, "t2"));
    cli::write_file(plots,
                    "plot_id,x,y,forest,agb_t1,agb_t2\n"
                    "p1,5,35,1,100,110\n"
                    "p2,25,25,1,50,40\n"
                    "p3,15,15,0,0,0\n"
                    "p4,35,5,1,80,86\n");
    cli::write_file(model, R"({"mode": "uni_temporal",
      "terms": [{"kind": "raw", "epoch": "t2", "bands": ["B1"]}],
      "intercept": 1, "coefficients": [2]})");
  }
};

// Random bi-temporal stacks with plots at pixel centres and a planted change model.
struct FitFixture {
  TempDir dir;
  std::string plots = dir.file("plots.csv"), t1 = dir.file("t1.bgrid"), t2 = dir.file("t2.bgrid"),
              mask = dir.file("mask.bgrid");
  explicit FitFixture(std::size_t nbands = 3, std::size_t nplots = 120) {
    const GridGeometry g{30, 20, 500.0, 1000.0, 20.0};
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<float> u(0.05f, 0.6f);
    std::normal_distribution<double> noise(0.0, 0.3);
    auto bands = [&] {
      std::vector<Band> out;
      for (std::size_t b = 0; b < nbands; ++b) {
        std::vector<float> v(g.n_pixels());
        for (auto& x : v) x = u(gen);
        out.push_back({"B" + std::to_string(b + 1), v});
      }
      return out;
    };
    const auto s1 = test::make_stack(g, bands(), "t1");
    const auto s2 = test::make_stack(g, bands(), "t2");
    cli::save_raster(t1, s1);
    cli::save_raster(t2, s2);
    cli::save_raster(mask, test::make_stack(g, {{"mask", std::vector<float>(g.n_pixels(), 1.0f)}}, "t2"));
    std::string csv = "plot_id,x,y,forest,agb_t1,agb_t2\n";
    for (std::size_t i = 0; i < nplots; ++i) {
      const std::size_t k = i * (g.n_pixels() / nplots);
      const double x = g.x0 + (static_cast<double>(k % g.ncols) + 0.5) * g.pixel_size;
      const double y = g.y0 - (static_cast<double>(k / g.ncols) + 0.5) * g.pixel_size;
      const double delta = 5.0 + 40.0 * s2.bands[0].values[k] - 30.0 * s1.bands[2].values[k] + noise(gen);
      csv += "q" + std::to_string(i) + "," + std::to_string(x) + "," + std::to_string(y) + ",1,100," +
             std::to_string(100.0 + delta) + "\n";
    }
    cli::write_file(plots, csv);
  }
};

}  // namespace

TEST_CASE("hand fixture estimate matches hand arithmetic", "[cli]") {
  HandFixture f;
  const auto r = run({"estimate", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask, "--model", f.model,
                      "--area", "1600"});
  REQUIRE(r.code == 0);
  const auto j = parse(r.out);
  CHECK(j["n"] == 4);
  CHECK(j["synthetic_mean_t_per_ha"].get<double>() == 2.9375);
  CHECK(j["map_stats"]["n_forest_pixels"] == 9);
  CHECK(j["t_be_Mt"].get<double>() == Approx(2400e-6).epsilon(1e-12));
  CHECK(j["var_be_Mt2"].get<double>() == Approx(2560000.0 * 227.0 / 12.0 * 1e-12).epsilon(1e-12));
  CHECK(j["synthetic_component_Mt"].get<double>() == Approx(4700e-6).epsilon(1e-12));
  CHECK(j["correction_component_Mt"].get<double>() == Approx(-5200e-6).epsilon(1e-12));
  CHECK(j["t_ma_Mt"].get<double>() == Approx(-500e-6).epsilon(1e-12));
  CHECK(j["var_ma_Mt2"].get<double>() == Approx(2560000.0 / 12.0 * 304.75 * 1e-12).epsilon(1e-12));
  CHECK(j["re"].get<double>() == Approx(227.0 / 304.75).epsilon(1e-12));
  for (const char* key : {"A_ha", "se_be_Mt", "se_ma_Mt", "ci95_be_Mt", "ci95_ma_Mt", "accounting"})
    CHECK(j.contains(key));

  const auto fm = run({"estimate", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask, "--model", f.model,
                       "--area", "1600", "--accounting", "forest_mean"});
  REQUIRE(fm.code == 0);
  CHECK(parse(fm.out)["synthetic_mean_t_per_ha"].get<double>() == Approx(47.0 / 9.0));
}

TEST_CASE("estimate writes outputs, manifest and a map", "[cli]") {
  HandFixture f;
  const auto out = f.dir.file("est.json"), map = f.dir.file("map.bgrid");
  const auto r = run({"estimate", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask, "--model", f.model,
                      "--area", "1600", "--out", out, "--map-out", map});
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(out + ".manifest.json"));
  const auto manifest = parse(cli::read_file(out + ".manifest.json"));
  CHECK(manifest["command"] == "estimate");
  CHECK(manifest["inputs"].size() == 4);
  const auto first = cli::read_file(out);
  REQUIRE(run({"estimate", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask, "--model", f.model, "--area",
               "1600", "--out", out, "--workers", "4"})
              .code == 0);
  CHECK(cli::read_file(out) == first);
  const auto m = cli::load_raster(map);
  CHECK(m.bands.front().values[0] == 3.0f);
  CHECK(m.bands.front().values[7] == static_cast<float>(kMapNodata));
}

TEST_CASE("null model makes both estimators agree", "[cli]") {
  HandFixture f;
  cli::write_file(f.model, R"({"mode": "uni_temporal",
      "terms": [{"kind": "raw", "epoch": "t2", "bands": ["B1"]}], "intercept": 0, "coefficients": [0]})");
  const auto r = run({"estimate", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask, "--model", f.model,
                      "--area", "1600"});
  REQUIRE(r.code == 0);
  const auto j = parse(r.out);
  CHECK(j["t_ma_Mt"].get<double>() == j["t_be_Mt"].get<double>());
  CHECK(j["var_ma_Mt2"].get<double>() == j["var_be_Mt2"].get<double>());
  CHECK(j["re"].get<double>() == 1.0);
}

TEST_CASE("validate", "[cli]") {
  HandFixture f;
  auto ok = run({"validate", "--mode", "uni_temporal", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("OK") != std::string::npos);

  // a plot outside the extent only warns
  cli::write_file(f.plots, "plot_id,x,y,forest,agb_t1,agb_t2\na,5,35,1,1,2\nb,500,500,1,1,2\n");
  auto oob = run({"validate", "--mode", "uni_temporal", "--plots", f.plots, "--stack-t2", f.t2, "--mask", f.mask});
  CHECK(oob.code == 0);
  CHECK(oob.out.find("W-OOB") != std::string::npos);

  // mismatched grids are errors
  const auto other = f.dir.file("t1.bgrid");
  cli::save_raster(other, test::make_stack({3, 4, 0.0, 40.0, 10.0}, {{"B1", std::vector<float>(12, 1.0f)}}, "t1"));
  auto geom = run({"validate", "--plots", f.plots, "--stack-t1", other, "--stack-t2", f.t2, "--mask", f.mask});
  CHECK(geom.code == 1);
  CHECK(geom.out.find("E-GEOM") != std::string::npos);

  cli::write_file(f.plots, "plot_id,x,forest,agb_t1,agb_t2\na,5,1,1,2\n");
  auto schema = run({"validate", "--mode", "uni_temporal", "--plots", f.plots, "--stack-t2", f.t2});
  CHECK(schema.code == 1);
  CHECK(schema.out.find("E-SCHEMA") != std::string::npos);
}

TEST_CASE("fit recovers a planted model", "[cli]") {
  FitFixture f;
  const auto model = f.dir.file("model.json"), features = f.dir.file("features.csv");
  const auto r = run({"fit", "--plots", f.plots, "--stack-t1", f.t1, "--stack-t2", f.t2, "--model", model, "--k-max",
                      "3", "--m", "10", "--features-out", features});
  REQUIRE(r.code == 0);
  const auto rep = parse(r.out);
  CHECK(rep["candidate_pool_size"] == 12);
  CHECK(rep["terms"] == Json::array({"raw(B3)@t1", "raw(B1)@t2"}));
  const auto m = model_from_json(parse(cli::read_file(model)));
  CHECK(m.coefficients[0] == Approx(-30.0).margin(0.5));
  CHECK(m.coefficients[1] == Approx(40.0).margin(0.5));
  CHECK(m.intercept == Approx(5.0).margin(0.5));
  CHECK(fs::exists(model + ".manifest.json"));
  CHECK(cli::read_file(features).rfind("plot_id,", 0) == 0);

  const auto uni = run({"fit", "--mode", "uni_temporal", "--plots", f.plots, "--stack-t2", f.t2, "--model", model,
                        "--k-max", "3", "--m", "10"});
  REQUIRE(uni.code == 0);
  CHECK(parse(uni.out)["candidate_pool_size"] == 6);
  for (const auto& t : parse(uni.out)["terms"]) CHECK(t.get<std::string>().ends_with("@t2"));
}

TEST_CASE("ten bands per epoch give 110 bi-temporal candidates", "[cli]") {
  FitFixture f(10, 150);
  const auto model = f.dir.file("model.json");
  const auto r = run({"fit", "--plots", f.plots, "--stack-t1", f.t1, "--stack-t2", f.t2, "--model", model});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(parse(r.out)["candidate_pool_size"] == 110);
}

TEST_CASE("config file and flag overrides", "[cli]") {
  HandFixture f;
  const auto cfg = f.dir.file("run.json");
  cli::write_file(cfg, Json{{"plots", f.plots},
                            {"stacks", {{"t2", f.t2}}},
                            {"mask", f.mask},
                            {"model", f.model},
                            {"area_ha", 3200.0},
                            {"mode", "uni_temporal"}}
                           .dump());
  const auto r = run({"estimate", "--config", cfg, "--area", "1600"});
  REQUIRE(r.code == 0);
  CHECK(parse(r.out)["A_ha"].get<double>() == 1600.0);
  CHECK(run({"estimate", "--config", f.dir.file("missing.json")}).code == 1);
  CHECK(run({"estimate", "--plots", f.plots}).code == 1);
  CHECK(run({"bogus"}).code == 1);
}

TEST_CASE("simulate", "[cli]") {
  TempDir dir;
  const auto cfg = dir.file("sim.json");
  cli::write_file(cfg, Json{{"mode", "uni_temporal"}, {"k_max", 3}, {"m", 10}, {"sample_size", 100},
                            {"simulation", {{"n_pixels", 3000}}}}
                           .dump());
  const auto a = run({"simulate", "--config", cfg, "-R", "100", "--seed", "4"});
  const auto b = run({"simulate", "--config", cfg, "-R", "100", "--seed", "4", "--workers", "2"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto j = parse(a.out);
  CHECK(j["empirical_re"].get<double>() > 1.0);
  CHECK(j["replicates"] == 100);

  const auto csv = dir.file("reps.csv");
  REQUIRE(run({"simulate", "--config", cfg, "-R", "100", "--replicate-csv", csv}).code == 0);
  const auto text = cli::read_file(csv);
  CHECK(std::count(text.begin(), text.end(), '\n') == 101);

  CHECK(run({"simulate", "--config", cfg, "-R", "0"}).code == 2);
  cli::write_file(cfg, Json{{"simulation", {{"harvest_probability", 2.0}}}}.dump());
  const auto bad = run({"simulate", "--config", cfg});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("harvest_probability") != std::string::npos);
}

TEST_CASE("the installed binary runs", "[cli]") {
  HandFixture f;
  const auto out = f.dir.file("bin.json");
  const std::string cmd = std::string(DAGB_CLI_PATH) + " estimate --plots " + f.plots + " --stack-t2 " + f.t2 +
                          " --mask " + f.mask + " --model " + f.model + " --area 1600 --out " + out;
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(parse(cli::read_file(out))["t_ma_Mt"].get<double>() == Approx(-500e-6).epsilon(1e-12));
  CHECK(std::system((std::string(DAGB_CLI_PATH) + " --version > /dev/null").c_str()) == 0);
}
