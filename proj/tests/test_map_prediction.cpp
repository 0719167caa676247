#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dagb/map_prediction.hpp"
#include "test_support.hpp"

using namespace dagb;
using Catch::Approx;

namespace {

ModelFit make_model(ModelMode mode, double intercept, std::vector<TermSpec> terms, std::vector<double> coefs) {
  ModelFit m;
  m.mode = mode;
  m.intercept = intercept;
  m.terms = std::move(terms);
  m.coefficients = std::move(coefs);
  m.ranges.assign(m.terms.size(), TermRange{-1e30, 1e30});
  return m;
}

GridGeometry grid(std::size_t ncols, std::size_t nrows) { return {ncols, nrows, 0.0, 10.0 * nrows, 10.0}; }

}  // namespace

TEST_CASE("published model rows evaluate to hand-computed values", "[map]") {
  const auto s2_bi = make_model(ModelMode::bi_temporal, -79.86,
                                {TermSpec::index(Epoch::t1, "B7", "B12"), TermSpec::index(Epoch::t2, "B7", "B12")},
                                {-137.32, 284.0});
  CHECK(predict_point(s2_bi, std::vector<double>{0.5, 0.6}) == Approx(21.88).epsilon(1e-9));
  const auto ls_uni = make_model(ModelMode::uni_temporal, -0.04,
                                 {TermSpec::raw(Epoch::t2, "B5"), TermSpec::raw(Epoch::t2, "B7")}, {0.0095, -0.04});
  CHECK(predict_point(ls_uni, std::vector<double>{1000, 500}) == Approx(-10.54).epsilon(1e-9));
  CHECK(predict_point(ls_uni, std::vector<double>{0, 0}) == -0.04);

  std::map<std::string, double, std::less<>> by_name{{"ndi(B7,B12)@t1", 0.5}, {"ndi(B7,B12)@t2", 0.6}};
  CHECK(predict_point(s2_bi, by_name) == Approx(21.88).epsilon(1e-9));
  by_name.erase("ndi(B7,B12)@t1");
  CHECK_THROWS_AS(predict_point(s2_bi, by_name), SchemaError);
  CHECK_THROWS_AS(predict_point(s2_bi, std::vector<double>{1.0}), SchemaError);
}

TEST_CASE("mask counting on a 2x2 grid", "[map]") {
  const auto g = grid(2, 2);
  const auto t2 = test::make_stack(g, {{"B1", {1, 2, 3, 4}}}, "t2");
  const auto mask = ForestMask::from_values(g, {1, 0, 1, 1});
  const auto model = make_model(ModelMode::uni_temporal, 1.0, {TermSpec::raw(Epoch::t2, "B1")}, {2.0});
  const auto res = predict_map(model, std::span<const RasterStack>(&t2, 1), mask);
  CHECK(res.stats.n_forest_pixels == 3);
  CHECK(res.stats.n_extent_pixels == 4);
  const auto& v = res.delta_map.bands.front().values;
  CHECK(v == std::vector<float>{3, static_cast<float>(kMapNodata), 7, 9});
  CHECK(res.stats.sum_predictions == 19.0);
  CHECK(res.stats.prediction_min == 3.0);
  CHECK(res.stats.prediction_max == 9.0);
}

TEST_CASE("mask faithfulness with nodata bands and nodata mask", "[map][property]") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> mk(0, 5);
  const auto g = grid(13, 37);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> a(g.n_pixels()), b(g.n_pixels()), m(g.n_pixels());
    for (std::size_t i = 0; i < g.n_pixels(); ++i) {
      a[i] = u(gen) < 0.05f ? -9999.0f : u(gen);
      b[i] = u(gen) < 0.05f ? -9999.0f : u(gen);
      const int k = mk(gen);
      m[i] = k == 0 ? -9999.0f : (k < 3 ? 0.0f : 1.0f);
    }
    const std::vector<RasterStack> stacks{test::make_stack(g, {{"red", a}}, "t1"), test::make_stack(g, {{"nir", b}}, "t2")};
    const auto mask = ForestMask::from_values(g, m);
    const auto model = make_model(ModelMode::bi_temporal, 0.5,
                                  {TermSpec::raw(Epoch::t1, "red"), TermSpec::raw(Epoch::t2, "nir")}, {1.0, -1.0});
    const auto res = predict_map(model, stacks, mask, 3);
    std::size_t forest = 0, nodata_in_mask = 0, extent = 0;
    for (std::size_t i = 0; i < g.n_pixels(); ++i) {
      const bool band_nodata = a[i] == -9999.0f || b[i] == -9999.0f;
      const bool predicted = m[i] == 1.0f && !band_nodata;
      REQUIRE((res.delta_map.bands[0].values[i] == static_cast<float>(kMapNodata)) == !predicted);
      if (predicted) {
        ++forest;
        REQUIRE(res.delta_map.bands[0].values[i] == static_cast<float>(0.5 + a[i] - b[i]));
      }
      if (m[i] == 1.0f && band_nodata) ++nodata_in_mask;
      if (m[i] != -9999.0f) ++extent;
    }
    REQUIRE(res.stats.n_forest_pixels == forest);
    REQUIRE(res.stats.n_nodata_in_mask == nodata_in_mask);
    REQUIRE(res.stats.n_extent_pixels == extent - nodata_in_mask);
  }
}

TEST_CASE("constant bands give a constant prediction", "[map]") {
  const auto g = grid(5, 4);
  const auto t2 = test::make_stack(g, {{"B4", std::vector<float>(20, 0.25f)}, {"B7", std::vector<float>(20, 0.5f)}}, "t2");
  const auto mask = ForestMask::from_values(g, std::vector<float>(20, 1.0f));
  const auto model = make_model(ModelMode::uni_temporal, -185.93,
                                {TermSpec::index(Epoch::t2, "B4", "B7")}, {-485.72});
  const auto res = predict_map(model, std::span<const RasterStack>(&t2, 1), mask);
  const double expected = predict_point(model, std::vector<double>{ndi(0.25, 0.5).value});
  CHECK(synthetic_mean_for_estimator(res.stats, Accounting::population_mean) == Approx(expected).epsilon(1e-12));
  CHECK(synthetic_mean_for_estimator(res.stats, Accounting::forest_mean) ==
        synthetic_mean_for_estimator(res.stats, Accounting::population_mean));
  CHECK(res.stats.prediction_min == res.stats.prediction_max);
}

TEST_CASE("out-of-range fraction", "[map]") {
  const auto g = grid(2, 2);
  const auto t2 = test::make_stack(g, {{"x", {0.1f, 0.2f, 0.5f, 0.4f}}}, "t2");
  const auto mask = ForestMask::from_values(g, {1, 1, 1, 1});
  auto model = make_model(ModelMode::uni_temporal, 0.0, {TermSpec::raw(Epoch::t2, "x")}, {1.0});
  model.ranges = {TermRange{static_cast<double>(0.1f), static_cast<double>(0.4f)}};
  const auto res = predict_map(model, std::span<const RasterStack>(&t2, 1), mask);
  CHECK(res.stats.n_out_of_range == 1);
  CHECK(res.stats.out_of_range_fraction == 0.25);
}

TEST_CASE("accounting conventions", "[map]") {
  MapStats s;
  s.n_forest_pixels = 2;
  s.n_extent_pixels = 4;
  s.sum_predictions = 30.0;
  CHECK(synthetic_mean_for_estimator(s, Accounting::population_mean) == 7.5);
  CHECK(synthetic_mean_for_estimator(s, Accounting::forest_mean) == 15.0);
  MapStats none;
  none.n_extent_pixels = 4;
  CHECK(synthetic_mean_for_estimator(none, Accounting::population_mean) == 0.0);
  CHECK_THROWS_AS(synthetic_mean_for_estimator(none, Accounting::forest_mean), RangeError);
  CHECK(parse_accounting("forest_mean") == Accounting::forest_mean);
  CHECK(to_string(Accounting::population_mean) == "population_mean");
  CHECK_THROWS_AS(parse_accounting("mean"), SchemaError);
}

TEST_CASE("map with no forest", "[map]") {
  const auto g = grid(3, 3);
  const auto t2 = test::make_stack(g, {{"x", std::vector<float>(9, 1.0f)}}, "t2");
  const auto mask = ForestMask::from_values(g, std::vector<float>(9, 0.0f));
  const auto model = make_model(ModelMode::uni_temporal, 1.0, {TermSpec::raw(Epoch::t2, "x")}, {1.0});
  const auto res = predict_map(model, std::span<const RasterStack>(&t2, 1), mask);
  CHECK(res.stats.n_forest_pixels == 0);
  CHECK(std::isnan(res.stats.prediction_min));
  CHECK(synthetic_mean_for_estimator(res.stats, Accounting::population_mean) == 0.0);
  CHECK_THROWS_AS(synthetic_mean_for_estimator(res.stats, Accounting::forest_mean), RangeError);
}

TEST_CASE("geometry mismatch and missing bands are rejected", "[map]") {
  const auto t2 = test::make_stack(grid(3, 3), {{"x", std::vector<float>(9, 1.0f)}}, "t2");
  const auto mask = ForestMask::from_values(grid(3, 2), std::vector<float>(6, 1.0f));
  const auto model = make_model(ModelMode::uni_temporal, 1.0, {TermSpec::raw(Epoch::t2, "x")}, {1.0});
  CHECK_THROWS_AS(predict_map(model, std::span<const RasterStack>(&t2, 1), mask), GeometryError);
  const auto good_mask = ForestMask::from_values(grid(3, 3), std::vector<float>(9, 1.0f));
  const auto other = make_model(ModelMode::uni_temporal, 1.0, {TermSpec::raw(Epoch::t2, "y")}, {1.0});
  CHECK_THROWS_AS(predict_map(other, std::span<const RasterStack>(&t2, 1), good_mask), SchemaError);
  const auto needs_t1 = make_model(ModelMode::bi_temporal, 1.0, {TermSpec::raw(Epoch::t1, "x")}, {1.0});
  CHECK_THROWS_AS(predict_map(needs_t1, std::span<const RasterStack>(&t2, 1), good_mask), SchemaError);
}

TEST_CASE("worker count does not change any bit of the result", "[map][property]") {
  std::mt19937_64 gen(22);
  std::normal_distribution<float> z(0.3f, 0.2f);
  const auto g = grid(101, 203);
  std::vector<float> a(g.n_pixels()), b(g.n_pixels()), m(g.n_pixels());
  for (std::size_t i = 0; i < g.n_pixels(); ++i) {
    a[i] = z(gen);
    b[i] = z(gen);
    m[i] = (i % 7) ? 1.0f : 0.0f;
  }
  const auto t2 = test::make_stack(g, {{"a", a}, {"b", b}}, "t2");
  const auto mask = ForestMask::from_values(g, m);
  const auto model = make_model(ModelMode::uni_temporal, 12.5,
                                {TermSpec::index(Epoch::t2, "a", "b"), TermSpec::raw(Epoch::t2, "b")}, {-40.1, 73.3});
  const auto one = predict_map(model, std::span<const RasterStack>(&t2, 1), mask, 1);
  for (unsigned w : {2u, 3u, 4u, 8u, 64u}) {
    const auto k = predict_map(model, std::span<const RasterStack>(&t2, 1), mask, w);
    REQUIRE(std::bit_cast<std::uint64_t>(k.stats.sum_predictions) == std::bit_cast<std::uint64_t>(one.stats.sum_predictions));
    REQUIRE(k.delta_map.bands[0].values == one.delta_map.bands[0].values);
    REQUIRE(k.stats.n_out_of_range == one.stats.n_out_of_range);
  }
}

TEST_CASE("linearity in the coefficients", "[map][property]") {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto model = make_model(ModelMode::uni_temporal, u(gen),
                            {TermSpec::raw(Epoch::t2, "a"), TermSpec::raw(Epoch::t2, "b"), TermSpec::raw(Epoch::t2, "c")},
                            {u(gen), u(gen), u(gen)});
    const std::vector<double> x{u(gen), u(gen), u(gen)};
    const double c = u(gen);
    auto scaled = model;
    for (auto& k : scaled.coefficients) k *= c;
    scaled.intercept *= c;
    const double lhs = predict_point(scaled, x);
    const double rhs = c * (predict_point(model, x) - model.intercept) + c * model.intercept;
    REQUIRE(lhs == Approx(rhs).epsilon(1e-9).margin(1e-6));
  }
}

TEST_CASE("predictions are not truncated", "[map]") {
  const auto g = grid(2, 1);
  const auto t2 = test::make_stack(g, {{"x", {-5.0f, 5.0f}}}, "t2");
  const auto mask = ForestMask::from_values(g, {1, 1});
  const auto model = make_model(ModelMode::uni_temporal, 0.0, {TermSpec::raw(Epoch::t2, "x")}, {100.0});
  const auto res = predict_map(model, std::span<const RasterStack>(&t2, 1), mask);
  CHECK(res.stats.prediction_min == -500.0);
  CHECK(res.stats.prediction_max == 500.0);
}
