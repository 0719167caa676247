#pragma once

// BGRID raster container and its bit-exact binary codec.
//
// Layout: five "\n"-terminated ASCII header lines
//   BGRID1
//   <ncols> <nrows> <nbands>
//   <x0> <y0> <pixel_size>
//   <nodata>
//   <band names, space separated>
// followed by nbands*nrows*ncols float32 little-endian values, band
// sequential, row-major from the top-left pixel.
//
// The writer emits the shortest decimal text that round-trips each double,
// so write(read(b)) == b holds for every file in that canonical form.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dagb/error.hpp"

namespace dagb {

struct GridGeometry {
  std::size_t ncols = 0;
  std::size_t nrows = 0;
  double x0 = 0.0;  // left edge of the top-left pixel (m)
  double y0 = 0.0;  // top edge of the top-left pixel (m)
  double pixel_size = 1.0;

  std::size_t n_pixels() const noexcept { return ncols * nrows; }
  // Pixel area in hectares.
  double pixel_area_ha() const noexcept { return pixel_size * pixel_size / 10000.0; }

  bool operator==(const GridGeometry&) const = default;
};

struct Band {
  std::string name;
  std::vector<float> values;  // row-major, nrows*ncols

  bool operator==(const Band&) const = default;
};

struct RasterStack {
  GridGeometry geometry;
  double nodata = -9999.0;
  std::vector<Band> bands;
  std::string epoch_label;  // not serialized; set by the caller

  const Band* find_band(std::string_view name) const noexcept {
    for (const auto& b : bands)
      if (b.name == name) return &b;
    return nullptr;
  }

  const Band& band(std::string_view name) const {
    if (const Band* b = find_band(name)) return *b;
    throw SchemaError("raster has no band named '" + std::string(name) + "'");
  }

  bool is_nodata(float v) const noexcept {
    if (std::isnan(nodata)) return std::isnan(v);
    return v == static_cast<float>(nodata);
  }

  // Throws if the stack breaks its structural invariants.
  void validate() const {
    const auto& g = geometry;
    if (!std::isfinite(g.x0) || !std::isfinite(g.y0) || !std::isfinite(g.pixel_size))
      throw FormatError("raster geometry contains a non-finite value");
    if (!(g.pixel_size > 0.0)) throw FormatError("pixel_size must be > 0");
    if (g.ncols == 0 || g.nrows == 0) throw FormatError("raster must have at least one row and column");
    if (bands.empty()) throw FormatError("raster must have at least one band");
    std::set<std::string> names;
    for (const auto& b : bands) {
      if (b.name.empty() || b.name.find_first_of(" \t\r\n") != std::string::npos)
        throw FormatError("band names must be non-empty and contain no whitespace");
      if (!names.insert(b.name).second) throw FormatError("duplicate band name '" + b.name + "'");
      if (b.values.size() != g.n_pixels())
        throw LengthError("band '" + b.name + "' has " + std::to_string(b.values.size()) +
                          " values, expected " + std::to_string(g.n_pixels()));
    }
  }
};

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PixelIndex&) const = default;
};

// Cell containing (x, y); cells are closed on their left/top edges.
// Returns nullopt outside the grid.
inline std::optional<PixelIndex> locate_pixel(const GridGeometry& g, double x, double y) noexcept {
  if (!std::isfinite(x) || !std::isfinite(y)) return std::nullopt;
  const double c = std::floor((x - g.x0) / g.pixel_size);
  const double r = std::floor((g.y0 - y) / g.pixel_size);
  if (c < 0.0 || r < 0.0) return std::nullopt;
  if (c >= static_cast<double>(g.ncols) || r >= static_cast<double>(g.nrows)) return std::nullopt;
  return PixelIndex{static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
}

inline std::optional<PixelIndex> locate_pixel(const RasterStack& s, double x, double y) noexcept {
  return locate_pixel(s.geometry, x, y);
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const char* what) {
  if (s == "nan" || s == "NaN") return std::nan("");
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(std::string("cannot parse ") + what + " from '" + std::string(s) + "'");
  return v;
}

inline std::size_t parse_count(std::string_view s, const char* what) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(std::string("cannot parse ") + what + " from '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::uint32_t to_le(std::uint32_t v) noexcept {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  } else {
    return v;
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> write_raster(const RasterStack& stack) {
  stack.validate();
  const auto& g = stack.geometry;
  std::string header = "BGRID1\n";
  header += std::to_string(g.ncols) + " " + std::to_string(g.nrows) + " " +
            std::to_string(stack.bands.size()) + "\n";
  header += detail::format_double(g.x0) + " " + detail::format_double(g.y0) + " " +
            detail::format_double(g.pixel_size) + "\n";
  header += detail::format_double(stack.nodata) + "\n";
  for (std::size_t i = 0; i < stack.bands.size(); ++i) {
    if (i) header += ' ';
    header += stack.bands[i].name;
  }
  header += '\n';

  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t offset = out.size();
  out.resize(offset + stack.bands.size() * g.n_pixels() * 4);
  std::uint8_t* p = out.data() + offset;
  for (const auto& b : stack.bands) {
    for (float v : b.values) {
      const std::uint32_t bits = detail::to_le(std::bit_cast<std::uint32_t>(v));
      std::memcpy(p, &bits, 4);
      p += 4;
    }
  }
  return out;
}

inline RasterStack read_raster(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_line = [&](const char* what) -> std::string_view {
    const auto* begin = reinterpret_cast<const char*>(bytes.data()) + pos;
    const auto remaining = bytes.size() - pos;
    const void* nl = std::memchr(begin, '\n', remaining);
    if (!nl) throw FormatError(std::string("truncated header: missing ") + what + " line");
    const auto len = static_cast<std::size_t>(static_cast<const char*>(nl) - begin);
    pos += len + 1;
    return {begin, len};
  };

  if (bytes.size() < 7 || std::memcmp(bytes.data(), "BGRID1\n", 7) != 0)
    throw FormatError("bad magic: not a BGRID1 file");
  pos = 7;

  RasterStack s;
  auto dims = detail::split_spaces(next_line("dimensions"));
  if (dims.size() != 3) throw FormatError("dimension line must hold 'ncols nrows nbands'");
  s.geometry.ncols = detail::parse_count(dims[0], "ncols");
  s.geometry.nrows = detail::parse_count(dims[1], "nrows");
  const std::size_t nbands = detail::parse_count(dims[2], "nbands");

  auto geo = detail::split_spaces(next_line("geometry"));
  if (geo.size() != 3) throw FormatError("geometry line must hold 'x0 y0 pixel_size'");
  s.geometry.x0 = detail::parse_double(geo[0], "x0");
  s.geometry.y0 = detail::parse_double(geo[1], "y0");
  s.geometry.pixel_size = detail::parse_double(geo[2], "pixel_size");
  if (std::isnan(s.geometry.x0) || std::isnan(s.geometry.y0) || std::isnan(s.geometry.pixel_size))
    throw FormatError("NaN in header geometry");

  auto nod = detail::split_spaces(next_line("nodata"));
  if (nod.size() != 1) throw FormatError("nodata line must hold a single value");
  s.nodata = detail::parse_double(nod[0], "nodata");

  auto names = detail::split_spaces(next_line("band names"));
  if (names.size() != nbands)
    throw FormatError("header declares " + std::to_string(nbands) + " bands but names " +
                      std::to_string(names.size()));

  const std::size_t npix = s.geometry.n_pixels();
  const std::size_t expected = nbands * npix * 4;
  const std::size_t available = bytes.size() - pos;
  if (available != expected)
    throw LengthError("payload has " + std::to_string(available) + " bytes, header declares " +
                      std::to_string(expected));

  s.bands.reserve(nbands);
  const std::uint8_t* p = bytes.data() + pos;
  for (std::size_t b = 0; b < nbands; ++b) {
    Band band{std::string(names[b]), std::vector<float>(npix)};
    for (auto& v : band.values) {
      std::uint32_t bits;
      std::memcpy(&bits, p, 4);
      v = std::bit_cast<float>(detail::to_le(bits));
      p += 4;
    }
    s.bands.push_back(std::move(band));
  }
  s.validate();
  return s;
}

// Binary forest/non-forest layer; a BGRID with one band named "mask".
class ForestMask {
public:
  static ForestMask from_stack(RasterStack stack) {
    if (stack.bands.size() != 1 || stack.bands.front().name != "mask")
      throw SchemaError("forest mask must have exactly one band named 'mask'");
    for (float v : stack.bands.front().values) {
      if (stack.is_nodata(v)) continue;
      if (v != 0.0f && v != 1.0f) throw RangeError("forest mask values must be 0, 1 or nodata");
    }
    ForestMask m;
    m.stack_ = std::move(stack);
    return m;
  }

  static ForestMask from_values(const GridGeometry& g, std::vector<float> values, double nodata = -9999.0) {
    RasterStack s;
    s.geometry = g;
    s.nodata = nodata;
    s.bands.push_back({"mask", std::move(values)});
    s.validate();
    return from_stack(std::move(s));
  }

  const GridGeometry& geometry() const noexcept { return stack_.geometry; }
  const RasterStack& stack() const noexcept { return stack_; }

  bool is_forest(std::size_t idx) const noexcept { return stack_.bands.front().values[idx] == 1.0f; }
  bool is_nodata(std::size_t idx) const noexcept { return stack_.is_nodata(stack_.bands.front().values[idx]); }

private:
  RasterStack stack_;
};

}  // namespace dagb
