#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dagb/epoch.hpp"
#include "dagb/error.hpp"
#include "dagb/plot_table.hpp"
#include "dagb/raster.hpp"

namespace dagb {

enum class SpectrumStatus { ok, out_of_bounds, nodata };

inline std::string_view to_string(SpectrumStatus s) noexcept {
  switch (s) {
    case SpectrumStatus::ok: return "ok";
    case SpectrumStatus::out_of_bounds: return "out_of_bounds";
    case SpectrumStatus::nodata: return "nodata";
  }
  return "?";
}

// Band values under one plot centre, for every epoch supplied.
struct PlotSpectrum {
  std::string plot_id;
  SpectrumStatus status = SpectrumStatus::ok;
  std::optional<PixelIndex> pixel;
  std::map<Epoch, std::map<std::string, double, std::less<>>> values;

  bool usable() const noexcept { return status == SpectrumStatus::ok; }

  std::optional<double> value(Epoch e, std::string_view band) const {
    auto ep = values.find(e);
    if (ep == values.end()) return std::nullopt;
    auto it = ep->second.find(band);
    if (it == ep->second.end()) return std::nullopt;
    return it->second;
  }
};

using PlotSpectra = std::vector<PlotSpectrum>;

// Checks that every stack has a distinct t1/t2 label and identical geometry.
inline void check_stacks(std::span<const RasterStack> stacks) {
  if (stacks.empty()) throw SchemaError("at least one raster stack is required");
  bool have[2] = {false, false};
  for (const auto& s : stacks) {
    const Epoch e = parse_epoch(s.epoch_label);
    auto& flag = have[e == Epoch::t1 ? 0 : 1];
    if (flag) throw SchemaError("more than one raster stack labelled " + s.epoch_label);
    flag = true;
    if (!(s.geometry == stacks.front().geometry))
      throw GeometryError("raster stacks for " + stacks.front().epoch_label + " and " + s.epoch_label +
                          " do not share grid geometry");
  }
}

// Looks up the pixel under each plot centre. Plots outside the grid or on a
// pixel where any band of any epoch is nodata are flagged, not dropped.
inline PlotSpectra extract_plot_spectra(const PlotTable& plots, std::span<const RasterStack> stacks) {
  check_stacks(stacks);
  const auto& g = stacks.front().geometry;
  PlotSpectra out;
  out.reserve(plots.size());
  for (const auto& p : plots) {
    PlotSpectrum ps;
    ps.plot_id = p.plot_id;
    ps.pixel = locate_pixel(g, p.x, p.y);
    if (!ps.pixel) {
      ps.status = SpectrumStatus::out_of_bounds;
      out.push_back(std::move(ps));
      continue;
    }
    const std::size_t idx = ps.pixel->row * g.ncols + ps.pixel->col;
    for (const auto& s : stacks) {
      auto& per_band = ps.values[parse_epoch(s.epoch_label)];
      for (const auto& b : s.bands) {
        const float v = b.values[idx];
        if (s.is_nodata(v)) ps.status = SpectrumStatus::nodata;
        per_band[b.name] = static_cast<double>(v);
      }
    }
    if (ps.status == SpectrumStatus::nodata) ps.values.clear();
    out.push_back(std::move(ps));
  }
  return out;
}

}  // namespace dagb
