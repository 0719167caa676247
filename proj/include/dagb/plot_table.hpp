#pragma once

#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dagb/error.hpp"

namespace dagb {

// One permanent field plot measured at both ends of the period.
struct PlotRecord {
  std::string plot_id;
  double x = 0.0;
  double y = 0.0;
  bool forest = false;
  double agb_t1 = 0.0;  // t/ha
  double agb_t2 = 0.0;  // t/ha
  double delta_agb = 0.0;  // agb_t2 - agb_t1, t/ha per period
};

using PlotTable = std::vector<PlotRecord>;

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline bool parse_number(std::string_view s, double& out) noexcept {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

// Parses a comma-separated plot table. Required columns, in any order:
// plot_id, x, y, forest, agb_t1, agb_t2. Extra columns are ignored.
inline PlotTable parse_plot_table(std::string_view text) {
  static constexpr std::string_view required[] = {"plot_id", "x", "y", "forest", "agb_t1", "agb_t2"};

  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      lines.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
  }
  if (lines.empty() || detail::trim(lines.front()).empty()) throw SchemaError("plot table has no header row");

  auto header = detail::split_commas(lines.front());
  // A UTF-8 byte-order mark is tolerated on the first column name.
  if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF")) header.front().remove_prefix(3);
  std::map<std::string_view, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(header[i], i);
  for (auto name : required)
    if (!col.contains(name)) throw SchemaError("plot table is missing required column '" + std::string(name) + "'");

  PlotTable table;
  std::set<std::string> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (detail::trim(lines[li]).empty()) continue;
    auto fields = detail::split_commas(lines[li]);
    if (fields.size() != header.size())
      throw RowError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));

    auto number = [&](std::string_view name) {
      double v = 0.0;
      const auto raw = fields[col.at(name)];
      if (!detail::parse_number(raw, v))
        throw RowError(line_no, "column '" + std::string(name) + "' is not numeric: '" + std::string(raw) + "'");
      return v;
    };

    PlotRecord r;
    r.plot_id = std::string(fields[col.at("plot_id")]);
    if (r.plot_id.empty()) throw RowError(line_no, "empty plot_id");
    r.x = number("x");
    r.y = number("y");
    const double f = number("forest");
    if (f != 0.0 && f != 1.0) throw RowError(line_no, "forest indicator must be 0 or 1");
    r.forest = f == 1.0;
    r.agb_t1 = number("agb_t1");
    r.agb_t2 = number("agb_t2");
    if (r.agb_t1 < 0.0 || r.agb_t2 < 0.0) throw RowError(line_no, "AGB must be non-negative");
    r.delta_agb = r.agb_t2 - r.agb_t1;
    if (!seen.insert(r.plot_id).second) throw RowError(line_no, "duplicate plot_id '" + r.plot_id + "'");
    table.push_back(std::move(r));
  }
  return table;
}

}  // namespace dagb
