#pragma once

#include <string>
#include <string_view>

#include "dagb/error.hpp"

namespace dagb {

// Start (t1) and end (t2) of the monitoring period.
enum class Epoch { t1, t2 };

inline std::string_view to_string(Epoch e) noexcept { return e == Epoch::t1 ? "t1" : "t2"; }

inline Epoch parse_epoch(std::string_view s) {
  if (s == "t1") return Epoch::t1;
  if (s == "t2") return Epoch::t2;
  throw SchemaError("unknown epoch label '" + std::string(s) + "' (expected t1 or t2)");
}

}  // namespace dagb
