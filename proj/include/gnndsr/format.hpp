#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace gnndsr {

// Shortest representation that round-trips a double exactly; keeps report
// files byte-reproducible.
inline std::string format_g17(double v) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace gnndsr
