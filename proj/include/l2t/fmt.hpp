#pragma once

#include <cstdio>
#include <string>

namespace l2t {

// Shortest exact decimal we bother with: 17 significant digits round-trip any
// double bit-exactly through strtod.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace l2t
