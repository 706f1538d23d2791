#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace hetcsma {

/// Shortest round-trip decimal form of a double.
inline std::string fmt(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

} // namespace hetcsma
