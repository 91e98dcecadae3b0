#pragma once

#include <charconv>
#include <string>

namespace proprio {

/// Shortest round-trip decimal form of a double, independent of locale.
inline std::string format_double(double value) {
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

}  // namespace proprio
