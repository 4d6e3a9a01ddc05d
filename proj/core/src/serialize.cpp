#include "cobra/serialize.hpp"

#include <charconv>
#include <cmath>

namespace cobra::io {

std::string format_g6(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

}  // namespace cobra::io
