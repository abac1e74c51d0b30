#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace blq {

// Shortest round-trip decimal text for a double ("nan"/"inf" for non-finite values).
std::string format_number(double v);

// 64-bit FNV-1a digest rendered as 16 hex digits.
std::string digest_hex(std::string_view text);

} // namespace blq
