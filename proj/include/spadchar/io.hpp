#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "spadchar/error.hpp"
#include "spadchar/text.hpp"

namespace spadchar {

/// Hardware click log: one non-negative integer timestamp (ps) per line,
/// non-decreasing. Blank and `#` lines are skipped.
inline std::vector<std::uint64_t> read_timestamp_log(std::string_view body) {
    std::vector<std::uint64_t> out;
    for (const auto& line : text::data_lines(body)) {
        std::uint64_t ts = 0;
        if (!text::parse_uint(line.content, ts))
            throw ParseError(line.number, "expected a non-negative integer timestamp, got '" +
                                              std::string(line.content) + "'");
        if (!out.empty() && ts < out.back()) throw ParseError(line.number, "timestamps must be non-decreasing");
        out.push_back(ts);
    }
    return out;
}

} // namespace spadchar
