#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace propwatch {

using Instant = std::chrono::sys_seconds;

/// Parses `YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM|-HH:MM]`. A missing offset is read as UTC.
/// Throws Error(parse) on malformed input.
Instant parse_iso8601(std::string_view text);

/// Always `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Instant t);

/// `YYYY-MM-DD` of the UTC calendar day containing `t`.
std::string format_date(Instant t);

inline Instant from_unix(std::int64_t seconds) { return Instant{std::chrono::seconds{seconds}}; }
inline std::int64_t to_unix(Instant t) { return t.time_since_epoch().count(); }

/// Days since 1970-01-01 (floor), i.e. the UTC calendar day index.
inline std::int64_t day_index(Instant t) {
    return std::chrono::floor<std::chrono::days>(t).time_since_epoch().count();
}

/// Seconds elapsed since the preceding UTC midnight, in [0, 86400).
inline std::int64_t seconds_of_day(Instant t) {
    return (t - std::chrono::floor<std::chrono::days>(t)).count();
}

}  // namespace propwatch
