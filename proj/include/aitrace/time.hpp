#ifndef AITRACE_TIME_HPP
#define AITRACE_TIME_HPP

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aitrace {

using Millis = std::chrono::milliseconds;
/// UTC instant at millisecond precision.
using Instant = std::chrono::sys_time<Millis>;

class TimeParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses an RFC 3339 timestamp (`2025-05-13T19:02:00.000Z`, offsets such as
/// `-04:00` are accepted and normalized to UTC). Fractions beyond milliseconds
/// are truncated.
Instant parse_rfc3339(std::string_view text);

/// Canonical rendering: `YYYY-MM-DDTHH:MM:SS.mmmZ`.
std::string format_rfc3339(Instant t);

/// Fixed offset from UTC, in minutes. No DST rules are applied.
struct TzOffset {
    std::int32_t minutes = 0;

    static constexpr std::int32_t kLimit = 14 * 60;

    constexpr Millis as_duration() const { return std::chrono::minutes(minutes); }
};

/// Throws std::invalid_argument when |offset| exceeds 14 hours.
void check_tz_offset(TzOffset tz);

/// Local wall-clock hour (0..23) of `t` under `tz`.
int local_hour(Instant t, TzOffset tz);

/// Local calendar day of `t` under `tz`.
std::chrono::sys_days local_day(Instant t, TzOffset tz);

/// UTC instant at which local day `d` begins.
Instant local_day_start(std::chrono::sys_days d, TzOffset tz);

std::string format_date(std::chrono::sys_days d);
std::chrono::sys_days parse_date(std::string_view text);

/// Floor division that rounds toward negative infinity.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace aitrace

#endif  // AITRACE_TIME_HPP
