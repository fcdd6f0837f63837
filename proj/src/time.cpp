#include "aitrace/time.hpp"

#include <array>
#include <cctype>
#include <cstdio>

namespace aitrace {

namespace {

using namespace std::chrono;

int digits(std::string_view s, std::size_t pos, std::size_t n) {
    if (pos + n > s.size()) throw TimeParseError("truncated timestamp: " + std::string(s));
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw TimeParseError("expected digit in timestamp: " + std::string(s));
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

void expect(std::string_view s, std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c)
        throw TimeParseError("malformed timestamp: " + std::string(s));
}

sys_days make_day(int y, int m, int d, std::string_view src) {
    year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw TimeParseError("invalid calendar date: " + std::string(src));
    return sys_days{ymd};
}

}  // namespace

Instant parse_rfc3339(std::string_view s) {
    // YYYY-MM-DDTHH:MM:SS[.f+](Z|+hh:mm|-hh:mm)
    int y = digits(s, 0, 4);
    expect(s, 4, '-');
    int mo = digits(s, 5, 2);
    expect(s, 7, '-');
    int d = digits(s, 8, 2);
    if (s.size() <= 10 || (s[10] != 'T' && s[10] != 't' && s[10] != ' '))
        throw TimeParseError("malformed timestamp: " + std::string(s));
    int hh = digits(s, 11, 2);
    expect(s, 13, ':');
    int mm = digits(s, 14, 2);
    expect(s, 16, ':');
    int ss = digits(s, 17, 2);
    if (hh > 23 || mm > 59 || ss > 60) throw TimeParseError("time out of range: " + std::string(s));

    std::size_t pos = 19;
    std::int64_t ms = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        int scale = 100;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            if (scale > 0) {
                ms += (s[pos] - '0') * scale;
                scale /= 10;
            }
            ++pos;
        }
        if (pos == start) throw TimeParseError("empty fraction in timestamp: " + std::string(s));
    }

    std::int64_t offset_min = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
        ++pos;
    } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
        int sign = s[pos] == '-' ? -1 : 1;
        int oh = digits(s, pos + 1, 2);
        expect(s, pos + 3, ':');
        int om = digits(s, pos + 4, 2);
        offset_min = sign * (oh * 60 + om);
        pos += 6;
    } else {
        throw TimeParseError("timestamp lacks a timezone designator: " + std::string(s));
    }
    if (pos != s.size()) throw TimeParseError("trailing characters in timestamp: " + std::string(s));

    auto t = time_point_cast<Millis>(make_day(y, mo, d, s)) + hours(hh) + minutes(mm) +
             seconds(ss) + Millis(ms) - minutes(offset_min);
    return t;
}

std::string format_rfc3339(Instant t) {
    auto day = floor<days>(t);
    year_month_day ymd{day};
    auto rem = t - day;
    auto h = duration_cast<hours>(rem);
    rem -= h;
    auto m = duration_cast<minutes>(rem);
    rem -= m;
    auto sec = duration_cast<seconds>(rem);
    rem -= sec;
    std::array<char, 40> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                  static_cast<int>(m.count()), static_cast<int>(sec.count()),
                  static_cast<int>(rem.count()));
    return buf.data();
}

void check_tz_offset(TzOffset tz) {
    if (tz.minutes < -TzOffset::kLimit || tz.minutes > TzOffset::kLimit)
        throw std::invalid_argument("timezone offset outside [-14h, +14h]: " +
                                    std::to_string(tz.minutes) + " min");
}

int local_hour(Instant t, TzOffset tz) {
    std::int64_t local_ms = (t + tz.as_duration()).time_since_epoch().count();
    std::int64_t in_day = local_ms - floor_div(local_ms, 86'400'000) * 86'400'000;
    return static_cast<int>(in_day / 3'600'000);
}

sys_days local_day(Instant t, TzOffset tz) {
    return floor<days>(t + tz.as_duration());
}

Instant local_day_start(sys_days d, TzOffset tz) {
    return time_point_cast<Millis>(d) - tz.as_duration();
}

std::string format_date(sys_days d) {
    year_month_day ymd{d};
    std::array<char, 16> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf.data();
}

sys_days parse_date(std::string_view s) {
    int y = digits(s, 0, 4);
    expect(s, 4, '-');
    int m = digits(s, 5, 2);
    expect(s, 7, '-');
    int d = digits(s, 8, 2);
    if (s.size() != 10) throw TimeParseError("malformed date: " + std::string(s));
    return make_day(y, m, d, s);
}

}  // namespace aitrace
