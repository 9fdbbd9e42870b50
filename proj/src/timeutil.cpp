#include "propwatch/timeutil.hpp"

#include <cctype>
#include <cstdio>

#include "propwatch/error.hpp"

namespace propwatch {
namespace {

int read_digits(std::string_view s, std::size_t& pos, std::size_t n) {
    if (pos + n > s.size()) fail(ErrorKind::parse, "truncated timestamp: " + std::string(s));
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        char c = s[pos + i];
        if (!std::isdigit(static_cast<unsigned char>(c)))
            fail(ErrorKind::parse, "bad digit in timestamp: " + std::string(s));
        v = v * 10 + (c - '0');
    }
    pos += n;
    return v;
}

void expect(std::string_view s, std::size_t& pos, char c) {
    if (pos >= s.size() || s[pos] != c)
        fail(ErrorKind::parse, std::string("expected '") + c + "' in timestamp: " + std::string(s));
    ++pos;
}

}  // namespace

Instant parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    std::size_t pos = 0;
    int y = read_digits(s, pos, 4);
    expect(s, pos, '-');
    int mo = read_digits(s, pos, 2);
    expect(s, pos, '-');
    int d = read_digits(s, pos, 2);
    if (pos >= s.size() || (s[pos] != 'T' && s[pos] != ' '))
        fail(ErrorKind::parse, "missing time part in timestamp: " + std::string(s));
    ++pos;
    int hh = read_digits(s, pos, 2);
    expect(s, pos, ':');
    int mm = read_digits(s, pos, 2);
    expect(s, pos, ':');
    int ss = read_digits(s, pos, 2);
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;  // second resolution
    }
    int offset_min = 0;
    if (pos < s.size()) {
        char c = s[pos];
        if (c == 'Z' || c == 'z') {
            ++pos;
        } else if (c == '+' || c == '-') {
            ++pos;
            int oh = read_digits(s, pos, 2);
            if (pos < s.size() && s[pos] == ':') ++pos;
            int om = read_digits(s, pos, 2);
            offset_min = (c == '+' ? 1 : -1) * (oh * 60 + om);
        }
    }
    if (pos != s.size()) fail(ErrorKind::parse, "trailing characters in timestamp: " + std::string(s));

    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60)
        fail(ErrorKind::parse, "timestamp out of range: " + std::string(s));
    auto local = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
    return local - minutes{offset_min};
}

std::string format_iso8601(Instant t) {
    using namespace std::chrono;
    auto dp = floor<days>(t);
    year_month_day ymd{dp};
    hh_mm_ss hms{t - dp};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::string format_date(Instant t) {
    using namespace std::chrono;
    year_month_day ymd{floor<days>(t)};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

}  // namespace propwatch
