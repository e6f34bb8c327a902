#include "recapfx/time.hpp"

#include <cctype>
#include <cstdio>

#include "recapfx/error.hpp"

namespace recapfx {
namespace {

int read_digits(std::string_view s, std::size_t pos, std::size_t count) {
  if (pos + count > s.size()) throw DataError("truncated timestamp: " + std::string(s));
  int v = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i])))
      throw DataError("malformed timestamp: " + std::string(s));
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

void expect(std::string_view s, std::size_t pos, char c) {
  if (pos >= s.size() || (s[pos] != c && !(c == 'T' && (s[pos] == 't' || s[pos] == ' '))))
    throw DataError("malformed timestamp: " + std::string(s));
}

}  // namespace

Timestamp parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  const int y = read_digits(s, 0, 4);
  expect(s, 4, '-');
  const int mo = read_digits(s, 5, 2);
  expect(s, 7, '-');
  const int d = read_digits(s, 8, 2);
  expect(s, 10, 'T');
  const int hh = read_digits(s, 11, 2);
  expect(s, 13, ':');
  const int mm = read_digits(s, 14, 2);
  expect(s, 16, ':');
  const int ss = read_digits(s, 17, 2);
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  int offset_seconds = 0;
  if (pos >= s.size()) throw DataError("timestamp lacks a UTC offset: " + std::string(s));
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '-' ? -1 : 1;
    const int oh = read_digits(s, pos + 1, 2);
    expect(s, pos + 3, ':');
    const int om = read_digits(s, pos + 4, 2);
    offset_seconds = sign * (oh * 3600 + om * 60);
    pos += 6;
  } else {
    throw DataError("malformed timestamp offset: " + std::string(s));
  }
  if (pos != s.size()) throw DataError("trailing characters in timestamp: " + std::string(s));

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60)
    throw DataError("timestamp out of range: " + std::string(s));
  return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} - seconds{offset_seconds};
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::string format_range(const TimeRange& r) {
  return "[" + format_timestamp(r.start) + ", " + format_timestamp(r.end) + ")";
}

}  // namespace recapfx
