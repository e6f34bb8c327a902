#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace recapfx {

using Timestamp = std::chrono::sys_seconds;

/// Parses an RFC 3339 instant (`2014-04-01T21:45:00Z`, offsets like
/// `+02:00` allowed, fractional seconds truncated). Throws DataError.
Timestamp parse_timestamp(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_timestamp(Timestamp t);

/// Half-open range [start, end).
struct TimeRange {
  Timestamp start;
  Timestamp end;

  bool contains(Timestamp t) const { return t >= start && t < end; }
  bool valid() const { return start < end; }
  bool overlaps(const TimeRange& other) const { return start < other.end && other.start < end; }
};

std::string format_range(const TimeRange& r);

}  // namespace recapfx
