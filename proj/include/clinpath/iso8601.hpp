#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace clinpath {

// UTC timestamp plus its civil calendar day (days since 1970-01-01).
struct Timestamp {
  std::int64_t epoch_seconds = 0;
  std::int64_t civil_day = 0;

  friend bool operator<(const Timestamp& a, const Timestamp& b) {
    return a.epoch_seconds < b.epoch_seconds;
  }
  friend bool operator==(const Timestamp& a, const Timestamp& b) {
    return a.epoch_seconds == b.epoch_seconds;
  }
};

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, unsigned m, unsigned d);
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d);

// Accepts "YYYY-MM-DD[T ]HH:MM[:SS][.fff][Z|+HH:MM|-HH:MM]".
// The stored value is UTC; offsets are applied.
std::optional<Timestamp> parse_iso8601(std::string_view s);

// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(const Timestamp& t);

}  // namespace clinpath
