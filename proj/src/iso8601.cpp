#include "clinpath/iso8601.hpp"

#include <cctype>
#include <cstdio>

namespace clinpath {

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

namespace {

bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, long& out) {
  if (pos + len > s.size()) return false;
  long v = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const char c = s[pos + i];
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::optional<Timestamp> parse_iso8601(std::string_view s) {
  // trim surrounding whitespace
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);

  long year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!parse_fixed_uint(s, 0, 4, year)) return std::nullopt;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!parse_fixed_uint(s, 5, 2, month) || !parse_fixed_uint(s, 8, 2, day)) return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;

  std::size_t pos = 10;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != 't' && s[pos] != ' ') return std::nullopt;
    ++pos;
    if (!parse_fixed_uint(s, pos, 2, hour)) return std::nullopt;
    if (pos + 2 >= s.size() || s[pos + 2] != ':') return std::nullopt;
    if (!parse_fixed_uint(s, pos + 3, 2, minute)) return std::nullopt;
    pos += 5;
    if (pos < s.size() && s[pos] == ':') {
      if (!parse_fixed_uint(s, pos + 1, 2, second)) return std::nullopt;
      pos += 3;
    }
    if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
    // fractional seconds are accepted and ignored
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      std::size_t digits = 0;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        ++pos;
        ++digits;
      }
      if (digits == 0) return std::nullopt;
    }
  }

  long offset_seconds = 0;
  if (pos < s.size()) {
    const char c = s[pos];
    if (c == 'Z' || c == 'z') {
      ++pos;
    } else if (c == '+' || c == '-') {
      long oh = 0, om = 0;
      if (!parse_fixed_uint(s, pos + 1, 2, oh)) return std::nullopt;
      std::size_t opos = pos + 3;
      if (opos < s.size() && s[opos] == ':') ++opos;
      if (!parse_fixed_uint(s, opos, 2, om)) return std::nullopt;
      offset_seconds = (oh * 3600 + om * 60) * (c == '+' ? 1 : -1);
      pos = opos + 2;
    }
  }
  if (pos != s.size()) return std::nullopt;

  const std::int64_t days = days_from_civil(static_cast<int>(year),
                                            static_cast<unsigned>(month),
                                            static_cast<unsigned>(day));
  Timestamp t;
  t.epoch_seconds = days * 86400 + hour * 3600 + minute * 60 + second - offset_seconds;
  t.civil_day = t.epoch_seconds >= 0 ? t.epoch_seconds / 86400
                                     : (t.epoch_seconds - 86399) / 86400;
  return t;
}

std::string format_iso8601(const Timestamp& t) {
  const std::int64_t day = t.civil_day;
  std::int64_t sod = t.epoch_seconds - day * 86400;
  int y;
  unsigned m, d;
  civil_from_days(day, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(sod / 3600), static_cast<int>((sod / 60) % 60),
                static_cast<int>(sod % 60));
  return buf;
}

}  // namespace clinpath
