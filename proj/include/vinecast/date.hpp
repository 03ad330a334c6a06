#pragma once

#include "vinecast/common.hpp"

#include <compare>
#include <cstdio>
#include <string>

namespace vinecast {

//! Calendar date with day-resolution arithmetic.
//!
//! Stored as a serial day count (days since 1970-01-01) so that adding days
//! and measuring gaps are O(1); conversions use the standard civil-calendar
//! algorithms.
class Date
{
public:
  Date() = default;

  Date(int year, int month, int day)
    : serial_(days_from_civil(year, month, day))
  {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    if (y != year || m != month || d != day) {
      throw data_error("invalid calendar date: " + format(year, month, day));
    }
  }

  static Date from_serial(long serial)
  {
    Date out;
    out.serial_ = serial;
    return out;
  }

  //! Parses an ISO-8601 date (YYYY-MM-DD). Throws data_error otherwise.
  static Date parse(const std::string& text)
  {
    int y = 0, m = 0, d = 0;
    char tail = '\0';
    if (std::sscanf(text.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) {
      throw data_error("invalid ISO date '" + text + "'");
    }
    return Date(y, m, d);
  }

  long serial() const { return serial_; }
  int year() const { return ymd().y; }
  int month() const { return ymd().m; }
  int day() const { return ymd().d; }

  Date plus_days(long n) const { return from_serial(serial_ + n); }

  std::string to_string() const
  {
    auto c = ymd();
    return format(c.y, c.m, c.d);
  }

  static bool is_leap(int year)
  {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  }

  //! Same month-and-day in another year; Feb 29 maps to Feb 28 when absent.
  Date with_year(int target_year) const
  {
    auto c = ymd();
    if (c.m == 2 && c.d == 29 && !is_leap(target_year)) {
      return Date(target_year, 2, 28);
    }
    return Date(target_year, c.m, c.d);
  }

  friend auto operator<=>(const Date&, const Date&) = default;
  friend long operator-(const Date& a, const Date& b)
  {
    return a.serial_ - b.serial_;
  }

private:
  struct Civil
  {
    int y, m, d;
  };

  Civil ymd() const
  {
    Civil c;
    civil_from_days(serial_, c.y, c.m, c.d);
    return c;
  }

  static std::string format(int y, int m, int d)
  {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
  }

  // Howard Hinnant's civil-calendar conversions.
  static long days_from_civil(long y, int m, int d)
  {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
  }

  static void civil_from_days(long z, int& y, int& m, int& d)
  {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
  }

  long serial_ = 0;
};

} // namespace vinecast
