#include "roadside/core/records.hpp"

#include <chrono>
#include <cstdio>

#include "roadside/errors.hpp"
#include "roadside/util/text.hpp"

namespace roadside {

DayNumber day_from_civil(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) throw DataError("invalid calendar date");
  return sys_days{ymd}.time_since_epoch().count();
}

DayNumber parse_date(std::string_view text) {
  const auto t = trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (t.size() != 10 || std::sscanf(t.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
    throw DataError("malformed date '" + t + "' (expected YYYY-MM-DD)");
  try {
    return day_from_civil(y, m, d);
  } catch (const DataError&) {
    throw DataError("invalid date '" + t + "'");
  }
}

std::string format_date(DayNumber day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(DayNumber day) {
  using namespace std::chrono;
  return static_cast<int>(year_month_day{sys_days{days{day}}}.year());
}

}  // namespace roadside
