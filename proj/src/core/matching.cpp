#include "roadside/core/matching.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "roadside/core/vsp.hpp"
#include "roadside/errors.hpp"
#include "roadside/util/text.hpp"

namespace roadside {

std::string normalize_plate(std::string_view plate) { return to_upper(trim(plate)); }

namespace {

auto orrs_key(const OrrsRecord& r) {
  return std::tie(r.timestamp, r.plate, r.site_id, r.rs_co, r.rs_hc, r.rs_no, r.velocity,
                  r.acceleration, r.temperature, r.relative_humidity, r.wind_speed,
                  r.pressure);
}

void check_duplicates(std::span<const ImRecord> im) {
  std::map<std::pair<std::string, DayNumber>, int> seen;
  for (const auto& r : im) ++seen[{r.vin, r.inspection_date}];
  std::ostringstream offenders;
  int n = 0;
  for (const auto& [key, count] : seen) {
    if (count < 2) continue;
    if (n++ > 0) offenders << ", ";
    offenders << key.first << "@" << format_date(key.second) << " (x" << count << ")";
  }
  if (n > 0)
    throw DataError("duplicate (vin, inspection_date) pairs in I/M input: " + offenders.str());
}

}  // namespace

MatchResult match_records(std::span<const OrrsRecord> orrs, std::span<const ImRecord> im,
                          const GradeLookup& grade) {
  check_duplicates(im);

  std::unordered_map<std::string, std::vector<const ImRecord*>> by_plate;
  for (const auto& r : im) by_plate[normalize_plate(r.plate)].push_back(&r);
  for (auto& [plate, list] : by_plate) {
    std::sort(list.begin(), list.end(), [](const ImRecord* a, const ImRecord* b) {
      return std::tie(a->inspection_date, a->vin) < std::tie(b->inspection_date, b->vin);
    });
  }

  MatchResult out;
  for (const auto& raw : orrs) {
    OrrsRecord rec = raw;
    rec.plate = normalize_plate(raw.plate);
    if (!std::isfinite(rec.velocity) || rec.velocity < 0.0) {
      out.unmatched.push_back({std::move(rec), "invalid-kinematics"});
      continue;
    }
    auto it = by_plate.find(rec.plate);
    if (it == by_plate.end()) {
      out.unmatched.push_back({std::move(rec), "no-registry-entry"});
      continue;
    }
    const auto& candidates = it->second;
    const DayNumber pass_day =
        rec.timestamp >= 0 ? rec.timestamp / kSecondsPerDay
                           : -((-rec.timestamp + kSecondsPerDay - 1) / kSecondsPerDay);
    // Most recent inspection on or before the pass day.
    auto after = std::upper_bound(
        candidates.begin(), candidates.end(), pass_day,
        [](DayNumber day, const ImRecord* r) { return day < r->inspection_date; });
    MatchedSample sample;
    if (after != candidates.begin()) {
      sample.im = **std::prev(after);
    } else {
      // Every inspection postdates the pass: the earliest one is the nearest.
      sample.im = *candidates.front();
      sample.nearest_fallback = true;
    }
    sample.vsp = compute_vsp(rec.velocity, rec.acceleration, grade ? grade(rec.site_id) : 0.0);
    sample.orrs = std::move(rec);
    out.matched.push_back(std::move(sample));
  }

  std::sort(out.matched.begin(), out.matched.end(),
            [](const MatchedSample& a, const MatchedSample& b) {
              const auto ka = orrs_key(a.orrs);
              const auto kb = orrs_key(b.orrs);
              if (ka != kb) return ka < kb;
              return std::tie(a.im.vin, a.im.inspection_date) <
                     std::tie(b.im.vin, b.im.inspection_date);
            });
  std::sort(out.unmatched.begin(), out.unmatched.end(),
            [](const UnmatchedRecord& a, const UnmatchedRecord& b) {
              const auto ka = orrs_key(a.orrs);
              const auto kb = orrs_key(b.orrs);
              if (ka != kb) return ka < kb;
              return a.reason < b.reason;
            });
  return out;
}

}  // namespace roadside
