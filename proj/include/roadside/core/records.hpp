#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "roadside/pollutant.hpp"

namespace roadside {

/// UTC seconds since the Unix epoch.
using Timestamp = std::int64_t;
/// UTC days since the Unix epoch.
using DayNumber = std::int64_t;

constexpr std::int64_t kSecondsPerDay = 86400;

DayNumber day_from_civil(int year, unsigned month, unsigned day);
/// Parses YYYY-MM-DD; throws DataError on malformed input.
DayNumber parse_date(std::string_view text);
std::string format_date(DayNumber day);
int year_of(DayNumber day);

/// One roadside pass: pollutant/CO2 molar ratios, kinematics, meteorology.
struct OrrsRecord {
  std::string plate;
  Timestamp timestamp = 0;
  double rs_co = 0.0;  // CO/CO2
  double rs_hc = 0.0;  // HC/CO2, propane equivalent
  double rs_no = 0.0;  // NO/CO2
  double velocity = 0.0;           // km/h
  double acceleration = 0.0;       // m/s^2
  double temperature = 0.0;        // degC
  double relative_humidity = 0.0;  // %
  double wind_speed = 0.0;         // m/s
  double pressure = 0.0;           // hPa
  int site_id = 0;

  friend bool operator==(const OrrsRecord&, const OrrsRecord&) = default;
};

/// Annual laboratory inspection with static vehicle attributes.
/// Numeric fields are NaN when missing in the source file.
struct ImRecord {
  std::string vin;
  std::string plate;
  double model_year = 0.0;
  double accumulated_mileage = 0.0;  // km
  double capacity = 0.0;             // L
  double wheel_base = 0.0;           // mm
  double maximum_horsepower = 0.0;   // kW
  double torsion = 0.0;              // N m
  double total_mass = 0.0;           // kg
  double fuel_tank_capacity = 0.0;   // L
  double vehicle_volume = 0.0;       // m^3
  double press_ratio = 0.0;
  std::string engine_type;
  std::string vehicle_brand;
  std::string fuel_type;
  double im_co = 0.0;  // g/km
  double im_hc = 0.0;  // g/km
  double im_no = 0.0;  // g/km
  DayNumber inspection_date = 0;

  double im(Pollutant p) const {
    return p == Pollutant::kCo ? im_co : (p == Pollutant::kHc ? im_hc : im_no);
  }
  friend bool operator==(const ImRecord&, const ImRecord&) = default;
};

struct MatchedSample {
  OrrsRecord orrs;
  ImRecord im;
  double vsp = 0.0;  // kW/t
  /// True when no inspection preceded the pass and the nearest one was used.
  bool nearest_fallback = false;

  friend bool operator==(const MatchedSample&, const MatchedSample&) = default;
};

}  // namespace roadside
