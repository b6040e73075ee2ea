#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "roadside/core/records.hpp"
#include "roadside/screen/met_window.hpp"

namespace roadside::synth {

/// HC/CO2 molar ratio to ppm: undiluted gasoline exhaust at 15% CO2
/// (the calibration-cylinder CO2 level), so 1 ratio unit = 150,000 ppm.
inline constexpr double kHcPpmPerRatio = 150000.0;

/// Latent emission-factor law: log-normal body below the 90th percentile,
/// truncated Pareto tail above it on [q90, cap_ratio * q90].
struct EmissionLaw {
  double median = 1.0;
  double sigma = 0.8;
  double cap_ratio = 40.0;
  double alpha = 1.0;  // tail index, solved to hit the requested top-decile share
  double q90 = 0.0;

  /// Solves the tail index for the requested share. The cap is doubled until
  /// the share is attainable; throws ConfigError if it never is.
  static EmissionLaw solve(double median, double sigma, double top_decile_share,
                           double cap_ratio);

  double quantile(double u) const;
  /// Population share of the total carried by the top decile.
  double top_decile_share() const;
};

/// Marginals of the roadside meteorology. `out_of_window_rate` is the
/// probability mass placed outside the default MetWindow (it includes the
/// QC-violating records when larger than the QC rate).
struct MetRegime {
  double temperature_mean = 20.0;
  double temperature_sd = 6.0;
  double humidity_mean = 55.0;
  double humidity_sd = 12.0;
  double wind_mean = 2.0;
  double wind_sd = 1.0;
  double pressure_mean = 1010.0;
  double pressure_sd = 6.0;
  double out_of_window_rate = 0.24;
};

struct FleetSpec {
  std::size_t n_vehicles = 20000;
  double top_decile_share = 0.55;
  double orrs_records_per_vehicle = 1.1;
  double median_im_co = 0.6;   // g/km
  double median_im_hc = 0.05;  // g/km
  double median_im_no = 0.12;  // g/km
  double median_orrs_hc_ppm = 15.0;
  double median_orrs_co_ratio = 0.01;
  double median_orrs_no_ppm = 100.0;
  double body_sigma = 0.8;
  double tail_cap_ratio = 40.0;
  MetRegime met_regime;
  double qc_violation_rate = 0.0656;
  /// Fraction of roadside records from vehicles absent from the registry.
  double unregistered_rate = 0.02;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

struct VehicleAttributes {
  int model_year = 0;
  double accumulated_mileage = 0.0;  // km at campaign midpoint
  double annual_mileage = 0.0;       // km/yr
  double capacity = 0.0;
  double wheel_base = 0.0;
  double maximum_horsepower = 0.0;
  double torsion = 0.0;
  double total_mass = 0.0;
  double fuel_tank_capacity = 0.0;
  double vehicle_volume = 0.0;
  double press_ratio = 0.0;
  std::string engine_type;
  std::string vehicle_brand;
  std::string fuel_type;
};

/// Ground truth for one registered vehicle. Oracle tests only.
struct EmitterProfile {
  std::string vin;
  std::string plate;
  PollutantTriple factor;              // g/km at campaign midpoint
  std::array<double, 3> quantile{};    // latent quantile per pollutant
  std::array<bool, 3> dirty_tail{};    // quantile above 0.9
  double deterioration = 0.0;          // fractional increase per 10,000 km
  VehicleAttributes attributes;
};

struct Fleet {
  std::vector<OrrsRecord> orrs;
  std::vector<ImRecord> im;
  std::vector<EmitterProfile> truth;
};

/// Deterministic for a given FleetSpec: vehicle i draws from substream (seed, i), so the
/// output does not depend on scheduling.
Fleet generate_fleet(const FleetSpec& spec);

std::string truth_to_jsonl(const std::vector<EmitterProfile>& truth);

struct CorruptionResult {
  std::vector<OrrsRecord> records;
  std::vector<bool> corrupted;
};

/// Moves exactly round(fraction * n) records, chosen by seed, outside the
/// meteorological window (QC limits are respected). Throws ConfigError for
/// fraction outside [0, 1].
CorruptionResult corrupt_for_robustness(std::vector<OrrsRecord> records, double fraction,
                                        std::uint64_t seed, const MetWindow& window = {});

}  // namespace roadside::synth
