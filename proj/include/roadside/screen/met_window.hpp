#pragma once

#include <span>
#include <vector>

#include "roadside/core/records.hpp"

namespace roadside {

/// Operating window in which roadside readings are trusted for screening.
/// Temperature bounds are inclusive; the other limits are strict upper bounds.
struct MetWindow {
  double temp_min = 6.0;   // degC
  double temp_max = 32.0;  // degC
  double rh_max = 80.0;    // %
  double wind_max = 5.0;   // m/s
  double vsp_max = 18.0;   // kW/t

  void validate() const;
};

bool in_met_window(double temperature, double relative_humidity, double wind_speed, double vsp,
                   const MetWindow& window);

struct MetWindowResult {
  std::vector<MatchedSample> kept;
  std::vector<MatchedSample> excluded;

  double kept_fraction() const {
    const auto n = kept.size() + excluded.size();
    return n == 0 ? 0.0 : static_cast<double>(kept.size()) / static_cast<double>(n);
  }
};

MetWindowResult apply_met_window(std::span<const MatchedSample> samples,
                                 const MetWindow& window = {});

/// Indices of the samples inside the window, in input order.
std::vector<std::size_t> met_window_indices(std::span<const MatchedSample> samples,
                                            const MetWindow& window = {});

}  // namespace roadside
