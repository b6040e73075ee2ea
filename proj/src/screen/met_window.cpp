#include "roadside/screen/met_window.hpp"

#include <cmath>

#include "roadside/errors.hpp"

namespace roadside {

void MetWindow::validate() const {
  if (!(std::isfinite(temp_min) && std::isfinite(temp_max) && temp_min <= temp_max))
    throw ConfigError("met_window: temperature range is empty");
  if (!(rh_max > 0.0) || !(wind_max > 0.0) || !std::isfinite(vsp_max))
    throw ConfigError("met_window: rh_max and wind_max must be positive, vsp_max finite");
}

bool in_met_window(double temperature, double relative_humidity, double wind_speed, double vsp,
                   const MetWindow& w) {
  return temperature >= w.temp_min && temperature <= w.temp_max &&
         relative_humidity < w.rh_max && wind_speed < w.wind_max && vsp < w.vsp_max;
}

MetWindowResult apply_met_window(std::span<const MatchedSample> samples, const MetWindow& window) {
  window.validate();
  MetWindowResult out;
  for (const auto& s : samples) {
    const bool keep = in_met_window(s.orrs.temperature, s.orrs.relative_humidity,
                                    s.orrs.wind_speed, s.vsp, window);
    (keep ? out.kept : out.excluded).push_back(s);
  }
  return out;
}

std::vector<std::size_t> met_window_indices(std::span<const MatchedSample> samples,
                                            const MetWindow& window) {
  window.validate();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (in_met_window(s.orrs.temperature, s.orrs.relative_humidity, s.orrs.wind_speed, s.vsp,
                      window))
      out.push_back(i);
  }
  return out;
}

}  // namespace roadside
