#include "roadside/core/vsp.hpp"

#include <cmath>
#include <stdexcept>

namespace roadside {

double compute_vsp(double velocity_kmh, double acceleration, double grade,
                   const VspCoefficients& c) {
  if (!std::isfinite(velocity_kmh) || velocity_kmh < 0.0)
    throw std::domain_error("compute_vsp: velocity must be finite and non-negative");
  const double v = velocity_kmh / 3.6;
  return v * (c.mass_factor * acceleration + c.gravity * grade + c.rolling) +
         c.aerodynamic * v * v * v;
}

}  // namespace roadside
