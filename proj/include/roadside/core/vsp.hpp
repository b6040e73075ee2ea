#pragma once

namespace roadside {

/// Light-duty vehicle specific power coefficients (Jimenez-Palacios form).
struct VspCoefficients {
  double mass_factor = 1.1;        // a1, rotational mass factor
  double rolling = 0.132;          // a2, m/s^2
  double aerodynamic = 0.000302;   // a3, 1/m
  double gravity = 9.81;           // m/s^2
};

inline constexpr VspCoefficients kLightDutyVsp{};

/// VSP in kW/t from velocity (km/h), acceleration (m/s^2) and road grade
/// (rise over run). Throws std::domain_error for negative or non-finite velocity.
double compute_vsp(double velocity_kmh, double acceleration, double grade,
                   const VspCoefficients& coeffs = kLightDutyVsp);

}  // namespace roadside
