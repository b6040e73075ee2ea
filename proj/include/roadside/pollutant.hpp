#pragma once

#include <array>
#include <string_view>

namespace roadside {

enum class Pollutant { kCo = 0, kHc = 1, kNo = 2 };

inline constexpr std::array<Pollutant, 3> kPollutants = {Pollutant::kCo, Pollutant::kHc,
                                                         Pollutant::kNo};

constexpr std::size_t index_of(Pollutant p) { return static_cast<std::size_t>(p); }

constexpr std::string_view name_of(Pollutant p) {
  switch (p) {
    case Pollutant::kCo: return "co";
    case Pollutant::kHc: return "hc";
    case Pollutant::kNo: return "no";
  }
  return "?";
}

/// Per-pollutant triple of values, indexed by Pollutant.
struct PollutantTriple {
  double co = 0.0;
  double hc = 0.0;
  double no = 0.0;

  double& operator[](Pollutant p) {
    return p == Pollutant::kCo ? co : (p == Pollutant::kHc ? hc : no);
  }
  double operator[](Pollutant p) const {
    return p == Pollutant::kCo ? co : (p == Pollutant::kHc ? hc : no);
  }
  friend bool operator==(const PollutantTriple&, const PollutantTriple&) = default;
};

}  // namespace roadside
