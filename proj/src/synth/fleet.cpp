#include "roadside/synth/fleet.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <cctype>
#include <numeric>
#include <span>

#include "json.hpp"
#include "roadside/core/vsp.hpp"
#include "roadside/errors.hpp"
#include "roadside/util/random.hpp"

namespace roadside::synth {

namespace {

constexpr double kSplice = 0.9;
constexpr int kUtcOffsetHours = 8;
constexpr double kVspReference = 5.0;  // kW/t, centre of the VSP effect

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double u) {
  u = std::clamp(u, 1e-15, 1.0 - 1e-15);
  return std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0);
}

// Mean of the truncated Pareto tail on [1, R] in units of its lower bound.
double tail_mean_ratio(double alpha, double cap) {
  if (std::abs(alpha - 1.0) < 1e-9) return std::log(cap) / (1.0 - 1.0 / cap);
  return alpha / (alpha - 1.0) * (1.0 - std::pow(cap, 1.0 - alpha)) /
         (1.0 - std::pow(cap, -alpha));
}

struct ShareParts {
  double body;
  double tail;
};

ShareParts share_parts(double median, double sigma, double alpha, double cap) {
  const double z = normal_quantile(kSplice);
  const double q90 = median * std::exp(sigma * z);
  return {median * std::exp(0.5 * sigma * sigma) * normal_cdf(z - sigma),
          (1.0 - kSplice) * q90 * tail_mean_ratio(alpha, cap)};
}

double share_of(double median, double sigma, double alpha, double cap) {
  const auto p = share_parts(median, sigma, alpha, cap);
  return p.tail / (p.tail + p.body);
}

// Per-pollutant response of the roadside ratio to load and meteorology.
struct OrrsResponse {
  double vsp;          // log-ratio change per 10 kW/t
  double temperature;  // per 10 degC above 20
  double humidity;     // per 30 % above 55
  double wind;         // per 3 m/s above 2
};

constexpr std::array<OrrsResponse, 3> kResponse = {{
    {0.25, 0.05, -0.05, -0.10},  // CO
    {0.10, 0.10, 0.05, -0.15},   // HC
    {0.35, 0.08, -0.20, -0.10},  // NO
}};

// Multiplicative log-noise amplitude; grows with humidity, wind, |T - 20|.
double orrs_noise_sigma(double t, double rh, double wind) {
  return 0.15 + 0.2 * rh / 100.0 + 0.05 * wind + 0.08 * std::abs(t - 20.0) / 10.0;
}

constexpr std::array<const char*, 12> kBrands = {"VW",    "TOYOTA", "HONDA", "NISSAN",
                                                 "BUICK", "GEELY",  "BYD",   "HYUNDAI",
                                                 "FORD",  "CHERY",  "KIA",   "MAZDA"};

std::string base36(std::uint64_t x, int width) {
  static constexpr char kDigits[] = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::string s(static_cast<std::size_t>(width), '0');
  for (int i = width - 1; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[x % 36];
    x /= 36;
  }
  return s;
}

std::string plate_for(std::uint64_t index, const char* prefix) {
  constexpr std::uint64_t kSpace = 60466176ULL;  // 36^5
  return std::string(prefix) + base36((index * 48271ULL + 1234567ULL) % kSpace, 5);
}

std::string vin_for(std::uint64_t index) {
  std::string digits = std::to_string(index);
  return "LGV" + std::string(14 - std::min<std::size_t>(14, digits.size()), '0') + digits;
}

class Draw {
 public:
  explicit Draw(Rng rng) : rng_(std::move(rng)) {}
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double normal_in(double mean, double sd, double lo, double hi) {
    for (int i = 0; i < 64; ++i) {
      const double v = normal(mean, sd);
      if (v >= lo && v < hi) return v;
    }
    return uniform(lo, hi);
  }
  int poisson(double mean) { return std::poisson_distribution<int>(mean)(rng_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t pick(std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.size() - 1;
  }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

struct Campaign {
  DayNumber start = day_from_civil(2020, 5, 1);
  DayNumber end = day_from_civil(2020, 11, 30);
  DayNumber midpoint = day_from_civil(2020, 8, 15);
  int year = 2020;
};

struct Kinematics {
  double velocity;
  double acceleration;
  double vsp;
};

Kinematics draw_kinematics(Draw& d, bool high_load) {
  for (int i = 0; i < 256; ++i) {
    Kinematics k;
    if (high_load) {
      k.velocity = d.normal_in(45.0, 10.0, 20.0, 90.0);
      k.acceleration = d.uniform(1.2, 3.0);
    } else {
      k.velocity = d.normal_in(38.0, 10.0, 5.0, 90.0);
      k.acceleration = d.normal_in(0.2, 0.45, -2.5, 3.0);
    }
    k.vsp = compute_vsp(k.velocity, k.acceleration, 0.0);
    if (high_load ? k.vsp >= 18.0 : k.vsp < 18.0) return k;
  }
  // Fallbacks that satisfy the requested side of the 18 kW/t boundary.
  if (high_load) return {60.0, 2.5, compute_vsp(60.0, 2.5, 0.0)};
  return {30.0, 0.0, compute_vsp(30.0, 0.0, 0.0)};
}

struct LatentVehicle {
  std::array<double, 3> quantile;
  PollutantTriple factor;
};

LatentVehicle draw_latent(Draw& d, double usage_score, const std::array<EmissionLaw, 3>& laws) {
  // Gaussian copula: shared usage (age and mileage), shared dirtiness, own noise.
  constexpr double kUsage = 0.45, kCommon = 0.55;
  const double own = std::sqrt(1.0 - kUsage * kUsage - kCommon * kCommon);
  const double common = d.normal();
  LatentVehicle v{};
  for (auto p : kPollutants) {
    const double z = kUsage * usage_score + kCommon * common + own * d.normal();
    const double u = normal_cdf(z);
    v.quantile[index_of(p)] = u;
    v.factor[p] = laws[index_of(p)].quantile(u);
  }
  return v;
}

OrrsRecord draw_orrs(Draw& d, const FleetSpec& spec, const Campaign& c, const std::string& plate,
                     const PollutantTriple& factor) {
  const auto& met = spec.met_regime;
  OrrsRecord r;
  r.plate = plate;
  if (d.bernoulli(0.10)) {
    std::transform(r.plate.begin(), r.plate.end(), r.plate.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  }
  if (d.bernoulli(0.05)) r.plate = " " + r.plate + " ";
  const auto day = c.start + static_cast<DayNumber>(d.uniform() * static_cast<double>(c.end - c.start + 1));
  const auto local_seconds = static_cast<std::int64_t>(d.uniform(7.0 * 3600.0, 19.0 * 3600.0));
  r.timestamp = day * kSecondsPerDay + local_seconds - kUtcOffsetHours * 3600;
  r.site_id = d.bernoulli(0.55) ? 0 : 1;

  r.temperature = d.normal_in(met.temperature_mean, met.temperature_sd, 6.0, 32.0);
  r.relative_humidity = d.normal_in(met.humidity_mean, met.humidity_sd, 5.0, 80.0);
  r.wind_speed = d.normal_in(met.wind_mean, met.wind_sd, 0.0, 5.0);
  r.pressure = d.normal(met.pressure_mean, met.pressure_sd);
  bool high_load = false;

  const double qc = spec.qc_violation_rate;
  const double outside = std::max(met.out_of_window_rate, qc);
  const double u = d.uniform();
  if (u < qc) {
    if (d.bernoulli(0.5))
      r.relative_humidity = 100.0 - 5.0 * d.uniform();  // (95, 100]
    else
      r.temperature = 45.0 - 5.0 * d.uniform();  // (40, 45]
  } else if (u < outside) {
    switch (static_cast<int>(d.uniform() * 5.0)) {
      case 0: r.temperature = -5.0 + 11.0 * d.uniform(); break;     // [-5, 6)
      case 1: r.temperature = 40.0 - 8.0 * d.uniform(); break;      // (32, 40]
      case 2: r.relative_humidity = 80.0 + 15.0 * d.uniform(); break;  // [80, 95)
      case 3: r.wind_speed = 5.0 + 5.0 * d.uniform(); break;        // [5, 10)
      default: high_load = true; break;
    }
  }
  const auto kin = draw_kinematics(d, high_load);
  r.velocity = kin.velocity;
  r.acceleration = kin.acceleration;

  const double sigma = orrs_noise_sigma(r.temperature, r.relative_humidity, r.wind_speed);
  const std::array<double, 3> scale = {
      spec.median_orrs_co_ratio / spec.median_im_co,
      spec.median_orrs_hc_ppm / kHcPpmPerRatio / spec.median_im_hc,
      spec.median_orrs_no_ppm / kHcPpmPerRatio / spec.median_im_no,
  };
  std::array<double, 3> ratio{};
  for (auto p : kPollutants) {
    const auto& resp = kResponse[index_of(p)];
    const double shift = resp.vsp * (kin.vsp - kVspReference) / 10.0 +
                         resp.temperature * (r.temperature - 20.0) / 10.0 +
                         resp.humidity * (r.relative_humidity - 55.0) / 30.0 +
                         resp.wind * (r.wind_speed - 2.0) / 3.0;
    ratio[index_of(p)] = scale[index_of(p)] * factor[p] * std::exp(shift + sigma * d.normal());
  }
  r.rs_co = ratio[0];
  r.rs_hc = ratio[1];
  r.rs_no = ratio[2];
  return r;
}

VehicleAttributes draw_attributes(Draw& d, int model_year, double mileage, double annual) {
  VehicleAttributes a;
  a.model_year = model_year;
  a.accumulated_mileage = mileage;
  a.annual_mileage = annual;
  const bool turbo = d.bernoulli(0.35);
  a.engine_type = turbo ? "TC" : "NA";
  a.capacity = std::round(std::clamp(1.6 * std::exp(0.2 * d.normal()), 0.9, 3.5) * 10.0) / 10.0;
  a.maximum_horsepower = a.capacity * (turbo ? 75.0 : 55.0) * std::exp(0.08 * d.normal());
  a.torsion = a.maximum_horsepower * (turbo ? 2.3 : 1.7) * std::exp(0.08 * d.normal());
  a.wheel_base = 2450.0 + 180.0 * a.capacity + 60.0 * d.normal();
  a.total_mass = 900.0 + 350.0 * a.capacity + 80.0 * d.normal();
  a.fuel_tank_capacity = 35.0 + 12.0 * a.capacity + 3.0 * d.normal();
  a.vehicle_volume = 9.0 + 2.0 * a.capacity + 0.5 * d.normal();
  a.press_ratio = (turbo ? 9.8 : 10.8) + 0.4 * d.normal();
  std::array<double, kBrands.size()> w{};
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  a.vehicle_brand = kBrands[d.pick(w)];
  a.fuel_type = d.bernoulli(0.93) ? "gasoline" : "gasoline-hev";
  return a;
}

struct VehicleOutput {
  EmitterProfile profile;
  std::vector<ImRecord> inspections;
  std::vector<OrrsRecord> passes;
};

VehicleOutput generate_vehicle(const FleetSpec& spec, const Campaign& c,
                               const std::array<EmissionLaw, 3>& laws, std::size_t index) {
  Draw d(make_rng(spec.seed, index));
  VehicleOutput out;
  auto& prof = out.profile;
  prof.vin = vin_for(index);
  prof.plate = plate_for(index, "ZA");

  // Age 0..15 years with geometric decay; drawn through a Gaussian score so
  // that it can load on the emission copula.
  static const std::array<double, 16> kAgeCdf = [] {
    std::array<double, 16> cdf{};
    double total = 0.0;
    for (int a = 0; a < 16; ++a) total += std::exp(-a / 6.0);
    double acc = 0.0;
    for (int a = 0; a < 16; ++a) cdf[static_cast<std::size_t>(a)] = (acc += std::exp(-a / 6.0) / total);
    return cdf;
  }();
  const double age_score = d.normal();
  const double age_u = normal_cdf(age_score);
  const int age = static_cast<int>(std::lower_bound(kAgeCdf.begin(), kAgeCdf.end() - 1, age_u) -
                                   kAgeCdf.begin());
  const double mileage_score = d.normal();
  const double annual = 14000.0 * std::exp(0.35 * mileage_score);
  const double mileage_now = (age + 0.5) * annual;
  const double usage = 0.6 * age_score + 0.8 * mileage_score;

  const auto latent = draw_latent(d, usage, laws);
  prof.factor = latent.factor;
  prof.quantile = latent.quantile;
  for (std::size_t p = 0; p < 3; ++p) prof.dirty_tail[p] = latent.quantile[p] > kSplice;
  prof.deterioration = 0.03 * std::exp(0.4 * d.normal());
  const int model_year = c.year - age;
  prof.attributes = draw_attributes(d, model_year, mileage_now, annual);

  const auto inspection_offset = static_cast<DayNumber>(d.uniform() * 365.0);
  for (int year = c.year - 2; year <= c.year; ++year) {
    if (year < model_year) continue;
    const DayNumber date = day_from_civil(year, 1, 1) + inspection_offset;
    if (date > c.end) continue;
    out.inspections.push_back({});
    out.inspections.back().inspection_date = date;
  }
  if (out.inspections.empty()) {
    out.inspections.push_back({});
    out.inspections.back().inspection_date =
        std::min(day_from_civil(c.year, 1, 1) + inspection_offset, c.end);
  }
  const auto& a = prof.attributes;
  for (auto& im : out.inspections) {
    const double years_before = static_cast<double>(c.midpoint - im.inspection_date) / 365.25;
    const double mileage = std::max(0.0, mileage_now - annual * years_before);
    const double drift = std::exp(-prof.deterioration * (mileage_now - mileage) / 1e4);
    im.vin = prof.vin;
    im.plate = prof.plate;
    im.model_year = a.model_year;
    im.accumulated_mileage = std::round(mileage);
    im.capacity = a.capacity;
    im.wheel_base = std::round(a.wheel_base);
    im.maximum_horsepower = a.maximum_horsepower;
    im.torsion = a.torsion;
    im.total_mass = std::round(a.total_mass);
    im.fuel_tank_capacity = a.fuel_tank_capacity;
    im.vehicle_volume = a.vehicle_volume;
    im.press_ratio = a.press_ratio;
    im.engine_type = a.engine_type;
    im.vehicle_brand = a.vehicle_brand;
    im.fuel_type = a.fuel_type;
    im.im_co = prof.factor.co * drift * std::exp(0.05 * d.normal());
    im.im_hc = prof.factor.hc * drift * std::exp(0.05 * d.normal());
    im.im_no = prof.factor.no * drift * std::exp(0.05 * d.normal());
  }

  const int passes = 1 + d.poisson(std::max(0.0, spec.orrs_records_per_vehicle - 1.0));
  for (int k = 0; k < passes; ++k) out.passes.push_back(draw_orrs(d, spec, c, prof.plate, prof.factor));
  return out;
}

}  // namespace

EmissionLaw EmissionLaw::solve(double median, double sigma, double share, double cap_ratio) {
  if (!(median > 0.0) || !(sigma > 0.0) || !(cap_ratio > 1.0))
    throw ConfigError("emission law: median, sigma must be positive and cap_ratio > 1");
  EmissionLaw law;
  law.median = median;
  law.sigma = sigma;
  law.q90 = median * std::exp(sigma * normal_quantile(kSplice));
  constexpr double kAlphaMin = 1e-3, kAlphaMax = 200.0;
  double cap = cap_ratio;
  while (share_of(median, sigma, kAlphaMin, cap) < share) {
    cap *= 2.0;
    if (cap > 1e9) throw ConfigError("top_decile_share is not attainable by the tail law");
  }
  if (share_of(median, sigma, kAlphaMax, cap) > share)
    throw ConfigError("top_decile_share is below what the log-normal body alone produces");
  // share decreases monotonically in alpha; bisect in log space.
  double lo = std::log(kAlphaMin), hi = std::log(kAlphaMax);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (share_of(median, sigma, std::exp(mid), cap) > share ? lo : hi) = mid;
  }
  law.alpha = std::exp(0.5 * (lo + hi));
  law.cap_ratio = cap;
  return law;
}

double EmissionLaw::quantile(double u) const {
  if (u <= kSplice) return median * std::exp(sigma * normal_quantile(u));
  const double v = std::min((u - kSplice) / (1.0 - kSplice), 1.0);
  return q90 * std::pow(1.0 - v * (1.0 - std::pow(cap_ratio, -alpha)), -1.0 / alpha);
}

double EmissionLaw::top_decile_share() const { return share_of(median, sigma, alpha, cap_ratio); }

void FleetSpec::validate() const {
  if (n_vehicles < 100) throw ConfigError("synth.n_vehicles must be >= 100");
  if (!(top_decile_share >= 0.5 && top_decile_share < 1.0))
    throw ConfigError("synth.top_decile_share must lie in [0.5, 1)");
  if (!(orrs_records_per_vehicle >= 1.0))
    throw ConfigError("synth.orrs_records_per_vehicle must be >= 1");
  for (double m : {median_im_co, median_im_hc, median_im_no, median_orrs_hc_ppm,
                   median_orrs_co_ratio, median_orrs_no_ppm})
    if (!(m > 0.0)) throw ConfigError("synth medians must be positive");
  if (!(body_sigma > 0.0)) throw ConfigError("synth.body_sigma must be positive");
  if (!(tail_cap_ratio > 1.0)) throw ConfigError("synth.tail_cap_ratio must exceed 1");
  if (!(qc_violation_rate >= 0.0 && qc_violation_rate <= 1.0))
    throw ConfigError("synth.qc_violation_rate must lie in [0, 1]");
  if (!(met_regime.out_of_window_rate >= 0.0 && met_regime.out_of_window_rate <= 1.0))
    throw ConfigError("synth.met_regime.out_of_window_rate must lie in [0, 1]");
  if (!(unregistered_rate >= 0.0 && unregistered_rate < 1.0))
    throw ConfigError("synth.unregistered_rate must lie in [0, 1)");
}

Fleet generate_fleet(const FleetSpec& spec) {
  spec.validate();
  const Campaign campaign;
  const std::array<EmissionLaw, 3> laws = {
      EmissionLaw::solve(spec.median_im_co, spec.body_sigma, spec.top_decile_share,
                         spec.tail_cap_ratio),
      EmissionLaw::solve(spec.median_im_hc, spec.body_sigma, spec.top_decile_share,
                         spec.tail_cap_ratio),
      EmissionLaw::solve(spec.median_im_no, spec.body_sigma, spec.top_decile_share,
                         spec.tail_cap_ratio),
  };

  Fleet fleet;
  fleet.truth.reserve(spec.n_vehicles);
  for (std::size_t i = 0; i < spec.n_vehicles; ++i) {
    auto v = generate_vehicle(spec, campaign, laws, i);
    fleet.truth.push_back(std::move(v.profile));
    for (auto& im : v.inspections) fleet.im.push_back(std::move(im));
    for (auto& r : v.passes) fleet.orrs.push_back(std::move(r));
  }

  // Passes by vehicles absent from the registry (non-local plates).
  const auto registered = static_cast<double>(fleet.orrs.size());
  const auto foreign = static_cast<std::size_t>(
      std::llround(spec.unregistered_rate / (1.0 - spec.unregistered_rate) * registered));
  for (std::size_t j = 0; j < foreign; ++j) {
    Draw d(make_rng(spec.seed, spec.n_vehicles + j));
    const double usage = d.normal();
    const auto latent = draw_latent(d, usage, laws);
    fleet.orrs.push_back(draw_orrs(d, spec, campaign, plate_for(j, "WB"), latent.factor));
  }

  std::sort(fleet.orrs.begin(), fleet.orrs.end(), [](const OrrsRecord& a, const OrrsRecord& b) {
    return std::tie(a.timestamp, a.plate) < std::tie(b.timestamp, b.plate);
  });
  return fleet;
}

std::string truth_to_jsonl(const std::vector<EmitterProfile>& truth) {
  std::string out;
  for (const auto& t : truth) {
    const auto& a = t.attributes;
    nlohmann::json j = {
        {"vin", t.vin},
        {"plate", t.plate},
        {"factor", {{"co", t.factor.co}, {"hc", t.factor.hc}, {"no", t.factor.no}}},
        {"quantile", t.quantile},
        {"dirty_tail", t.dirty_tail},
        {"deterioration", t.deterioration},
        {"model_year", a.model_year},
        {"accumulated_mileage", a.accumulated_mileage},
        {"annual_mileage", a.annual_mileage},
        {"engine_type", a.engine_type},
        {"vehicle_brand", a.vehicle_brand},
        {"fuel_type", a.fuel_type},
    };
    out += j.dump();
    out += '\n';
  }
  return out;
}

CorruptionResult corrupt_for_robustness(std::vector<OrrsRecord> records, double fraction,
                                        std::uint64_t seed, const MetWindow& window) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ConfigError("corruption fraction must lie in [0, 1]");
  const std::size_t n = records.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0);
  std::shuffle(order.begin(), order.end(), rng);
  CorruptionResult out{std::move(records), std::vector<bool>(n, false)};
  Draw d(make_rng(seed, 1));
  for (std::size_t k = 0; k < count; ++k) {
    auto& r = out.records[order[k]];
    out.corrupted[order[k]] = true;
    switch (static_cast<int>(d.uniform() * 4.0)) {
      case 0:
        r.temperature = window.temp_min - 1.0 - 5.0 * d.uniform();
        break;
      case 1:
        r.temperature = window.temp_max + 0.5 + 7.0 * d.uniform();
        break;
      case 2:
        r.relative_humidity = window.rh_max + 10.0 * d.uniform();
        break;
      default:
        r.wind_speed = window.wind_max + 4.0 * d.uniform();
        break;
    }
  }
  return out;
}

}  // namespace roadside::synth
