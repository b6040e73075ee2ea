#include "roadside/core/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "roadside/errors.hpp"
#include "roadside/util/hash.hpp"

namespace roadside {

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static constexpr std::array<std::string_view, kFeatureCount> kNames = {
      "rs_co",           "rs_hc",           "rs_no",
      "velocity",        "acceleration",    "vsp",
      "temperature",     "relative_humidity", "wind_speed",
      "pressure",        "model_year",      "accumulated_mileage",
      "capacity",        "wheel_base",      "maximum_horsepower",
      "torsion",         "total_mass",      "fuel_tank_capacity",
      "vehicle_volume",  "press_ratio",     "engine_type",
      "vehicle_brand",   "fuel_type",       "site_id",
      "hour_of_day",
  };
  return kNames;
}

bool is_categorical(std::size_t column) {
  return column == column_of(Feature::kEngineType) ||
         column == column_of(Feature::kVehicleBrand) ||
         column == column_of(Feature::kFuelType) || column == column_of(Feature::kSiteId);
}

std::size_t feature_index(std::string_view name) {
  const auto& names = feature_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown feature '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

const std::string& feature_schema_hash() {
  static const std::string kHash = [] {
    std::string canonical(kFeatureSchemaVersion);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      canonical += '\n';
      canonical += feature_names()[i];
      canonical += is_categorical(i) ? ":categorical" : ":numeric";
    }
    return sha256_hex(canonical);
  }();
  return kHash;
}

CategoricalEncoder::CategoricalEncoder(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end());
  labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
}

int CategoricalEncoder::encode(std::string_view label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) return kUnknownCode;
  return static_cast<int>(it - labels_.begin()) + 1;
}

bool CategoricalEncoder::contains(std::string_view label) const {
  return encode(label) != kUnknownCode;
}

std::string CategoricalEncoder::decode(int code) const {
  if (code <= 0 || code > static_cast<int>(labels_.size())) return std::string(kUnknownLabel);
  return labels_[static_cast<std::size_t>(code - 1)];
}

EncoderTables EncoderTables::fit(std::span<const MatchedSample> samples) {
  std::set<std::string> engine, brand, fuel, site;
  for (const auto& s : samples) {
    engine.insert(s.im.engine_type);
    brand.insert(s.im.vehicle_brand);
    fuel.insert(s.im.fuel_type);
    site.insert(std::to_string(s.orrs.site_id));
  }
  auto vec = [](const std::set<std::string>& s) { return std::vector<std::string>(s.begin(), s.end()); };
  return {CategoricalEncoder(vec(engine)), CategoricalEncoder(vec(brand)),
          CategoricalEncoder(vec(fuel)), CategoricalEncoder(vec(site))};
}

std::vector<int> EncoderTables::cardinalities() const {
  std::vector<int> out(kFeatureCount, 0);
  out[column_of(Feature::kEngineType)] = engine_type.cardinality();
  out[column_of(Feature::kVehicleBrand)] = vehicle_brand.cardinality();
  out[column_of(Feature::kFuelType)] = fuel_type.cardinality();
  out[column_of(Feature::kSiteId)] = site_id.cardinality();
  return out;
}

nlohmann::json EncoderTables::to_json() const {
  auto table = [](const CategoricalEncoder& e) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& label : e.labels()) t[label] = e.encode(label);
    return t;
  };
  return {{"schema", std::string(kFeatureSchemaVersion)},
          {"unknown_code", CategoricalEncoder::kUnknownCode},
          {"engine_type", table(engine_type)},
          {"vehicle_brand", table(vehicle_brand)},
          {"fuel_type", table(fuel_type)},
          {"site_id", table(site_id)}};
}

EncoderTables EncoderTables::from_json(const nlohmann::json& doc) {
  auto table = [&](const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_object())
      throw DataError(std::string("encoder document lacks table '") + key + "'");
    std::vector<std::pair<int, std::string>> entries;
    for (const auto& [label, code] : doc.at(key).items()) entries.emplace_back(code.get<int>(), label);
    std::sort(entries.begin(), entries.end());
    std::vector<std::string> labels;
    for (const auto& [code, label] : entries) labels.push_back(label);
    CategoricalEncoder enc(labels);
    for (const auto& [code, label] : entries) {
      if (enc.encode(label) != code)
        throw DataError(std::string("encoder table '") + key +
                        "' codes are not the lexicographic 1..K assignment");
    }
    return enc;
  };
  return {table("engine_type"), table("vehicle_brand"), table("fuel_type"), table("site_id")};
}

int hour_of_day(Timestamp t) {
  auto s = t % kSecondsPerDay;
  if (s < 0) s += kSecondsPerDay;
  return static_cast<int>(s / 3600);
}

FeatureVector build_features(const MatchedSample& s, const EncoderTables& enc,
                             std::vector<std::string>* warnings) {
  FeatureVector v{};
  auto put = [&](Feature f, double value) {
    if (!std::isfinite(value))
      throw DataError("missing numeric field '" + std::string(feature_names()[column_of(f)]) +
                      "' for plate " + s.orrs.plate);
    v[column_of(f)] = value;
  };
  auto put_code = [&](Feature f, const CategoricalEncoder& e, const std::string& label) {
    const int code = e.encode(label);
    if (code == CategoricalEncoder::kUnknownCode && warnings)
      warnings->push_back("unseen " + std::string(feature_names()[column_of(f)]) + " '" + label +
                          "' encoded as reserved unknown code");
    v[column_of(f)] = code;
  };
  const auto& o = s.orrs;
  const auto& im = s.im;
  put(Feature::kRsCo, o.rs_co);
  put(Feature::kRsHc, o.rs_hc);
  put(Feature::kRsNo, o.rs_no);
  put(Feature::kVelocity, o.velocity);
  put(Feature::kAcceleration, o.acceleration);
  put(Feature::kVsp, s.vsp);
  put(Feature::kTemperature, o.temperature);
  put(Feature::kRelativeHumidity, o.relative_humidity);
  put(Feature::kWindSpeed, o.wind_speed);
  put(Feature::kPressure, o.pressure);
  put(Feature::kModelYear, im.model_year);
  put(Feature::kAccumulatedMileage, im.accumulated_mileage);
  put(Feature::kCapacity, im.capacity);
  put(Feature::kWheelBase, im.wheel_base);
  put(Feature::kMaximumHorsepower, im.maximum_horsepower);
  put(Feature::kTorsion, im.torsion);
  put(Feature::kTotalMass, im.total_mass);
  put(Feature::kFuelTankCapacity, im.fuel_tank_capacity);
  put(Feature::kVehicleVolume, im.vehicle_volume);
  put(Feature::kPressRatio, im.press_ratio);
  put_code(Feature::kEngineType, enc.engine_type, im.engine_type);
  put_code(Feature::kVehicleBrand, enc.vehicle_brand, im.vehicle_brand);
  put_code(Feature::kFuelType, enc.fuel_type, im.fuel_type);
  put_code(Feature::kSiteId, enc.site_id, std::to_string(o.site_id));
  v[column_of(Feature::kHourOfDay)] = hour_of_day(o.timestamp);
  return v;
}

Matrix build_feature_matrix(std::span<const MatchedSample> samples, const EncoderTables& enc,
                            std::vector<std::string>* warnings) {
  Matrix m(samples.size(), kFeatureCount);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = build_features(samples[i], enc, warnings);
    std::copy(v.begin(), v.end(), m.row(i).begin());
  }
  return m;
}

}  // namespace roadside
