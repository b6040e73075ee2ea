#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "roadside/core/records.hpp"
#include "roadside/matrix.hpp"

namespace roadside {

inline constexpr std::size_t kFeatureCount = 25;
inline constexpr std::string_view kFeatureSchemaVersion = "roadside.features/1";

/// Column order of the model input. Changing it requires a schema version bump.
enum class Feature : std::size_t {
  kRsCo, kRsHc, kRsNo, kVelocity, kAcceleration, kVsp,
  kTemperature, kRelativeHumidity, kWindSpeed, kPressure,
  kModelYear, kAccumulatedMileage, kCapacity, kWheelBase, kMaximumHorsepower,
  kTorsion, kTotalMass, kFuelTankCapacity, kVehicleVolume, kPressRatio,
  kEngineType, kVehicleBrand, kFuelType, kSiteId, kHourOfDay,
};

constexpr std::size_t column_of(Feature f) { return static_cast<std::size_t>(f); }

using FeatureVector = std::array<double, kFeatureCount>;

const std::array<std::string_view, kFeatureCount>& feature_names();
bool is_categorical(std::size_t column);
/// Index of a feature by name; throws ConfigError for unknown names.
std::size_t feature_index(std::string_view name);
/// SHA-256 over the schema version and column names.
const std::string& feature_schema_hash();

/// Label -> integer code table. Code 0 is reserved for unseen labels; known
/// labels get 1..K in lexicographic order.
class CategoricalEncoder {
 public:
  static constexpr int kUnknownCode = 0;
  static constexpr std::string_view kUnknownLabel = "<unknown>";

  CategoricalEncoder() = default;
  explicit CategoricalEncoder(std::vector<std::string> labels);

  int encode(std::string_view label) const;
  bool contains(std::string_view label) const;
  std::string decode(int code) const;
  /// Number of codes including the reserved unknown code.
  int cardinality() const { return static_cast<int>(labels_.size()) + 1; }
  const std::vector<std::string>& labels() const { return labels_; }

  friend bool operator==(const CategoricalEncoder&, const CategoricalEncoder&) = default;

 private:
  std::vector<std::string> labels_;  // sorted, unique
};

struct EncoderTables {
  CategoricalEncoder engine_type;
  CategoricalEncoder vehicle_brand;
  CategoricalEncoder fuel_type;
  CategoricalEncoder site_id;

  static EncoderTables fit(std::span<const MatchedSample> samples);

  /// Categorical cardinality per input column; 0 for numeric columns.
  std::vector<int> cardinalities() const;

  nlohmann::json to_json() const;
  static EncoderTables from_json(const nlohmann::json& doc);

  friend bool operator==(const EncoderTables&, const EncoderTables&) = default;
};

/// Assembles the 25 model inputs. Numeric fields are copied verbatim; a
/// non-finite numeric field throws DataError naming it. Unseen categorical
/// labels map to the reserved code and append a message to `warnings`.
FeatureVector build_features(const MatchedSample& sample, const EncoderTables& encoders,
                             std::vector<std::string>* warnings = nullptr);

Matrix build_feature_matrix(std::span<const MatchedSample> samples,
                            const EncoderTables& encoders,
                            std::vector<std::string>* warnings = nullptr);

int hour_of_day(Timestamp t);

}  // namespace roadside
