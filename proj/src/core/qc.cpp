#include "roadside/core/qc.hpp"

#include <cmath>

#include "roadside/errors.hpp"

namespace roadside {

void QcPolicy::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!ok(max_relative_humidity))
    throw ConfigError("qc.max_relative_humidity must be finite and positive");
  if (!ok(max_temperature)) throw ConfigError("qc.max_temperature must be finite and positive");
}

bool violates_qc(const OrrsRecord& r, const QcPolicy& policy) {
  return r.relative_humidity > policy.max_relative_humidity ||
         r.temperature > policy.max_temperature;
}

QcResult apply_qc(std::span<const OrrsRecord> records, const QcPolicy& policy) {
  policy.validate();
  QcResult out;
  for (const auto& r : records) (violates_qc(r, policy) ? out.dropped : out.kept).push_back(r);
  return out;
}

}  // namespace roadside
