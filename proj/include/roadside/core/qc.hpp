#pragma once

#include <span>
#include <vector>

#include "roadside/core/records.hpp"

namespace roadside {

/// Roadside readings are unreliable above these meteorological limits.
struct QcPolicy {
  double max_relative_humidity = 95.0;  // %
  double max_temperature = 40.0;        // degC

  /// Throws ConfigError unless both limits are finite and positive.
  void validate() const;
};

struct QcResult {
  std::vector<OrrsRecord> kept;
  std::vector<OrrsRecord> dropped;
};

bool violates_qc(const OrrsRecord& record, const QcPolicy& policy);

/// Stable partition: dropped holds the records that strictly exceed either limit.
QcResult apply_qc(std::span<const OrrsRecord> records, const QcPolicy& policy = {});

}  // namespace roadside
