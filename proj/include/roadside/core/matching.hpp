#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roadside/core/records.hpp"

namespace roadside {

std::string normalize_plate(std::string_view plate);

struct UnmatchedRecord {
  OrrsRecord orrs;
  std::string reason;  // "no-registry-entry" or "invalid-kinematics"
};

struct MatchResult {
  std::vector<MatchedSample> matched;
  std::vector<UnmatchedRecord> unmatched;
};

/// Road grade for a site id; sites without an entry are level.
using GradeLookup = std::function<double(int site_id)>;

/// Joins each roadside pass to the most recent inspection on or before it
/// (same normalized plate), falling back to the nearest inspection in time.
/// Throws DataError listing duplicate (vin, inspection_date) pairs.
/// Output is sorted by (timestamp, plate, remaining fields), so it does not
/// depend on input order.
MatchResult match_records(std::span<const OrrsRecord> orrs, std::span<const ImRecord> im,
                          const GradeLookup& grade = {});

}  // namespace roadside
