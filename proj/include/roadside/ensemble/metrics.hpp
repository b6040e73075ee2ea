#pragma once

#include <cstddef>
#include <span>

namespace roadside::ensemble {

/// Agreement between predicted and observed values. slope/intercept come from
/// the least-squares line of predicted on observed; r2 is the share of
/// predicted-value variance explained by that line (0 when predictions are
/// constant).
struct Metrics {
  double r2 = 0.0;
  double rmse = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
};

/// Throws DataError on length mismatch, n < 2, or constant observations.
Metrics compute_metrics(std::span<const double> predicted, std::span<const double> observed);

}  // namespace roadside::ensemble
