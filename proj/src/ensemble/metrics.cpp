#include "roadside/ensemble/metrics.hpp"

#include <cmath>

#include "roadside/errors.hpp"

namespace roadside::ensemble {

Metrics compute_metrics(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size())
    throw DataError("metrics: predicted and observed lengths differ");
  const std::size_t n = observed.size();
  if (n < 2) throw DataError("metrics: need at least 2 values");
  double mo = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mo += observed[i];
    mp += predicted[i];
  }
  mo /= static_cast<double>(n);
  mp /= static_cast<double>(n);
  double soo = 0.0, sop = 0.0, spp = 0.0, sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = observed[i] - mo, b = predicted[i] - mp;
    soo += a * a;
    sop += a * b;
    spp += b * b;
    sse += (predicted[i] - observed[i]) * (predicted[i] - observed[i]);
  }
  if (!(soo > 0.0)) throw DataError("metrics: observed values are constant; slope is undefined");

  Metrics m;
  m.n = n;
  m.rmse = std::sqrt(sse / static_cast<double>(n));
  m.slope = sop / soo;
  m.intercept = mp - m.slope * mo;
  if (spp > 0.0) {
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = predicted[i] - (m.intercept + m.slope * observed[i]);
      res += e * e;
    }
    m.r2 = 1.0 - res / spp;
  }
  return m;
}

}  // namespace roadside::ensemble
