#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roadside/matrix.hpp"

namespace roadside::interpret {

/// Model under explanation: one prediction per input row.
using BatchModel = std::function<std::vector<double>(const Matrix&)>;

inline constexpr std::size_t kMaxExactFeatures = 12;

/// Shapley values under the interventional value function
/// v(S) = mean over background rows z of f(x_S, z_rest).
struct Attribution {
  std::vector<double> phi;
  std::vector<double> se;   // per-feature standard error (zero for the exact oracle)
  double prediction = 0.0;  // f(x)
  double baseline = 0.0;    // mean of f over the background
  /// Standard error of baseline + sum(phi) as an estimate of f(x).
  double efficiency_se = 0.0;
};

/// Permutation sampling in blocks of 2d orderings: a random ordering, its d
/// cyclic rotations and the reverse of each. An ordering and its reverse share
/// one background row; rows are visited in a seeded cyclic order and the
/// estimate is post-stratified on the row. n_perm is rounded up to whole
/// blocks.
/// Throws ConfigError for an empty background, n_perm == 0 or a width mismatch.
Attribution shapley_sample(const BatchModel& model, std::span<const double> x,
                           const Matrix& background, std::size_t n_perm, std::uint64_t seed);

/// Exact enumeration of all 2^d coalitions; d <= kMaxExactFeatures.
Attribution shapley_exact(const BatchModel& model, std::span<const double> x,
                          const Matrix& background);

struct MsMas {
  std::vector<double> ms;
  std::vector<double> mas;
  /// Feature indices by decreasing mas (ties by index).
  std::vector<std::size_t> ranking;
};

/// Column mean and column mean of absolute values.
MsMas aggregate_ms_mas(const Matrix& attributions);

struct ShapleyReport {
  std::vector<std::string> feature_names;
  std::vector<std::size_t> sample_ids;
  Matrix values;  // samples x features
  Matrix standard_errors;
  std::vector<double> predictions;
  double baseline = 0.0;
  MsMas summary;
  std::size_t n_permutations = 0;
  std::size_t background_size = 0;
  std::uint64_t seed = 0;

  /// (sample_id, feature, value)
  std::string values_csv() const;
  /// (feature, ms, mas, rank)
  std::string summary_csv() const;
};

/// Sample i uses substream (seed, sample_ids[i]), so the result does not
/// depend on scheduling.
ShapleyReport explain(const BatchModel& model, const Matrix& samples,
                      std::span<const std::size_t> sample_ids, const Matrix& background,
                      std::size_t n_perm, std::uint64_t seed,
                      std::vector<std::string> feature_names);

/// Seeded subsample of `size` rows without replacement (all rows if fewer).
Matrix select_background(const Matrix& data, std::size_t size, std::uint64_t seed);

}  // namespace roadside::interpret
