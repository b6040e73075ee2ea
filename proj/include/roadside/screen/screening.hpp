#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "roadside/pollutant.hpp"
#include "roadside/util/random.hpp"

namespace roadside::screen {

/// Emission standards in g/km.
struct StandardSet {
  double co = 8.0;
  double hc = 1.6;
  double no = 1.3;

  double of(Pollutant p) const { return p == Pollutant::kCo ? co : (p == Pollutant::kHc ? hc : no); }
  void validate() const;
};

enum class BinBasis { kPredicted, kTruth };

struct RateBin {
  double lower = 0.0;  // g/km
  double upper = 0.0;
  std::size_t count = 0;
  std::size_t n_over = 0;
  double rate = 0.0;
};

/// Bins ordered by magnitude; consecutive bins share an edge.
struct RateCurve {
  std::vector<RateBin> bins;
  bool degenerate = false;

  std::size_t total() const;
  /// Throws ConfigError when bins are unordered or rates fall outside [0, 1].
  void validate() const;
};

/// Equal-count bins over the chosen basis. Tied values are never split
/// across bins, so heavy ties can yield fewer than n_bins bins. When every
/// value is identical the curve has one bin, is marked degenerate and a
/// warning is appended. Throws ConfigError for length mismatch, n_bins < 2 or
/// empty input.
RateCurve over_standard_rate_curve(std::span<const double> predicted, std::span<const double> truth,
                                   double standard, std::size_t n_bins = 50,
                                   BinBasis basis = BinBasis::kPredicted,
                                   std::vector<std::string>* warnings = nullptr);

/// Absent thresholds are std::nullopt.
struct ThresholdPair {
  std::optional<double> free_threshold;
  std::optional<double> re_threshold;
};

/// free = upper edge of the longest prefix of bins with rate <= eps;
/// re = lower edge of the longest suffix with rate >= 1 - eps.
/// eps must lie in [0, 0.5). Degenerate curves give absent thresholds.
ThresholdPair find_thresholds(const RateCurve& curve, double eps = 0.0);

enum class ScreenClass { kFreeIm, kRegular, kReIm };
std::string_view name_of(ScreenClass c);

using Thresholds = std::array<ThresholdPair, 3>;  // indexed by Pollutant

/// ReIM if any prediction exceeds its Re threshold; FreeIM if every
/// prediction is below its Free threshold; Regular otherwise. An absent
/// threshold never triggers its class.
ScreenClass classify(const PollutantTriple& prediction, const Thresholds& thresholds);

struct Classification {
  std::vector<ScreenClass> classes;
  std::array<std::size_t, 3> counts{};  // free, regular, re
  std::array<double, 3> proportions{};
};

Classification classify_fleet(std::span<const PollutantTriple> predictions, const Thresholds& thresholds);

/// Predictions and I/M truth for the screened fleet.
struct ScreeningData {
  std::array<std::vector<double>, 3> predicted;
  std::array<std::vector<double>, 3> truth;

  std::size_t size() const { return predicted[0].size(); }
  void validate() const;
};

struct CurveOptions {
  std::size_t n_bins = 50;
  BinBasis basis = BinBasis::kPredicted;
  double eps = 0.0;
};

struct MonteCarloConfig {
  std::size_t t = 500;
  std::size_t n = 15000;
  bool stratified = true;
  std::uint64_t seed = 0;
  CurveOptions curve;

  void validate(std::size_t dataset_size) const;
};

/// Relative and absolute error of the mean resampled threshold.
struct ThresholdError {
  std::optional<double> reference;
  std::optional<double> mean;
  std::optional<double> re_percent;
  std::optional<double> ae;
  std::size_t n_present = 0;
  std::size_t n_absent = 0;
};

/// re = |mean - x| / x * 100, ae = |mean - x|. Missing inputs, an empty
/// sample or x = 0 leave the corresponding fields absent.
ThresholdError threshold_error(std::optional<double> reference,
                               std::span<const std::optional<double>> resampled);

struct PollutantRobustness {
  ThresholdPair reference;
  ThresholdError free;
  ThresholdError re;
  std::vector<ThresholdPair> repetitions;
  double over_ratio = 0.0;
};

struct RobustnessReport {
  MonteCarloConfig config;
  std::array<PollutantRobustness, 3> pollutants;

  /// (pollutant, threshold, reference, mean, re_percent, ae, n_present, n_absent)
  std::string summary_csv() const;
  /// (pollutant, repetition, free_threshold, re_threshold)
  std::string repetitions_csv() const;
};

/// Sorted row indices: k_first drawn without replacement from `first` and
/// k_second from `second`. Throws DataError when a pool is too small.
std::vector<std::size_t> draw_stratified(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                         std::size_t k_first, std::size_t k_second, Rng& rng);
/// Unstratified draw of k rows from the union of both pools.
std::vector<std::size_t> draw_stratified(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                         std::size_t k, Rng& rng);

/// Repetition r draws from substream (seed, r); each pollutant is
/// resampled independently, stratified on its own over-standard flag.
/// Throws DataError naming the stratum when it cannot supply its share.
RobustnessReport monte_carlo_thresholds(const ScreeningData& data, const StandardSet& standards,
                                        const MonteCarloConfig& cfg);

struct SweepRow {
  std::size_t n = 0;
  Pollutant pollutant = Pollutant::kCo;
  ThresholdError free;
  ThresholdError re;
};

struct SweepResult {
  std::vector<std::size_t> sizes;
  std::vector<SweepRow> rows;  // size-major, pollutants in order
  /// Per pollutant knee for the Free and Re thresholds.
  std::array<std::optional<std::size_t>, 3> free_knee;
  std::array<std::optional<std::size_t>, 3> re_knee;

  /// (n, pollutant, threshold, re_percent, ae, n_present, n_absent)
  std::string table_csv() const;
};

/// Smallest size whose relative RE improvement to the next size is below
/// `fraction`. Needs at least three sizes and RE at every size.
std::optional<std::size_t> find_knee(std::span<const std::size_t> sizes,
                                     std::span<const std::optional<double>> re, double fraction = 0.10);

SweepResult sample_size_sweep(const ScreeningData& data, const StandardSet& standards,
                              std::span<const std::size_t> sizes, std::size_t t, std::uint64_t seed,
                              const CurveOptions& curve = {}, double knee_fraction = 0.10);

/// (pollutant, bin, lower, upper, count, n_over, rate)
std::string rate_curves_csv(const std::array<RateCurve, 3>& curves);

/// Threshold policy with provenance; absent thresholds are null.
nlohmann::json policy_to_json(const Thresholds& thresholds, const StandardSet& standards,
                              const std::string& dataset_hash, const std::string& config_hash);
/// Throws DataError on a malformed policy or when free > re.
Thresholds policy_from_json(const nlohmann::json& doc);

}  // namespace roadside::screen
