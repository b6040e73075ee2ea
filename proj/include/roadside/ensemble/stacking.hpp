#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "roadside/core/features.hpp"
#include "roadside/ensemble/metrics.hpp"
#include "roadside/learn/grid.hpp"
#include "roadside/learn/models.hpp"
#include "roadside/pollutant.hpp"

namespace roadside::ensemble {

inline constexpr std::string_view kStackedSchemaVersion = "roadside.stacked/1";
inline constexpr std::array<learn::LearnerKind, 3> kBaseKinds = {
    learn::LearnerKind::kMlp, learn::LearnerKind::kForest, learn::LearnerKind::kGbt};

/// Feature matrix and per-pollutant targets with vehicle identity per row.
struct TrainingSet {
  Matrix x;
  std::array<std::vector<double>, 3> y;  // indexed by Pollutant
  std::vector<std::string> vin;
  std::vector<std::uint64_t> row_id;
  std::vector<int> cardinalities;

  std::size_t size() const { return x.rows(); }
  const std::vector<double>& target(Pollutant p) const { return y[index_of(p)]; }
  TrainingSet subset(std::span<const std::size_t> rows) const;
};

/// Row ids default to the sample position.
TrainingSet make_training_set(std::span<const MatchedSample> samples, const EncoderTables& encoders,
                              std::vector<std::string>* warnings = nullptr);

/// Vehicle-level fold assignment: sorted distinct VINs are shuffled by seed
/// and dealt round-robin, so fold sizes differ by at most one VIN.
struct CvPlan {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::vector<std::string> vins;   // sorted
  std::vector<std::size_t> folds;  // fold of vins[i]

  std::size_t fold_of(const std::string& vin) const;
  std::vector<std::size_t> row_folds(std::span<const std::string> row_vins) const;
};

/// Throws ConfigError when k < 2 or there are fewer distinct VINs than folds.
CvPlan make_cv_plan(std::span<const std::string> vins, std::size_t k, std::uint64_t seed);

/// Rows whose VIN falls in the seeded test share; the rest are training rows.
struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
TrainTestSplit split_by_vehicle(std::span<const std::string> vins, double test_fraction,
                                std::uint64_t seed);

/// Fixed config, or a grid searched on the training set (VIN-grouped CV).
struct LearnerSpec {
  nlohmann::json config = nlohmann::json::object();
  std::optional<learn::HyperGrid> grid;
};

struct BaseSpecs {
  LearnerSpec mlp;
  LearnerSpec rf;
  LearnerSpec gbt;

  const LearnerSpec& of(learn::LearnerKind kind) const;
};

struct StackOptions {
  learn::GbtConfig meta;
  /// Feed raw features to the meta-learner next to the base predictions.
  bool passthrough = false;
  bool clamp_negative = true;
  /// Columns held constant (zero) for every learner.
  std::vector<std::size_t> disabled_features;

  StackOptions();
};

struct OofPredictions {
  Matrix pred;                     // rows x 3 (mlp, rf, gbt)
  std::vector<std::size_t> fold;   // fold that produced each row's prediction
  /// Training VINs of each fold model, for leakage audits.
  std::vector<std::vector<std::string>> fold_training_vins;
};

/// Each base learner is fit on k-1 folds and predicts the held-out fold.
/// Failures are rethrown as TrainingError naming the fold and learner.
OofPredictions generate_oof_predictions(const TrainingSet& data, const CvPlan& plan,
                                        Pollutant pollutant,
                                        const std::array<nlohmann::json, 3>& base_configs,
                                        const StackOptions& options = {});

struct PollutantStack {
  std::array<std::shared_ptr<const learn::Regressor>, 3> bases;
  std::shared_ptr<const learn::Regressor> meta;
};

struct StackedPrediction {
  PollutantTriple value;
  std::array<bool, 3> clamped{};
};

class StackedModel {
 public:
  StackedModel(std::array<PollutantStack, 3> stacks, EncoderTables encoders, StackOptions options,
               nlohmann::json metadata = nlohmann::json::object());

  /// Throws ConfigError when x has the wrong width.
  std::vector<StackedPrediction> predict(const Matrix& x) const;
  StackedPrediction predict(const FeatureVector& x) const;
  /// Final prediction (after clamping) for one pollutant.
  std::vector<double> predict_pollutant(Pollutant p, const Matrix& x) const;
  /// Base-learner predictions (columns mlp, rf, gbt) for one pollutant.
  Matrix base_predictions(Pollutant p, const Matrix& x) const;

  const EncoderTables& encoders() const { return encoders_; }
  const StackOptions& options() const { return options_; }
  const PollutantStack& stack(Pollutant p) const { return stacks_[index_of(p)]; }
  const nlohmann::json& metadata() const { return metadata_; }
  std::size_t meta_arity() const;

  nlohmann::json to_json() const;
  /// Throws DataError on malformed documents or a feature schema mismatch.
  static StackedModel from_json(const nlohmann::json& doc);

 private:
  Matrix prepare(const Matrix& x) const;
  Matrix meta_inputs(const Matrix& base, const Matrix& x) const;

  std::array<PollutantStack, 3> stacks_;
  EncoderTables encoders_;
  StackOptions options_;
  nlohmann::json metadata_;
};

struct ModelMetrics {
  Pollutant pollutant;
  std::string model;  // mlp, rf, gbt, ensemble
  Metrics metrics;
};

struct StackFitReport {
  std::array<OofPredictions, 3> oof;
  /// Ensemble predictions from the second-stage CV on the same folds.
  std::array<std::vector<double>, 3> ensemble_oof;
  std::vector<ModelMetrics> cv_metrics;  // 12 rows: pollutant-major, bases then ensemble
  std::array<std::array<nlohmann::json, 3>, 3> chosen_configs;  // [pollutant][base]
  std::array<std::array<learn::TrainReport, 3>, 3> base_reports;
};

struct StackFit {
  std::shared_ptr<const StackedModel> model;
  StackFitReport report;
};

/// Two-stage fit: out-of-fold base predictions, meta GBT on them (evaluated by
/// a second CV pass over the same folds), then base learners refit on every
/// training row.
StackFit fit_stacked(const TrainingSet& data, const CvPlan& plan, const BaseSpecs& bases,
                     const EncoderTables& encoders, const StackOptions& options = {});

/// Metrics of the three bases and the ensemble on a labelled set.
std::vector<ModelMetrics> evaluate(const StackedModel& model, const TrainingSet& data);

}  // namespace roadside::ensemble
