#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "roadside/learn/config.hpp"
#include "roadside/learn/mlp.hpp"
#include "roadside/learn/tree.hpp"
#include "roadside/matrix.hpp"

namespace roadside::learn {

inline constexpr std::string_view kModelSchemaVersion = "roadside.model/1";

/// Trained, immutable regressor. predict() is safe to call concurrently.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual LearnerKind kind() const = 0;
  virtual std::size_t n_features() const = 0;
  /// Throws ConfigError when the width does not match training.
  virtual std::vector<double> predict(const Matrix& x) const = 0;
  virtual double predict_one(std::span<const double> x) const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual nlohmann::json body_json() const = 0;
  /// Input columns the model actually reads.
  virtual std::vector<char> used_features() const = 0;

 protected:
  void check_width(std::size_t cols) const;
};

class ForestModel final : public Regressor {
 public:
  ForestModel(ForestConfig cfg, std::size_t n_features, std::vector<Tree> trees);

  LearnerKind kind() const override { return LearnerKind::kForest; }
  std::size_t n_features() const override { return n_features_; }
  std::vector<double> predict(const Matrix& x) const override;
  double predict_one(std::span<const double> x) const override;
  nlohmann::json config_json() const override;
  nlohmann::json body_json() const override;
  std::vector<char> used_features() const override;
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  ForestConfig cfg_;
  std::size_t n_features_;
  std::vector<Tree> trees_;
};

class GbtModel final : public Regressor {
 public:
  GbtModel(GbtConfig cfg, std::size_t n_features, double base_score, std::vector<Tree> trees);

  LearnerKind kind() const override { return LearnerKind::kGbt; }
  std::size_t n_features() const override { return n_features_; }
  std::vector<double> predict(const Matrix& x) const override;
  double predict_one(std::span<const double> x) const override;
  nlohmann::json config_json() const override;
  nlohmann::json body_json() const override;
  std::vector<char> used_features() const override;
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  GbtConfig cfg_;
  std::size_t n_features_;
  double base_score_;
  std::vector<Tree> trees_;  // leaf values already include shrinkage
};

class MlpModel final : public Regressor {
 public:
  MlpModel(MlpConfig cfg, InputEncoding encoding, MlpNetwork net, double target_scale);

  LearnerKind kind() const override { return LearnerKind::kMlp; }
  std::size_t n_features() const override { return encoding_.width(); }
  std::vector<double> predict(const Matrix& x) const override;
  double predict_one(std::span<const double> x) const override;
  nlohmann::json config_json() const override;
  nlohmann::json body_json() const override;
  std::vector<char> used_features() const override;
  const InputEncoding& encoding() const { return encoding_; }
  const MlpNetwork& network() const { return net_; }

 private:
  MlpConfig cfg_;
  InputEncoding encoding_;
  MlpNetwork net_;
  double target_scale_;
};

struct TrainedModel {
  std::shared_ptr<const Regressor> model;
  TrainReport report;
};

/// `row_ids` identify rows independently of their position (defaults to the
/// position). Tree learners canonicalize by id, so permuting rows together
/// with their ids leaves the fitted model unchanged.
TrainedModel train_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg,
                          std::span<const std::uint64_t> row_ids = {});

/// `feature_mask` (optional, one entry per column) removes columns from the
/// split search; pruning adds to it.
TrainedModel train_gbt(const Matrix& x, std::span<const double> y, const GbtConfig& cfg,
                       std::span<const std::uint64_t> row_ids = {},
                       std::span<const char> feature_mask = {});

/// Refit without the columns listed in `report.pruned`.
TrainedModel refit_without_pruned(const Matrix& x, std::span<const double> y,
                                  const GbtConfig& cfg, const TrainReport& report,
                                  std::span<const std::uint64_t> row_ids = {});

/// `cardinalities[c] > 0` marks column c as categorical with that many codes
/// (one-hot expanded internally); empty means all numeric.
TrainedModel train_mlp(const Matrix& x, std::span<const double> y, const MlpConfig& cfg,
                       std::span<const int> cardinalities = {});

/// Dispatch on kind with a JSON config.
TrainedModel train_learner(LearnerKind kind, const Matrix& x, std::span<const double> y,
                           const nlohmann::json& cfg, std::span<const int> cardinalities = {},
                           std::span<const std::uint64_t> row_ids = {});

/// Self-describing document: header (schema version, kind, config, feature
/// schema hash, feature count) plus body.
nlohmann::json model_to_json(const Regressor& model, const std::string& feature_schema_hash = "");
std::shared_ptr<const Regressor> model_from_json(const nlohmann::json& doc,
                                                 const std::string& expected_schema_hash = "");

}  // namespace roadside::learn
