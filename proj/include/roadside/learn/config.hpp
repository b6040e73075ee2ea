#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace roadside::learn {

enum class LearnerKind { kMlp, kForest, kGbt };

std::string_view name_of(LearnerKind kind);
/// Accepts "mlp", "rf" and "gbt"; throws ConfigError otherwise.
LearnerKind learner_from_name(std::string_view name);

struct MlpConfig {
  std::vector<int> hidden_layers = {256, 256};
  double dropout_rate = 0.1;
  double learning_rate = 1e-2;
  int epochs = 100;
  int batch_size = 256;
  /// "relu" clamps predictions at zero; "linear" is available for diagnostics.
  std::string output_activation = "relu";
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 6;
  int min_samples_split = 2;
  /// Fraction of features considered at each split.
  double max_features = 1.0;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct GbtConfig {
  int n_rounds = 300;
  int max_depth = 6;
  double min_child_weight = 1.0;
  double subsample = 0.8;
  double colsample = 0.8;
  double learning_rate = 0.1;
  double lambda_l2 = 1.0;
  double gain_prune_threshold = 0.01;
  /// Retrain without the pruned features after the first fit.
  bool prune_refit = true;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const GbtConfig&, const GbtConfig&) = default;
};

void to_json(nlohmann::json& j, const MlpConfig& c);
void from_json(const nlohmann::json& j, MlpConfig& c);
void to_json(nlohmann::json& j, const ForestConfig& c);
void from_json(const nlohmann::json& j, ForestConfig& c);
void to_json(nlohmann::json& j, const GbtConfig& c);
void from_json(const nlohmann::json& j, GbtConfig& c);

struct TrainReport {
  std::vector<double> loss;          // training RMSE per epoch / tree / round
  std::vector<double> feature_gain;  // total split gain per input column (trees only)
  std::vector<std::size_t> pruned;   // columns with gain share <= threshold
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

}  // namespace roadside::learn
