#include "roadside/learn/config.hpp"

#include <cmath>
#include <set>

#include "roadside/errors.hpp"

namespace roadside::learn {

std::string_view name_of(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kMlp: return "mlp";
    case LearnerKind::kForest: return "rf";
    case LearnerKind::kGbt: return "gbt";
  }
  return "?";
}

LearnerKind learner_from_name(std::string_view name) {
  if (name == "mlp") return LearnerKind::kMlp;
  if (name == "rf") return LearnerKind::kForest;
  if (name == "gbt") return LearnerKind::kGbt;
  throw ConfigError("unknown learner '" + std::string(name) + "' (expected mlp, rf or gbt)");
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         std::string_view what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a mapping");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key))
      throw ConfigError("unknown key '" + key + "' in " + std::string(what) + " config");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, std::string_view what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(what) + "." + key + " has the wrong type");
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void MlpConfig::validate() const {
  require(!hidden_layers.empty(), "mlp.hidden_layers must not be empty");
  for (int w : hidden_layers) require(w > 0, "mlp.hidden_layers widths must be positive");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "mlp.dropout_rate must lie in [0, 1)");
  require(std::isfinite(learning_rate) && learning_rate > 0.0,
          "mlp.learning_rate must be positive");
  require(epochs >= 1, "mlp.epochs must be >= 1");
  require(batch_size >= 1, "mlp.batch_size must be >= 1");
  require(output_activation == "relu" || output_activation == "linear",
          "mlp.output_activation must be relu or linear");
}

void ForestConfig::validate() const {
  require(n_trees >= 1, "rf.n_trees must be >= 1");
  require(max_depth >= 0, "rf.max_depth must be >= 0");
  require(min_samples_split >= 2, "rf.min_samples_split must be >= 2");
  require(max_features > 0.0 && max_features <= 1.0, "rf.max_features must lie in (0, 1]");
}

void GbtConfig::validate() const {
  require(n_rounds >= 0, "gbt.n_rounds must be >= 0");
  require(max_depth >= 0, "gbt.max_depth must be >= 0");
  require(min_child_weight >= 0.0, "gbt.min_child_weight must be >= 0");
  require(subsample > 0.0 && subsample <= 1.0, "gbt.subsample must lie in (0, 1]");
  require(colsample > 0.0 && colsample <= 1.0, "gbt.colsample must lie in (0, 1]");
  require(learning_rate > 0.0 && learning_rate <= 1.0, "gbt.learning_rate must lie in (0, 1]");
  require(lambda_l2 >= 0.0, "gbt.lambda_l2 must be >= 0");
  require(gain_prune_threshold >= 0.0 && gain_prune_threshold < 1.0,
          "gbt.gain_prune_threshold must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const MlpConfig& c) {
  j = {{"hidden_layers", c.hidden_layers}, {"dropout_rate", c.dropout_rate},
       {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
       {"batch_size", c.batch_size},       {"output_activation", c.output_activation},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, MlpConfig& c) {
  reject_unknown_keys(j, {"hidden_layers", "dropout_rate", "learning_rate", "epochs",
                          "batch_size", "output_activation", "seed"},
                      "mlp");
  read(j, "hidden_layers", c.hidden_layers, "mlp");
  read(j, "dropout_rate", c.dropout_rate, "mlp");
  read(j, "learning_rate", c.learning_rate, "mlp");
  read(j, "epochs", c.epochs, "mlp");
  read(j, "batch_size", c.batch_size, "mlp");
  read(j, "output_activation", c.output_activation, "mlp");
  read(j, "seed", c.seed, "mlp");
}

void to_json(nlohmann::json& j, const ForestConfig& c) {
  j = {{"n_trees", c.n_trees},           {"max_depth", c.max_depth},
       {"min_samples_split", c.min_samples_split}, {"max_features", c.max_features},
       {"bootstrap", c.bootstrap},       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ForestConfig& c) {
  reject_unknown_keys(
      j, {"n_trees", "max_depth", "min_samples_split", "max_features", "bootstrap", "seed"},
      "rf");
  read(j, "n_trees", c.n_trees, "rf");
  read(j, "max_depth", c.max_depth, "rf");
  read(j, "min_samples_split", c.min_samples_split, "rf");
  read(j, "max_features", c.max_features, "rf");
  read(j, "bootstrap", c.bootstrap, "rf");
  read(j, "seed", c.seed, "rf");
}

void to_json(nlohmann::json& j, const GbtConfig& c) {
  j = {{"n_rounds", c.n_rounds},
       {"max_depth", c.max_depth},
       {"min_child_weight", c.min_child_weight},
       {"subsample", c.subsample},
       {"colsample", c.colsample},
       {"learning_rate", c.learning_rate},
       {"lambda_l2", c.lambda_l2},
       {"gain_prune_threshold", c.gain_prune_threshold},
       {"prune_refit", c.prune_refit},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GbtConfig& c) {
  reject_unknown_keys(j, {"n_rounds", "max_depth", "min_child_weight", "subsample", "colsample",
                          "learning_rate", "lambda_l2", "gain_prune_threshold", "prune_refit",
                          "seed"},
                      "gbt");
  read(j, "n_rounds", c.n_rounds, "gbt");
  read(j, "max_depth", c.max_depth, "gbt");
  read(j, "min_child_weight", c.min_child_weight, "gbt");
  read(j, "subsample", c.subsample, "gbt");
  read(j, "colsample", c.colsample, "gbt");
  read(j, "learning_rate", c.learning_rate, "gbt");
  read(j, "lambda_l2", c.lambda_l2, "gbt");
  read(j, "gain_prune_threshold", c.gain_prune_threshold, "gbt");
  read(j, "prune_refit", c.prune_refit, "gbt");
  read(j, "seed", c.seed, "gbt");
}

}  // namespace roadside::learn
