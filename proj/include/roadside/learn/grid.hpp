#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "roadside/learn/config.hpp"
#include "roadside/learn/models.hpp"

namespace roadside::learn {

/// Cartesian product of candidate values over a fixed base config.
struct HyperGrid {
  nlohmann::json base = nlohmann::json::object();
  std::map<std::string, std::vector<nlohmann::json>> axes;

  /// All grid points, axes iterated in key order (last key fastest).
  std::vector<nlohmann::json> expand() const;
  std::size_t size() const;
};

/// Rejects grid values outside the tuning ranges, naming
/// `<key_path>.<axis>[<index>]` in the ConfigError.
void validate_grid(const HyperGrid& grid, LearnerKind kind, const std::string& key_path);

struct GridPointScore {
  nlohmann::json config;
  std::vector<double> fold_rmse;
  double mean_rmse = 0.0;
  bool failed = false;
  std::string error;
};

struct GridSearchResult {
  nlohmann::json best;
  std::vector<GridPointScore> table;  // one row per grid point, grid order
};

using TrainFn = std::function<std::shared_ptr<const Regressor>(
    const Matrix& x, std::span<const double> y, const nlohmann::json& cfg)>;

/// k-fold CV mean RMSE per grid point. Rows sharing a group label stay in one
/// fold (`groups` optional). Ties go to the lexicographically smaller
/// canonical config. Throws TrainingError when every point fails.
GridSearchResult grid_search(const HyperGrid& grid, const TrainFn& train, const Matrix& x,
                             std::span<const double> y, std::size_t k, std::uint64_t seed,
                             std::span<const std::string> groups = {});

/// Trainer for one learner kind with fixed categorical cardinalities.
TrainFn make_trainer(LearnerKind kind, std::vector<int> cardinalities = {});

}  // namespace roadside::learn
