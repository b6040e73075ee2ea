#include "roadside/learn/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "roadside/errors.hpp"
#include "roadside/util/parallel.hpp"
#include "roadside/util/random.hpp"

namespace roadside::learn {

std::vector<nlohmann::json> HyperGrid::expand() const {
  std::vector<nlohmann::json> points = {base.is_null() ? nlohmann::json::object() : base};
  for (const auto& [key, values] : axes) {
    if (values.empty()) throw ConfigError("grid axis '" + key + "' has no values");
    std::vector<nlohmann::json> next;
    next.reserve(points.size() * values.size());
    for (const auto& p : points)
      for (const auto& v : values) {
        auto q = p;
        q[key] = v;
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

std::size_t HyperGrid::size() const {
  std::size_t n = 1;
  for (const auto& [_, values] : axes) n *= values.size();
  return n;
}

namespace {

struct Range {
  double lo;
  double hi;
  bool integer;
  std::vector<double> allowed;  // non-empty: value must be one of these
};

const std::map<std::string, Range>& ranges_for(LearnerKind kind) {
  static const std::map<std::string, Range> mlp = {
      {"dropout_rate", {0, 0, false, {0.1, 0.2, 0.3}}},
      {"learning_rate", {0, 0, false, {1e-3, 1e-2, 1e-1}}},
      {"epochs", {100, 400, true, {}}},
  };
  static const std::map<std::string, Range> rf = {
      {"n_trees", {0, 0, true, {100, 200, 300, 400}}},
      {"max_depth", {3, 8, true, {}}},
      {"min_samples_split", {2, 6, true, {}}},
  };
  static const std::map<std::string, Range> gbt = {
      {"max_depth", {4, 8, true, {}}},
      {"min_child_weight", {1, 5, false, {}}},
      {"subsample", {0.5, 0.9, false, {}}},
      {"colsample", {0.5, 0.9, false, {}}},
  };
  switch (kind) {
    case LearnerKind::kMlp: return mlp;
    case LearnerKind::kForest: return rf;
    case LearnerKind::kGbt: return gbt;
  }
  return gbt;
}

std::string describe(const Range& r) {
  if (!r.allowed.empty()) {
    std::string s = "one of {";
    for (std::size_t i = 0; i < r.allowed.size(); ++i)
      s += (i ? ", " : "") + nlohmann::json(r.allowed[i]).dump();
    return s + "}";
  }
  return "in [" + nlohmann::json(r.lo).dump() + ", " + nlohmann::json(r.hi).dump() + "]";
}

}  // namespace

void validate_grid(const HyperGrid& grid, LearnerKind kind, const std::string& key_path) {
  const auto& ranges = ranges_for(kind);
  for (const auto& [axis, values] : grid.axes) {
    if (values.empty()) throw ConfigError(key_path + "." + axis + ": axis has no values");
    const auto it = ranges.find(axis);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::string where = key_path + "." + axis + "[" + std::to_string(i) + "]";
      if (it == ranges.end()) continue;
      const auto& v = values[i];
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      const double x = v.get<double>();
      const auto& r = it->second;
      bool ok = r.allowed.empty() ? (x >= r.lo && x <= r.hi)
                                  : std::any_of(r.allowed.begin(), r.allowed.end(),
                                                [x](double a) { return std::abs(a - x) <= 1e-12 * std::abs(a); });
      if (r.integer && x != std::floor(x)) ok = false;
      if (!ok) throw ConfigError(where + " = " + v.dump() + " is out of range (must be " + describe(r) + ")");
    }
  }
  // Each point must also form a valid config.
  for (const auto& p : grid.expand()) {
    try {
      switch (kind) {
        case LearnerKind::kMlp: p.get<MlpConfig>().validate(); break;
        case LearnerKind::kForest: p.get<ForestConfig>().validate(); break;
        case LearnerKind::kGbt: p.get<GbtConfig>().validate(); break;
      }
    } catch (const ConfigError& e) {
      throw ConfigError(key_path + ": " + e.what());
    }
  }
}

TrainFn make_trainer(LearnerKind kind, std::vector<int> cardinalities) {
  return [kind, cards = std::move(cardinalities)](const Matrix& x, std::span<const double> y,
                                                   const nlohmann::json& cfg) {
    return train_learner(kind, x, y, cfg, cards).model;
  };
}

GridSearchResult grid_search(const HyperGrid& grid, const TrainFn& train, const Matrix& x,
                             std::span<const double> y, std::size_t k, std::uint64_t seed,
                             std::span<const std::string> groups) {
  if (k < 2) throw ConfigError("grid search needs k >= 2 folds");
  if (x.rows() != y.size()) throw TrainingError("grid search: rows and targets differ in length");
  const auto points = grid.expand();
  if (points.empty()) throw ConfigError("grid is empty");

  // Fold of each row: groups (or rows) shuffled by seed, dealt round-robin.
  const std::size_t n = x.rows();
  std::vector<std::size_t> fold(n);
  {
    std::vector<std::string> labels;
    if (!groups.empty()) {
      if (groups.size() != n) throw ConfigError("grid search: one group label per row required");
      labels.assign(groups.begin(), groups.end());
    } else {
      for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    }
    std::vector<std::string> unique = labels;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    if (unique.size() < k) throw ConfigError("grid search: fewer groups than folds");
    Rng rng = make_rng(seed, 0x6F1D);
    std::shuffle(unique.begin(), unique.end(), rng);
    std::map<std::string, std::size_t> fold_of;
    for (std::size_t i = 0; i < unique.size(); ++i) fold_of[unique[i]] = i % k;
    for (std::size_t i = 0; i < n; ++i) fold[i] = fold_of[labels[i]];
  }

  GridSearchResult result;
  result.table.resize(points.size());
  parallel_for(points.size(), [&](std::size_t p) {
    auto& row = result.table[p];
    row.config = points[p];
    try {
      for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);
        const auto ytr = select(y, std::span<const std::size_t>(tr));
        const auto model = train(x.select_rows(tr), ytr, points[p]);
        const auto pred = model->predict(x.select_rows(te));
        double ss = 0.0;
        for (std::size_t i = 0; i < te.size(); ++i) ss += (pred[i] - y[te[i]]) * (pred[i] - y[te[i]]);
        const double r = std::sqrt(ss / static_cast<double>(te.size()));
        if (!std::isfinite(r)) throw TrainingError("non-finite validation error");
        row.fold_rmse.push_back(r);
      }
      row.mean_rmse = std::accumulate(row.fold_rmse.begin(), row.fold_rmse.end(), 0.0) /
                      static_cast<double>(k);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      row.fold_rmse.clear();
    }
  });

  const GridPointScore* best = nullptr;
  for (const auto& row : result.table) {
    if (row.failed) continue;
    if (best == nullptr || row.mean_rmse < best->mean_rmse ||
        (row.mean_rmse == best->mean_rmse && row.config.dump() < best->config.dump()))
      best = &row;
  }
  if (best == nullptr)
    throw TrainingError("grid search: every grid point failed (first error: " +
                        result.table.front().error + ")");
  result.best = best->config;
  return result;
}

}  // namespace roadside::learn
