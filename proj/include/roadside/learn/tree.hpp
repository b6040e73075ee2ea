#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "roadside/matrix.hpp"
#include "roadside/util/random.hpp"

namespace roadside::learn {

/// Split node when feature >= 0 (x[feature] < threshold goes left), else leaf.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
  /// Nested {"feature","threshold","left","right"} / {"leaf"} objects.
  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& doc);

  friend bool operator==(const Tree&, const Tree&) = default;
};

/// Training matrix with every column presorted once (ties by row index).
class SortedColumns {
 public:
  explicit SortedColumns(const Matrix& x);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const std::uint32_t> order(std::size_t col) const {
    return {order_.data() + col * rows_, rows_};
  }
  std::span<const double> values(std::size_t col) const {
    return {values_.data() + col * rows_, rows_};
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint32_t> order_;  // column-major
  std::vector<double> values_;        // column-major, row order
};

struct TreeParams {
  int max_depth = 6;
  /// Minimum weight sum in each child.
  double min_child_weight = 1.0;
  /// Minimum weight sum for a node to be considered for splitting.
  double min_split_weight = 2.0;
  double lambda = 0.0;
  /// Fraction of allowed features sampled independently at every node.
  double node_feature_fraction = 1.0;
  /// Multiplies every leaf value (boosting shrinkage).
  double leaf_scale = 1.0;
};

/// Level-wise exact greedy regression tree on weighted targets. Leaf value is
/// sum(w t) / (sum(w) + lambda); split gain is
/// GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda), which at lambda = 0
/// is the reduction in weighted squared error. Gains are added to
/// `gain_by_feature`. Rows with zero weight are ignored.
Tree grow_tree(const SortedColumns& data, std::span<const double> target,
               std::span<const double> weight, const TreeParams& params,
               std::span<const char> feature_allowed, Rng& rng,
               std::vector<double>& gain_by_feature);

}  // namespace roadside::learn
