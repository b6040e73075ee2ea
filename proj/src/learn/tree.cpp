#include "roadside/learn/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "roadside/errors.hpp"

namespace roadside::learn {

double Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                                                      : n.right);
  }
  return nodes[i].value;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

nlohmann::json node_to_json(const Tree& t, std::size_t i) {
  const auto& n = t.nodes[i];
  if (n.feature < 0) return {{"leaf", n.value}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"left", node_to_json(t, static_cast<std::size_t>(n.left))},
          {"right", node_to_json(t, static_cast<std::size_t>(n.right))}};
}

int node_from_json(Tree& t, const nlohmann::json& j, int depth) {
  if (depth > 64) throw DataError("model document: tree nesting too deep");
  const int index = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("leaf")) {
    t.nodes.back().value = j.at("leaf").get<double>();
    return index;
  }
  const int feature = j.at("feature").get<int>();
  const double threshold = j.at("threshold").get<double>();
  const int left = node_from_json(t, j.at("left"), depth + 1);
  const int right = node_from_json(t, j.at("right"), depth + 1);
  auto& n = t.nodes[static_cast<std::size_t>(index)];
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  return index;
}

}  // namespace

nlohmann::json Tree::to_json() const { return node_to_json(*this, 0); }

Tree Tree::from_json(const nlohmann::json& doc) {
  Tree t;
  try {
    node_from_json(t, doc, 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model document: malformed tree: ") + e.what());
  }
  return t;
}

SortedColumns::SortedColumns(const Matrix& x)
    : rows_(x.rows()), cols_(x.cols()), order_(x.rows() * x.cols()),
      values_(x.rows() * x.cols()) {
  for (std::size_t c = 0; c < cols_; ++c) {
    double* v = values_.data() + c * rows_;
    for (std::size_t r = 0; r < rows_; ++r) v[r] = x(r, c);
    std::uint32_t* o = order_.data() + c * rows_;
    std::iota(o, o + rows_, 0U);
    std::stable_sort(o, o + rows_, [v](std::uint32_t a, std::uint32_t b) { return v[a] < v[b]; });
  }
}

namespace {

struct NodeStats {
  double g = 0.0;  // sum w t
  double h = 0.0;  // sum w
  double q = 0.0;  // sum w t^2
};

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct ScanState {
  double gl = 0.0;
  double hl = 0.0;
  double last = 0.0;
  bool seen = false;
};

double split_threshold(double lo, double hi) {
  const double mid = lo + 0.5 * (hi - lo);
  return mid > lo ? mid : hi;
}

}  // namespace

Tree grow_tree(const SortedColumns& data, std::span<const double> target,
               std::span<const double> weight, const TreeParams& params,
               std::span<const char> feature_allowed, Rng& rng,
               std::vector<double>& gain_by_feature) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  const double lambda = params.lambda;
  auto leaf_value = [&](const NodeStats& s) {
    const double denom = s.h + lambda;
    return denom > 0.0 ? params.leaf_scale * s.g / denom : 0.0;
  };
  auto score = [lambda](double g, double h) { return h + lambda > 0.0 ? g * g / (h + lambda) : 0.0; };

  std::vector<std::size_t> allowed;
  for (std::size_t f = 0; f < d; ++f)
    if (feature_allowed.empty() || feature_allowed[f]) allowed.push_back(f);

  Tree tree;
  std::vector<NodeStats> stats(1);
  std::vector<int> node_of(n, -1);
  for (std::size_t r = 0; r < n; ++r) {
    if (weight[r] <= 0.0) continue;
    node_of[r] = 0;
    stats[0].g += weight[r] * target[r];
    stats[0].h += weight[r];
    stats[0].q += weight[r] * target[r] * target[r];
  }
  tree.nodes.emplace_back();

  std::vector<int> level = {0};
  for (int depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
    std::vector<int> active;
    for (int id : level) {
      const auto& s = stats[static_cast<std::size_t>(id)];
      if (s.h >= params.min_split_weight && s.h >= 2.0 * params.min_child_weight && s.q > 0.0)
        active.push_back(id);
    }
    if (active.empty()) break;

    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < active.size(); ++s) slot_of[static_cast<std::size_t>(active[s])] = static_cast<int>(s);

    // Per-node feature subsets (random forest style); all allowed when fraction is 1.
    std::vector<char> node_mask(active.size() * d, 0);
    for (std::size_t s = 0; s < active.size(); ++s) {
      if (params.node_feature_fraction >= 1.0) {
        for (auto f : allowed) node_mask[s * d + f] = 1;
        continue;
      }
      auto pool = allowed;
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(params.node_feature_fraction *
                                                   static_cast<double>(pool.size()))));
      for (std::size_t i = 0; i < k && i < pool.size(); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        node_mask[s * d + pool[i]] = 1;
      }
    }

    std::vector<Candidate> best(active.size());
    std::vector<ScanState> scan(active.size());
    for (auto f : allowed) {
      std::fill(scan.begin(), scan.end(), ScanState{});
      const auto order = data.order(f);
      const auto values = data.values(f);
      for (std::size_t k = 0; k < n; ++k) {
        const auto r = order[k];
        const int node = node_of[r];
        if (node < 0) continue;
        const int slot = slot_of[static_cast<std::size_t>(node)];
        if (slot < 0 || !node_mask[static_cast<std::size_t>(slot) * d + f]) continue;
        auto& st = scan[static_cast<std::size_t>(slot)];
        const double v = values[r];
        if (st.seen && v > st.last) {
          const auto& tot = stats[static_cast<std::size_t>(node)];
          const double hr = tot.h - st.hl;
          if (st.hl >= params.min_child_weight && hr >= params.min_child_weight &&
              st.hl > 0.0 && hr > 0.0) {
            const double gain =
                score(st.gl, st.hl) + score(tot.g - st.gl, hr) - score(tot.g, tot.h);
            auto& b = best[static_cast<std::size_t>(slot)];
            if (gain > b.gain) b = {gain, static_cast<int>(f), split_threshold(st.last, v)};
          }
        }
        st.gl += weight[r] * target[r];
        st.hl += weight[r];
        st.last = v;
        st.seen = true;
      }
    }

    std::vector<int> next;
    std::vector<char> split(tree.nodes.size(), 0);
    for (std::size_t s = 0; s < active.size(); ++s) {
      const int id = active[s];
      const auto& b = best[s];
      if (b.feature < 0 || !(b.gain > 1e-12 * stats[static_cast<std::size_t>(id)].q)) continue;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(id)];
      node.feature = b.feature;
      node.threshold = b.threshold;
      node.left = left;
      node.right = left + 1;
      gain_by_feature[static_cast<std::size_t>(b.feature)] += b.gain;
      split[static_cast<std::size_t>(id)] = 1;
      next.push_back(left);
      next.push_back(left + 1);
    }
    if (next.empty()) break;
    stats.resize(tree.nodes.size());
    for (std::size_t r = 0; r < n; ++r) {
      const int node = node_of[r];
      if (node < 0 || !split[static_cast<std::size_t>(node)]) continue;
      const auto& sn = tree.nodes[static_cast<std::size_t>(node)];
      const auto col = data.values(static_cast<std::size_t>(sn.feature));
      const int child = col[r] < sn.threshold ? sn.left : sn.right;
      node_of[r] = child;
      auto& cs = stats[static_cast<std::size_t>(child)];
      cs.g += weight[r] * target[r];
      cs.h += weight[r];
      cs.q += weight[r] * target[r] * target[r];
    }
    level = std::move(next);
  }

  for (std::size_t i = 0; i < tree.nodes.size(); ++i)
    if (tree.nodes[i].feature < 0) tree.nodes[i].value = leaf_value(stats[i]);
  return tree;
}

}  // namespace roadside::learn
