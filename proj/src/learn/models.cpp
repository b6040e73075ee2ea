#include "roadside/learn/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "roadside/errors.hpp"
#include "roadside/util/parallel.hpp"

namespace roadside::learn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_training_inputs(const Matrix& x, std::span<const double> y, std::string_view who) {
  if (x.rows() != y.size())
    throw TrainingError(std::string(who) + ": " + std::to_string(x.rows()) + " rows but " +
                        std::to_string(y.size()) + " targets");
  if (x.rows() < 2) throw TrainingError(std::string(who) + ": need at least 2 rows");
  for (double v : x.data())
    if (!std::isfinite(v)) throw TrainingError(std::string(who) + ": non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw TrainingError(std::string(who) + ": non-finite target value");
}

double rmse(std::span<const double> p, std::span<const double> y) {
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (p[i] - y[i]) * (p[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Rows reordered by their identity so that the fit does not depend on
/// input order.
struct CanonicalData {
  Matrix x;
  std::vector<double> y;
  std::vector<std::uint64_t> ids;
};

CanonicalData canonicalize(const Matrix& x, std::span<const double> y,
                           std::span<const std::uint64_t> row_ids) {
  CanonicalData out;
  const std::size_t n = x.rows();
  if (row_ids.empty()) {
    out.x = x;
    out.y.assign(y.begin(), y.end());
    out.ids.resize(n);
    std::iota(out.ids.begin(), out.ids.end(), std::uint64_t{0});
    return out;
  }
  if (row_ids.size() != n) throw TrainingError("row_ids must have one entry per row");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return row_ids[a] < row_ids[b]; });
  for (std::size_t i = 1; i < n; ++i)
    if (row_ids[order[i]] == row_ids[order[i - 1]])
      throw TrainingError("duplicate row id " + std::to_string(row_ids[order[i]]));
  out.x = x.select_rows(order);
  out.y = select(y, std::span<const std::size_t>(order));
  out.ids = select(row_ids, std::span<const std::size_t>(order));
  return out;
}

std::vector<char> features_in(const std::vector<Tree>& trees, std::size_t d) {
  std::vector<char> used(d, 0);
  for (const auto& t : trees)
    for (const auto& n : t.nodes)
      if (n.feature >= 0) used[static_cast<std::size_t>(n.feature)] = 1;
  return used;
}

nlohmann::json trees_to_json(const std::vector<Tree>& trees) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : trees) out.push_back(t.to_json());
  return out;
}

std::vector<Tree> trees_from_json(const nlohmann::json& doc, std::size_t d) {
  std::vector<Tree> out;
  for (const auto& t : doc) {
    out.push_back(Tree::from_json(t));
    for (const auto& n : out.back().nodes)
      if (n.feature >= static_cast<int>(d)) throw DataError("model document: split feature out of range");
  }
  return out;
}

}  // namespace

void Regressor::check_width(std::size_t cols) const {
  if (cols != n_features())
    throw ConfigError("input width " + std::to_string(cols) + " does not match model width " +
                      std::to_string(n_features()));
}

// ---- random forest ----

ForestModel::ForestModel(ForestConfig cfg, std::size_t n_features, std::vector<Tree> trees)
    : cfg_(std::move(cfg)), n_features_(n_features), trees_(std::move(trees)) {}

double ForestModel::predict_one(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> ForestModel::predict(const Matrix& x) const {
  check_width(x.cols());
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_one(x.row(r));
  return out;
}

nlohmann::json ForestModel::config_json() const { return cfg_; }
nlohmann::json ForestModel::body_json() const { return {{"trees", trees_to_json(trees_)}}; }
std::vector<char> ForestModel::used_features() const { return features_in(trees_, n_features_); }

TrainedModel train_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg,
                          std::span<const std::uint64_t> row_ids) {
  const auto start = Clock::now();
  cfg.validate();
  check_training_inputs(x, y, "rf");
  const auto data = canonicalize(x, y, row_ids);
  const SortedColumns sorted(data.x);
  const std::size_t n = data.x.rows(), d = data.x.cols();

  TreeParams params;
  params.max_depth = cfg.max_depth;
  params.min_child_weight = 1.0;
  params.min_split_weight = cfg.min_samples_split;
  params.lambda = 0.0;
  params.node_feature_fraction = cfg.max_features;

  const auto n_trees = static_cast<std::size_t>(cfg.n_trees);
  std::vector<Tree> trees(n_trees);
  std::vector<std::vector<double>> gains(n_trees, std::vector<double>(d, 0.0));
  parallel_for(n_trees, [&](std::size_t t) {
    // Poisson(1) bootstrap counts keyed by row identity.
    std::vector<double> w(n, 1.0);
    if (cfg.bootstrap)
      for (std::size_t r = 0; r < n; ++r)
        w[r] = poisson_one(hash_to_unit(substream_seed(cfg.seed, t + 1, data.ids[r])));
    Rng rng = make_rng(cfg.seed, substream_seed(t, 0x5EED));
    trees[t] = grow_tree(sorted, data.y, w, params, {}, rng, gains[t]);
  });

  TrainReport report;
  report.feature_gain.assign(d, 0.0);
  for (const auto& g : gains)
    for (std::size_t f = 0; f < d; ++f) report.feature_gain[f] += g[f];
  std::vector<double> sum(n, 0.0), mean(n);
  for (std::size_t t = 0; t < n_trees; ++t) {
    for (std::size_t r = 0; r < n; ++r) {
      sum[r] += trees[t].predict(data.x.row(r));
      mean[r] = sum[r] / static_cast<double>(t + 1);
    }
    report.loss.push_back(rmse(mean, data.y));
  }
  auto model = std::make_shared<ForestModel>(cfg, d, std::move(trees));
  report.seconds = seconds_since(start);
  return {std::move(model), std::move(report)};
}

// ---- gradient-boosted trees ----

GbtModel::GbtModel(GbtConfig cfg, std::size_t n_features, double base_score,
                   std::vector<Tree> trees)
    : cfg_(std::move(cfg)), n_features_(n_features), base_score_(base_score),
      trees_(std::move(trees)) {}

double GbtModel::predict_one(std::span<const double> x) const {
  double sum = base_score_;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum;
}

std::vector<double> GbtModel::predict(const Matrix& x) const {
  check_width(x.cols());
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_one(x.row(r));
  return out;
}

nlohmann::json GbtModel::config_json() const { return cfg_; }
nlohmann::json GbtModel::body_json() const {
  return {{"base_score", base_score_}, {"trees", trees_to_json(trees_)}};
}
std::vector<char> GbtModel::used_features() const { return features_in(trees_, n_features_); }

namespace {

TrainedModel fit_gbt_once(const CanonicalData& data, const GbtConfig& cfg,
                          const std::vector<char>& allowed) {
  const std::size_t n = data.x.rows(), d = data.x.cols();
  const SortedColumns sorted(data.x);
  TreeParams params;
  params.max_depth = cfg.max_depth;
  params.min_child_weight = cfg.min_child_weight;
  params.min_split_weight = std::max(2.0, 2.0 * cfg.min_child_weight);
  params.lambda = cfg.lambda_l2;
  params.leaf_scale = cfg.learning_rate;

  std::vector<std::size_t> pool;
  for (std::size_t f = 0; f < d; ++f)
    if (allowed[f]) pool.push_back(f);

  const double base = mean_of(data.y);
  std::vector<double> pred(n, base), residual(n), w(n, 1.0);
  std::vector<Tree> trees;
  TrainReport report;
  report.feature_gain.assign(d, 0.0);
  for (int m = 0; m < cfg.n_rounds; ++m) {
    const auto round = static_cast<std::uint64_t>(m);
    for (std::size_t r = 0; r < n; ++r) {
      residual[r] = data.y[r] - pred[r];
      if (cfg.subsample < 1.0)
        w[r] = hash_to_unit(substream_seed(cfg.seed, round + 1, data.ids[r])) < cfg.subsample ? 1.0 : 0.0;
    }
    Rng rng = make_rng(cfg.seed, substream_seed(round, 0xC01));
    std::vector<char> mask = allowed;
    if (cfg.colsample < 1.0 && !pool.empty()) {
      auto shuffled = pool;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(cfg.colsample * static_cast<double>(pool.size()))));
      std::fill(mask.begin(), mask.end(), 0);
      for (std::size_t i = 0; i < k; ++i) mask[shuffled[i]] = 1;
    }
    trees.push_back(grow_tree(sorted, residual, w, params, mask, rng, report.feature_gain));
    for (std::size_t r = 0; r < n; ++r) pred[r] += trees.back().predict(data.x.row(r));
    report.loss.push_back(rmse(pred, data.y));
  }

  const double total = std::accumulate(report.feature_gain.begin(), report.feature_gain.end(), 0.0);
  if (total > 0.0)
    for (std::size_t f : pool)
      if (report.feature_gain[f] / total <= cfg.gain_prune_threshold) report.pruned.push_back(f);
  return {std::make_shared<GbtModel>(cfg, d, base, std::move(trees)), std::move(report)};
}

std::vector<char> initial_mask(std::span<const char> feature_mask, std::size_t d) {
  if (feature_mask.empty()) return std::vector<char>(d, 1);
  if (feature_mask.size() != d) throw ConfigError("feature mask must have one entry per column");
  return {feature_mask.begin(), feature_mask.end()};
}

}  // namespace

TrainedModel train_gbt(const Matrix& x, std::span<const double> y, const GbtConfig& cfg,
                       std::span<const std::uint64_t> row_ids, std::span<const char> feature_mask) {
  const auto start = Clock::now();
  cfg.validate();
  check_training_inputs(x, y, "gbt");
  const auto data = canonicalize(x, y, row_ids);
  auto allowed = initial_mask(feature_mask, x.cols());
  auto fit = fit_gbt_once(data, cfg, allowed);
  const auto kept = std::count(allowed.begin(), allowed.end(), 1) -
                    static_cast<std::ptrdiff_t>(fit.report.pruned.size());
  if (cfg.prune_refit && !fit.report.pruned.empty() && kept > 0) {
    for (auto f : fit.report.pruned) allowed[f] = 0;
    auto refit = fit_gbt_once(data, cfg, allowed);
    fit.model = std::move(refit.model);
    fit.report.loss = std::move(refit.report.loss);
  }
  fit.report.seconds = seconds_since(start);
  return fit;
}

TrainedModel refit_without_pruned(const Matrix& x, std::span<const double> y,
                                  const GbtConfig& cfg, const TrainReport& report,
                                  std::span<const std::uint64_t> row_ids) {
  std::vector<char> mask(x.cols(), 1);
  for (auto f : report.pruned) {
    if (f >= mask.size()) throw ConfigError("pruned column out of range");
    mask[f] = 0;
  }
  auto no_prune = cfg;
  no_prune.prune_refit = false;
  auto out = train_gbt(x, y, no_prune, row_ids, mask);
  out.report.pruned = report.pruned;
  return out;
}

// ---- multilayer perceptron ----

MlpModel::MlpModel(MlpConfig cfg, InputEncoding encoding, MlpNetwork net, double target_scale)
    : cfg_(std::move(cfg)), encoding_(std::move(encoding)), net_(std::move(net)),
      target_scale_(target_scale) {}

std::vector<double> MlpModel::predict(const Matrix& x) const {
  check_width(x.cols());
  std::vector<double> out(x.rows());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t lo = 0; lo < x.rows(); lo += kChunk) {
    const std::size_t hi = std::min(x.rows(), lo + kChunk);
    Eigen::MatrixXd enc(static_cast<Eigen::Index>(encoding_.encoded_width()),
                        static_cast<Eigen::Index>(hi - lo));
    for (std::size_t r = lo; r < hi; ++r)
      encoding_.encode_row(x.row(r), enc.col(static_cast<Eigen::Index>(r - lo)).data());
    const Eigen::RowVectorXd p = net_.forward(enc);
    for (std::size_t r = lo; r < hi; ++r) out[r] = p(static_cast<Eigen::Index>(r - lo)) * target_scale_;
  }
  return out;
}

double MlpModel::predict_one(std::span<const double> x) const {
  check_width(x.size());
  Eigen::MatrixXd enc(static_cast<Eigen::Index>(encoding_.encoded_width()), 1);
  encoding_.encode_row(x, enc.data());
  return net_.forward(enc)(0) * target_scale_;
}

nlohmann::json MlpModel::config_json() const { return cfg_; }
nlohmann::json MlpModel::body_json() const {
  return {{"encoding", encoding_.to_json()}, {"target_scale", target_scale_},
          {"network", net_.to_json()}};
}
std::vector<char> MlpModel::used_features() const { return std::vector<char>(n_features(), 1); }

TrainedModel train_mlp(const Matrix& x, std::span<const double> y, const MlpConfig& cfg,
                       std::span<const int> cardinalities) {
  const auto start = Clock::now();
  cfg.validate();
  check_training_inputs(x, y, "mlp");
  const std::size_t n = x.rows();
  auto encoding = InputEncoding::fit(x, cardinalities);
  const Eigen::MatrixXd xe = encoding.encode(x);

  const double mean = mean_of(y);
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));

  std::vector<int> sizes = {static_cast<int>(encoding.encoded_width())};
  sizes.insert(sizes.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  sizes.push_back(1);
  Rng init_rng = make_rng(cfg.seed, 0);
  TrainReport report;

  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    // Constant target: zero weights, output bias carries the value.
    MlpNetwork net(sizes, false, init_rng);
    for (auto& l : net.layers()) {
      l.weight.setZero();
      l.bias.setZero();
    }
    net.layers().back().bias(0) = mean;
    report.warnings.push_back("mlp: target has zero variance; returning a constant model");
    report.loss.assign(static_cast<std::size_t>(cfg.epochs), 0.0);
    report.seconds = seconds_since(start);
    return {std::make_shared<MlpModel>(cfg, std::move(encoding), std::move(net), 1.0),
            std::move(report)};
  }

  const double scale = sd;
  MlpNetwork net(sizes, cfg.output_activation == "relu", init_rng);
  net.layers().back().bias(0) = mean / scale;
  Eigen::RowVectorXd target(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) target(static_cast<Eigen::Index>(i)) = y[i] / scale;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < n; lo += batch) {
      const std::size_t hi = std::min(n, lo + batch);
      std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                    order.begin() + static_cast<std::ptrdiff_t>(hi));
      const Eigen::MatrixXd xb = xe(Eigen::all, idx);
      const Eigen::RowVectorXd tb = target(idx);
      net.loss_and_gradient(xb, tb, cfg.dropout_rate, &rng, grad);
      net.apply_step(grad, cfg.learning_rate);
    }
    const Eigen::RowVectorXd p = net.forward(xe);
    const double loss = std::sqrt((p - target).squaredNorm() / static_cast<double>(n)) * scale;
    if (!std::isfinite(loss))
      throw TrainingError("mlp: training diverged at epoch " + std::to_string(epoch + 1));
    report.loss.push_back(loss);
  }
  report.seconds = seconds_since(start);
  return {std::make_shared<MlpModel>(cfg, std::move(encoding), std::move(net), scale),
          std::move(report)};
}

TrainedModel train_learner(LearnerKind kind, const Matrix& x, std::span<const double> y,
                           const nlohmann::json& cfg, std::span<const int> cardinalities,
                           std::span<const std::uint64_t> row_ids) {
  switch (kind) {
    case LearnerKind::kMlp: return train_mlp(x, y, cfg.get<MlpConfig>(), cardinalities);
    case LearnerKind::kForest: return train_forest(x, y, cfg.get<ForestConfig>(), row_ids);
    case LearnerKind::kGbt: return train_gbt(x, y, cfg.get<GbtConfig>(), row_ids);
  }
  throw ConfigError("unknown learner kind");
}

// ---- persistence ----

nlohmann::json model_to_json(const Regressor& model, const std::string& feature_schema_hash) {
  return {{"schema", kModelSchemaVersion},
          {"kind", name_of(model.kind())},
          {"config", model.config_json()},
          {"feature_schema_hash", feature_schema_hash},
          {"n_features", model.n_features()},
          {"body", model.body_json()}};
}

std::shared_ptr<const Regressor> model_from_json(const nlohmann::json& doc,
                                                 const std::string& expected_schema_hash) {
  try {
    if (doc.at("schema").get<std::string>() != kModelSchemaVersion)
      throw DataError("model document: unsupported schema '" + doc.at("schema").get<std::string>() + "'");
    const auto hash = doc.at("feature_schema_hash").get<std::string>();
    if (!expected_schema_hash.empty() && hash != expected_schema_hash)
      throw DataError("model document: feature schema hash mismatch");
    const auto kind = learner_from_name(doc.at("kind").get<std::string>());
    const auto d = doc.at("n_features").get<std::size_t>();
    const auto& body = doc.at("body");
    switch (kind) {
      case LearnerKind::kForest:
        return std::make_shared<ForestModel>(doc.at("config").get<ForestConfig>(), d,
                                             trees_from_json(body.at("trees"), d));
      case LearnerKind::kGbt:
        return std::make_shared<GbtModel>(doc.at("config").get<GbtConfig>(), d,
                                          body.at("base_score").get<double>(),
                                          trees_from_json(body.at("trees"), d));
      case LearnerKind::kMlp: {
        auto enc = InputEncoding::from_json(body.at("encoding"));
        if (enc.width() != d) throw DataError("model document: encoding width mismatch");
        return std::make_shared<MlpModel>(doc.at("config").get<MlpConfig>(), std::move(enc),
                                          MlpNetwork::from_json(body.at("network")),
                                          body.at("target_scale").get<double>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model document: ") + e.what());
  }
  throw DataError("model document: unknown kind");
}

}  // namespace roadside::learn
