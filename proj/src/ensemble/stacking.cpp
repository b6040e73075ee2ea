#include "roadside/ensemble/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "roadside/errors.hpp"
#include "roadside/util/parallel.hpp"
#include "roadside/util/random.hpp"

namespace roadside::ensemble {

using learn::LearnerKind;

TrainingSet TrainingSet::subset(std::span<const std::size_t> rows) const {
  TrainingSet out;
  out.x = x.select_rows(rows);
  for (std::size_t p = 0; p < 3; ++p) out.y[p] = select(std::span<const double>(y[p]), rows);
  out.vin = select(std::span<const std::string>(vin), rows);
  out.row_id = select(std::span<const std::uint64_t>(row_id), rows);
  out.cardinalities = cardinalities;
  return out;
}

TrainingSet make_training_set(std::span<const MatchedSample> samples, const EncoderTables& encoders,
                              std::vector<std::string>* warnings) {
  TrainingSet out;
  out.x = build_feature_matrix(samples, encoders, warnings);
  if (out.x.rows() == 0) out.x = Matrix(0, kFeatureCount);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (auto p : kPollutants) out.y[index_of(p)].push_back(samples[i].im.im(p));
    out.vin.push_back(samples[i].im.vin);
    out.row_id.push_back(i);
  }
  out.cardinalities = encoders.cardinalities();
  return out;
}

std::size_t CvPlan::fold_of(const std::string& vin) const {
  const auto it = std::lower_bound(vins.begin(), vins.end(), vin);
  if (it == vins.end() || *it != vin) throw DataError("cv plan: unknown VIN " + vin);
  return folds[static_cast<std::size_t>(it - vins.begin())];
}

std::vector<std::size_t> CvPlan::row_folds(std::span<const std::string> row_vins) const {
  std::vector<std::size_t> out;
  out.reserve(row_vins.size());
  for (const auto& v : row_vins) out.push_back(fold_of(v));
  return out;
}

CvPlan make_cv_plan(std::span<const std::string> vins, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cv.k must be >= 2");
  CvPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.vins.assign(vins.begin(), vins.end());
  std::sort(plan.vins.begin(), plan.vins.end());
  plan.vins.erase(std::unique(plan.vins.begin(), plan.vins.end()), plan.vins.end());
  if (plan.vins.size() < k)
    throw ConfigError("cv: " + std::to_string(plan.vins.size()) + " distinct vehicles for " +
                      std::to_string(k) + " folds");
  std::vector<std::size_t> order(plan.vins.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0xF01D);
  std::shuffle(order.begin(), order.end(), rng);
  plan.folds.resize(plan.vins.size());
  for (std::size_t i = 0; i < order.size(); ++i) plan.folds[order[i]] = i % k;
  return plan;
}

TrainTestSplit split_by_vehicle(std::span<const std::string> vins, double test_fraction,
                                std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in [0, 1)");
  std::vector<std::string> unique(vins.begin(), vins.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  Rng rng = make_rng(seed, 0x7E57);
  std::shuffle(unique.begin(), unique.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(unique.size())));
  std::vector<std::string> test_vins(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(test_vins.begin(), test_vins.end());
  TrainTestSplit out;
  for (std::size_t i = 0; i < vins.size(); ++i)
    (std::binary_search(test_vins.begin(), test_vins.end(), vins[i]) ? out.test : out.train).push_back(i);
  return out;
}

const LearnerSpec& BaseSpecs::of(LearnerKind kind) const {
  switch (kind) {
    case LearnerKind::kMlp: return mlp;
    case LearnerKind::kForest: return rf;
    case LearnerKind::kGbt: return gbt;
  }
  return gbt;
}

StackOptions::StackOptions() {
  // Shallow and slow: three inputs, heavy-tailed targets.
  meta.n_rounds = 200;
  meta.max_depth = 2;
  meta.min_child_weight = 30.0;
  meta.subsample = 1.0;
  meta.colsample = 1.0;
  meta.learning_rate = 0.05;
  meta.lambda_l2 = 1.0;
  meta.prune_refit = false;
}

namespace {

Matrix with_disabled(const Matrix& x, const std::vector<std::size_t>& disabled) {
  if (disabled.empty()) return x;
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (auto c : disabled) out(r, c) = 0.0;
  return out;
}

Matrix stack_inputs(const Matrix& base, const Matrix& x, bool passthrough) {
  if (!passthrough) return base;
  Matrix out(base.rows(), base.cols() + x.cols());
  for (std::size_t r = 0; r < base.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(base.row(r).begin(), base.row(r).end(), dst.begin());
    std::copy(x.row(r).begin(), x.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(base.cols()));
  }
  return out;
}

std::vector<double> clamp_all(std::vector<double> v, bool clamp) {
  if (clamp)
    for (auto& x : v) x = std::max(0.0, x);
  return v;
}

std::vector<std::size_t> rows_where(const std::vector<std::size_t>& fold, std::size_t f, bool equal) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == f) == equal) out.push_back(i);
  return out;
}

}  // namespace

OofPredictions generate_oof_predictions(const TrainingSet& data, const CvPlan& plan,
                                        Pollutant pollutant,
                                        const std::array<nlohmann::json, 3>& base_configs,
                                        const StackOptions& options) {
  const Matrix x = with_disabled(data.x, options.disabled_features);
  OofPredictions out;
  out.fold = plan.row_folds(data.vin);
  out.pred = Matrix(data.size(), 3, std::nan(""));
  out.fold_training_vins.resize(plan.k);
  const auto& y = data.target(pollutant);

  std::vector<std::vector<std::size_t>> train_rows(plan.k), test_rows(plan.k);
  for (std::size_t f = 0; f < plan.k; ++f) {
    train_rows[f] = rows_where(out.fold, f, false);
    test_rows[f] = rows_where(out.fold, f, true);
    auto& v = out.fold_training_vins[f];
    for (auto r : train_rows[f]) v.push_back(data.vin[r]);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::vector<std::string> errors(plan.k * 3);
  parallel_for(plan.k * 3, [&](std::size_t job) {
    const std::size_t f = job / 3, b = job % 3;
    if (test_rows[f].empty()) return;
    try {
      const auto& tr = train_rows[f];
      const auto fit = learn::train_learner(
          kBaseKinds[b], x.select_rows(tr), select(std::span<const double>(y), std::span<const std::size_t>(tr)),
          base_configs[b], data.cardinalities,
          select(std::span<const std::uint64_t>(data.row_id), std::span<const std::size_t>(tr)));
      const auto pred = fit.model->predict(x.select_rows(test_rows[f]));
      for (std::size_t i = 0; i < pred.size(); ++i) out.pred(test_rows[f][i], b) = pred[i];
    } catch (const std::exception& e) {
      errors[job] = e.what();
    }
  });
  for (std::size_t job = 0; job < errors.size(); ++job)
    if (!errors[job].empty())
      throw TrainingError("out-of-fold training failed (pollutant " + std::string(name_of(pollutant)) +
                          ", fold " + std::to_string(job / 3) + ", learner " +
                          std::string(learn::name_of(kBaseKinds[job % 3])) + "): " + errors[job]);
  return out;
}

StackedModel::StackedModel(std::array<PollutantStack, 3> stacks, EncoderTables encoders,
                           StackOptions options, nlohmann::json metadata)
    : stacks_(std::move(stacks)), encoders_(std::move(encoders)), options_(std::move(options)),
      metadata_(std::move(metadata)) {}

std::size_t StackedModel::meta_arity() const { return 3 + (options_.passthrough ? kFeatureCount : 0); }

Matrix StackedModel::prepare(const Matrix& x) const {
  if (x.cols() != kFeatureCount)
    throw ConfigError("stacked model expects " + std::to_string(kFeatureCount) + " feature columns, got " +
                      std::to_string(x.cols()));
  return with_disabled(x, options_.disabled_features);
}

Matrix StackedModel::base_predictions(Pollutant p, const Matrix& x) const {
  const Matrix xp = prepare(x);
  Matrix out(x.rows(), 3);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto pred = stacks_[index_of(p)].bases[b]->predict(xp);
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, b) = pred[r];
  }
  return out;
}

std::vector<double> StackedModel::predict_pollutant(Pollutant p, const Matrix& x) const {
  const Matrix base = base_predictions(p, x);
  const auto raw = stacks_[index_of(p)].meta->predict(stack_inputs(base, prepare(x), options_.passthrough));
  return clamp_all(raw, options_.clamp_negative);
}

std::vector<StackedPrediction> StackedModel::predict(const Matrix& x) const {
  std::vector<StackedPrediction> out(x.rows());
  const Matrix xp = prepare(x);
  for (auto p : kPollutants) {
    const Matrix base = base_predictions(p, x);
    const auto raw = stacks_[index_of(p)].meta->predict(stack_inputs(base, xp, options_.passthrough));
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const bool neg = options_.clamp_negative && raw[r] < 0.0;
      out[r].value[p] = neg ? 0.0 : raw[r];
      out[r].clamped[index_of(p)] = neg;
    }
  }
  return out;
}

StackedPrediction StackedModel::predict(const FeatureVector& x) const {
  Matrix m(1, kFeatureCount);
  std::copy(x.begin(), x.end(), m.row(0).begin());
  return predict(m)[0];
}

nlohmann::json StackedModel::to_json() const {
  nlohmann::json models = nlohmann::json::object();
  nlohmann::json composition = nlohmann::json::array();
  for (auto p : kPollutants) {
    const auto& s = stacks_[index_of(p)];
    nlohmann::json entry = nlohmann::json::object();
    for (std::size_t b = 0; b < 3; ++b)
      entry[std::string(learn::name_of(kBaseKinds[b]))] = learn::model_to_json(*s.bases[b], feature_schema_hash());
    entry["meta"] = learn::model_to_json(*s.meta, "");
    models[std::string(name_of(p))] = std::move(entry);
    composition.push_back({{"pollutant", name_of(p)},
                           {"bases", {"mlp", "rf", "gbt"}},
                           {"meta", "gbt"},
                           {"meta_inputs", meta_arity()}});
  }
  return {{"schema", kStackedSchemaVersion},
          {"feature_schema_version", kFeatureSchemaVersion},
          {"feature_schema_hash", feature_schema_hash()},
          {"encoders", encoders_.to_json()},
          {"options",
           {{"passthrough", options_.passthrough},
            {"clamp_negative", options_.clamp_negative},
            {"disabled_features", options_.disabled_features},
            {"meta", options_.meta}}},
          {"composition", composition},
          {"metadata", metadata_},
          {"models", models}};
}

StackedModel StackedModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kStackedSchemaVersion)
      throw DataError("stacked model: unsupported schema");
    if (doc.at("feature_schema_hash").get<std::string>() != feature_schema_hash())
      throw DataError("stacked model: feature schema hash does not match this build");
    StackOptions options;
    const auto& o = doc.at("options");
    options.passthrough = o.at("passthrough").get<bool>();
    options.clamp_negative = o.at("clamp_negative").get<bool>();
    options.disabled_features = o.at("disabled_features").get<std::vector<std::size_t>>();
    options.meta = o.at("meta").get<learn::GbtConfig>();
    std::array<PollutantStack, 3> stacks;
    for (auto p : kPollutants) {
      const auto& entry = doc.at("models").at(std::string(name_of(p)));
      auto& s = stacks[index_of(p)];
      for (std::size_t b = 0; b < 3; ++b) {
        s.bases[b] = learn::model_from_json(entry.at(std::string(learn::name_of(kBaseKinds[b]))),
                                            feature_schema_hash());
        if (s.bases[b]->kind() != kBaseKinds[b] || s.bases[b]->n_features() != kFeatureCount)
          throw DataError("stacked model: base learner layout mismatch");
      }
      s.meta = learn::model_from_json(entry.at("meta"));
    }
    StackedModel model(std::move(stacks), EncoderTables::from_json(doc.at("encoders")), std::move(options),
                       doc.at("metadata"));
    for (auto p : kPollutants)
      if (model.stack(p).meta->n_features() != model.meta_arity())
        throw DataError("stacked model: meta-learner arity mismatch");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("stacked model: ") + e.what());
  }
}

StackFit fit_stacked(const TrainingSet& data, const CvPlan& plan, const BaseSpecs& bases,
                     const EncoderTables& encoders, const StackOptions& options) {
  if (data.size() < 2) throw TrainingError("stacking: training set is empty");
  for (auto c : options.disabled_features)
    if (c >= kFeatureCount) throw ConfigError("features.disabled: column out of range");
  const Matrix x = with_disabled(data.x, options.disabled_features);
  StackFit fit;
  auto& report = fit.report;
  std::array<PollutantStack, 3> stacks;

  for (auto p : kPollutants) {
    const auto pi = index_of(p);
    const auto& y = data.target(p);
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& spec = bases.of(kBaseKinds[b]);
      if (!spec.grid) {
        report.chosen_configs[pi][b] = spec.config;
        continue;
      }
      auto grid = *spec.grid;
      for (const auto& [k, v] : spec.config.items())
        if (!grid.base.contains(k)) grid.base[k] = v;
      report.chosen_configs[pi][b] =
          learn::grid_search(grid, learn::make_trainer(kBaseKinds[b], data.cardinalities), x, y, plan.k,
                             plan.seed, data.vin)
              .best;
    }

    auto oof = generate_oof_predictions(data, plan, p, report.chosen_configs[pi], options);
    const Matrix meta_x = stack_inputs(oof.pred, x, options.passthrough);

    // Second stage: the meta-learner is cross-validated on the same folds.
    auto& ens = report.ensemble_oof[pi];
    ens.assign(data.size(), std::nan(""));
    std::vector<std::string> errors(plan.k);
    parallel_for(plan.k, [&](std::size_t f) {
      const auto tr = rows_where(oof.fold, f, false);
      const auto te = rows_where(oof.fold, f, true);
      if (te.empty()) return;
      try {
        const auto m = learn::train_gbt(meta_x.select_rows(tr), select(std::span<const double>(y), std::span<const std::size_t>(tr)),
                                        options.meta,
                                        select(std::span<const std::uint64_t>(data.row_id), std::span<const std::size_t>(tr)))
                           .model;
        const auto pred = clamp_all(m->predict(meta_x.select_rows(te)), options.clamp_negative);
        for (std::size_t i = 0; i < te.size(); ++i) ens[te[i]] = pred[i];
      } catch (const std::exception& e) {
        errors[f] = e.what();
      }
    });
    for (std::size_t f = 0; f < plan.k; ++f)
      if (!errors[f].empty())
        throw TrainingError("meta-learner failed (pollutant " + std::string(name_of(p)) + ", fold " +
                            std::to_string(f) + "): " + errors[f]);

    auto& stack = stacks[pi];
    stack.meta = learn::train_gbt(meta_x, y, options.meta, data.row_id).model;
    std::array<std::string, 3> refit_errors;
    parallel_for(3, [&](std::size_t b) {
      try {
        auto r = learn::train_learner(kBaseKinds[b], x, y, report.chosen_configs[pi][b], data.cardinalities,
                                      data.row_id);
        stack.bases[b] = std::move(r.model);
        report.base_reports[pi][b] = std::move(r.report);
      } catch (const std::exception& e) {
        refit_errors[b] = e.what();
      }
    });
    for (std::size_t b = 0; b < 3; ++b)
      if (!refit_errors[b].empty())
        throw TrainingError("refit failed (pollutant " + std::string(name_of(p)) + ", learner " +
                            std::string(learn::name_of(kBaseKinds[b])) + "): " + refit_errors[b]);

    for (std::size_t b = 0; b < 3; ++b)
      report.cv_metrics.push_back({p, std::string(learn::name_of(kBaseKinds[b])),
                                   compute_metrics(oof.pred.column(b), y)});
    report.cv_metrics.push_back({p, "ensemble", compute_metrics(ens, y)});
    report.oof[pi] = std::move(oof);
  }

  nlohmann::json metadata = {{"n_train_rows", data.size()}, {"cv_k", plan.k}, {"cv_seed", plan.seed}};
  for (auto p : kPollutants)
    for (std::size_t b = 0; b < 3; ++b)
      metadata["configs"][std::string(name_of(p))][std::string(learn::name_of(kBaseKinds[b]))] =
          report.chosen_configs[index_of(p)][b];
  fit.model = std::make_shared<StackedModel>(std::move(stacks), encoders, options, std::move(metadata));
  return fit;
}

std::vector<ModelMetrics> evaluate(const StackedModel& model, const TrainingSet& data) {
  std::vector<ModelMetrics> out;
  for (auto p : kPollutants) {
    const auto& y = data.target(p);
    const Matrix base = model.base_predictions(p, data.x);
    for (std::size_t b = 0; b < 3; ++b)
      out.push_back({p, std::string(learn::name_of(kBaseKinds[b])), compute_metrics(base.column(b), y)});
    out.push_back({p, "ensemble", compute_metrics(model.predict_pollutant(p, data.x), y)});
  }
  return out;
}

}  // namespace roadside::ensemble
