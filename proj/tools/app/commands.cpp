#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <numeric>

#include "roadside/core/features.hpp"
#include "roadside/core/io.hpp"
#include "roadside/core/matching.hpp"
#include "roadside/errors.hpp"
#include "roadside/interpret/shapley.hpp"
#include "roadside/util/hash.hpp"
#include "roadside/util/random.hpp"
#include "roadside/util/text.hpp"

namespace roadside::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void require_input(const fs::path& path, std::string_view stage, std::string_view what) {
  if (!fs::is_regular_file(path))
    throw IoError(std::string(stage) + ": " + std::string(what) + " not found: " + path.string());
}

struct Emitter {
  fs::path dir;
  StageOutput out;

  void write(const std::string& name, std::string_view contents) {
    write_file(dir / name, contents);
    out.files.emplace_back(name);
  }
};

struct MatchedData {
  std::vector<MatchedSample> samples;
  json inputs = json::object();
  std::string hash;
};

MatchedData load_matched(const fs::path& orrs_path, const fs::path& im_path, const QcPolicy& qc,
                         std::string_view stage) {
  require_input(orrs_path, stage, "ORRS file");
  require_input(im_path, stage, "I/M file");
  MatchedData out;
  const auto orrs = read_orrs(orrs_path);
  const auto im = read_im(im_path);
  const std::string orrs_hash = sha256_file(orrs_path);
  const std::string im_hash = sha256_file(im_path);
  out.hash = sha256_hex("orrs:" + orrs_hash + "\nim:" + im_hash);
  out.inputs = {{"orrs", {{"path", orrs_path.generic_string()}, {"sha256", orrs_hash}, {"records", orrs.size()}}},
                {"im", {{"path", im_path.generic_string()}, {"sha256", im_hash}, {"records", im.size()}}}};

  const auto qc_result = apply_qc(orrs, qc);
  auto matched = match_records(qc_result.kept, im);
  spdlog::info("{}: {} roadside records, {} dropped by QC ({:.2f}%), {} matched, {} unmatched", stage,
               orrs.size(), qc_result.dropped.size(),
               orrs.empty() ? 0.0 : 100.0 * static_cast<double>(qc_result.dropped.size()) / static_cast<double>(orrs.size()),
               matched.matched.size(), matched.unmatched.size());
  out.inputs["qc_dropped"] = qc_result.dropped.size();
  out.inputs["matched"] = matched.matched.size();
  out.samples = std::move(matched.matched);
  if (out.samples.empty()) throw DataError(std::string(stage) + ": no matched records after QC");
  return out;
}

std::shared_ptr<const ensemble::StackedModel> load_model(const fs::path& path, std::string_view stage) {
  require_input(path, stage, "model file");
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(std::string(stage) + ": model file " + path.string() + " is not valid JSON: " + e.what());
  }
  return std::make_shared<const ensemble::StackedModel>(ensemble::StackedModel::from_json(doc));
}

void log_warnings(std::string_view stage, const std::vector<std::string>& warnings) {
  if (warnings.empty()) return;
  spdlog::warn("{}: {} warnings, first: {}", stage, warnings.size(), warnings.front());
}

std::string metrics_csv(const std::vector<ensemble::ModelMetrics>& rows) {
  CsvWriter w({"pollutant", "model", "r2", "rmse", "slope", "intercept", "n"});
  for (const auto& m : rows) {
    w.cell(name_of(m.pollutant)).cell(m.model).cell(m.metrics.r2).cell(m.metrics.rmse);
    w.cell(m.metrics.slope).cell(m.metrics.intercept).cell(m.metrics.n);
    w.end_row();
  }
  return w.str();
}

// Scatter data: observed against each model's prediction.
std::string predictions_csv(const ensemble::TrainingSet& data,
                            const std::array<Matrix, 3>& base,
                            const std::array<std::vector<double>, 3>& ensemble_pred) {
  CsvWriter w({"row_id", "vin", "pollutant", "observed", "mlp", "rf", "gbt", "ensemble"});
  for (auto p : kPollutants) {
    const auto i = index_of(p);
    for (std::size_t r = 0; r < data.size(); ++r) {
      w.cell(static_cast<long long>(data.row_id[r])).cell(data.vin[r]).cell(name_of(p));
      w.cell(data.y[i][r]).cell(base[i](r, 0)).cell(base[i](r, 1)).cell(base[i](r, 2));
      w.cell(ensemble_pred[i][r]);
      w.end_row();
    }
  }
  return w.str();
}

struct ScreeningInputs {
  std::vector<MatchedSample> samples;  // inside the met window
  std::vector<ensemble::StackedPrediction> predictions;
  screen::ScreeningData data;
  json inputs;
  std::string hash;
};

ScreeningInputs prepare_screening(const PipelineConfig& cfg, const ensemble::StackedModel& model,
                                  std::string_view stage) {
  auto matched = load_matched(cfg.paths.screen_orrs, cfg.paths.screen_im, cfg.qc, stage);
  auto window = apply_met_window(matched.samples, cfg.window);
  spdlog::info("{}: {} of {} matched records inside the meteorological window ({:.2f}%)", stage,
               window.kept.size(), matched.samples.size(), 100.0 * window.kept_fraction());
  if (window.kept.empty()) throw DataError(std::string(stage) + ": no records inside the meteorological window");
  ScreeningInputs out;
  out.inputs = std::move(matched.inputs);
  out.inputs["in_window"] = window.kept.size();
  out.hash = matched.hash;
  out.samples = std::move(window.kept);
  std::vector<std::string> warnings;
  const Matrix x = build_feature_matrix(out.samples, model.encoders(), &warnings);
  log_warnings(stage, warnings);
  out.predictions = model.predict(x);
  for (auto p : kPollutants) {
    auto& pred = out.data.predicted[index_of(p)];
    auto& truth = out.data.truth[index_of(p)];
    pred.reserve(out.samples.size());
    truth.reserve(out.samples.size());
    for (std::size_t r = 0; r < out.samples.size(); ++r) {
      pred.push_back(out.predictions[r].value[p]);
      truth.push_back(out.samples[r].im.im(p));
    }
  }
  return out;
}

std::array<screen::RateCurve, 3> rate_curves(const PipelineConfig& cfg, const screen::ScreeningData& data,
                                             std::string_view stage) {
  std::array<screen::RateCurve, 3> curves;
  std::vector<std::string> warnings;
  for (auto p : kPollutants) {
    const auto i = index_of(p);
    curves[i] = screen::over_standard_rate_curve(data.predicted[i], data.truth[i], cfg.standards.of(p),
                                                 cfg.curve.n_bins, cfg.curve.basis, &warnings);
  }
  log_warnings(stage, warnings);
  return curves;
}

std::string or_absent(const std::optional<double>& v) { return v ? format_double(*v) : "absent"; }

json csv_to_json(const fs::path& path) {
  const auto table = parse_csv(read_file(path));
  json rows = json::array();
  for (const auto& row : table.rows) {
    json obj = json::object();
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const auto& cell = row[c];
      if (cell.empty())
        obj[table.header[c]] = nullptr;
      else if (const auto d = parse_double(cell))
        obj[table.header[c]] = *d;
      else
        obj[table.header[c]] = cell;
    }
    rows.push_back(std::move(obj));
  }
  return rows;
}

}  // namespace

StageOutput cmd_synth(const PipelineConfig& cfg) {
  ensure_dir(cfg.paths.output_dir);
  const auto fleet = synth::generate_fleet(cfg.fleet);
  spdlog::info("synth: {} vehicles, {} roadside records, {} inspections", fleet.truth.size(),
               fleet.orrs.size(), fleet.im.size());
  Emitter e{cfg.paths.output_dir, {}};
  e.write("orrs.jsonl", orrs_to_jsonl(fleet.orrs));
  e.write("im.csv", im_to_csv(fleet.im));
  e.write("truth.jsonl", synth::truth_to_jsonl(fleet.truth));
  return e.out;
}

StageOutput cmd_train(const PipelineConfig& cfg) {
  ensure_dir(cfg.paths.output_dir);
  const auto matched = load_matched(cfg.paths.orrs, cfg.paths.im, cfg.qc, "train");
  const auto encoders = EncoderTables::fit(matched.samples);
  std::vector<std::string> warnings;
  const auto all = ensemble::make_training_set(matched.samples, encoders, &warnings);
  log_warnings("train", warnings);

  ensemble::TrainingSet train = all, test;
  if (cfg.test_fraction > 0.0) {
    const auto split = ensemble::split_by_vehicle(all.vin, cfg.test_fraction, cfg.seed);
    train = all.subset(split.train);
    test = all.subset(split.test);
  }
  spdlog::info("train: {} training rows, {} held-out rows, {}-fold CV", train.size(), test.size(), cfg.cv_k);
  const auto plan = ensemble::make_cv_plan(train.vin, cfg.cv_k, cfg.seed);

  ensemble::StackFit fit;
  try {
    fit = ensemble::fit_stacked(train, plan, cfg.bases, encoders, cfg.stack);
  } catch (const TrainingError& err) {
    throw TrainingError(std::string("train: ") + err.what());
  }

  Emitter e{cfg.paths.output_dir, {}};
  e.out.inputs = matched.inputs;
  const fs::path model_name = "model.json";
  if (cfg.paths.model.has_parent_path()) ensure_dir(cfg.paths.model.parent_path());
  write_file(cfg.paths.model, fit.model->to_json().dump());
  if (fs::absolute(cfg.paths.model).lexically_normal() ==
      fs::absolute(cfg.paths.output_dir / model_name).lexically_normal())
    e.out.files.push_back(model_name);

  e.write("metrics_cv.csv", metrics_csv(fit.report.cv_metrics));
  for (const auto& m : fit.report.cv_metrics)
    spdlog::info("train: cv {} {:8s} r2 {:.4f} rmse {:.4f}", name_of(m.pollutant), m.model, m.metrics.r2,
                 m.metrics.rmse);

  std::array<Matrix, 3> oof_base;
  for (auto p : kPollutants) oof_base[index_of(p)] = fit.report.oof[index_of(p)].pred;
  e.write("predictions_oof.csv", predictions_csv(train, oof_base, fit.report.ensemble_oof));

  if (test.size() > 0) {
    const auto held_out = ensemble::evaluate(*fit.model, test);
    e.write("metrics_test.csv", metrics_csv(held_out));
    std::array<Matrix, 3> base;
    std::array<std::vector<double>, 3> final_pred;
    for (auto p : kPollutants) {
      base[index_of(p)] = fit.model->base_predictions(p, test.x);
      final_pred[index_of(p)] = fit.model->predict_pollutant(p, test.x);
    }
    e.write("predictions_test.csv", predictions_csv(test, base, final_pred));
  }

  json report = json::object();
  const auto& names = feature_names();
  for (auto p : kPollutants) {
    json entry = json::object();
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& tr = fit.report.base_reports[index_of(p)][b];
      json pruned = json::array();
      for (auto c : tr.pruned) pruned.push_back(c < names.size() ? std::string(names[c]) : std::to_string(c));
      entry[std::string(learn::name_of(ensemble::kBaseKinds[b]))] = {
          {"config", fit.report.chosen_configs[index_of(p)][b]},
          {"pruned_features", pruned},
          {"final_loss", tr.loss.empty() ? json(nullptr) : json(tr.loss.back())},
      };
    }
    report[std::string(name_of(p))] = entry;
  }
  e.write("training_report.json", json{{"pollutants", report},
                                       {"train_rows", train.size()},
                                       {"test_rows", test.size()},
                                       {"cv_k", cfg.cv_k}}
                                      .dump(2));
  return e.out;
}

StageOutput cmd_screen(const PipelineConfig& cfg) {
  ensure_dir(cfg.paths.output_dir);
  const auto model = load_model(cfg.paths.model, "screen");
  const auto in = prepare_screening(cfg, *model, "screen");
  const auto curves = rate_curves(cfg, in.data, "screen");

  screen::Thresholds thresholds;
  if (!cfg.paths.policy.empty()) {
    require_input(cfg.paths.policy, "screen", "policy file");
    json doc;
    try {
      doc = json::parse(read_file(cfg.paths.policy));
    } catch (const json::exception& err) {
      throw DataError("screen: policy file is not valid JSON: " + std::string(err.what()));
    }
    thresholds = screen::policy_from_json(doc);
    spdlog::info("screen: thresholds taken from {}", cfg.paths.policy.string());
  } else {
    for (auto p : kPollutants) thresholds[index_of(p)] = screen::find_thresholds(curves[index_of(p)], cfg.curve.eps);
  }
  for (auto p : kPollutants) {
    const auto& t = thresholds[index_of(p)];
    spdlog::info("screen: {} free {} re {}", name_of(p), or_absent(t.free_threshold), or_absent(t.re_threshold));
  }

  std::vector<PollutantTriple> triples;
  triples.reserve(in.predictions.size());
  for (const auto& pr : in.predictions) triples.push_back(pr.value);
  const auto cls = screen::classify_fleet(triples, thresholds);

  Emitter e{cfg.paths.output_dir, {}};
  e.out.inputs = in.inputs;
  e.out.inputs["model"] = {{"path", cfg.paths.model.generic_string()}, {"sha256", sha256_file(cfg.paths.model)}};
  e.write("rate_curves.csv", screen::rate_curves_csv(curves));
  e.write("thresholds.json", screen::policy_to_json(thresholds, cfg.standards, in.hash, cfg.hash()).dump(2));

  CsvWriter rows({"row", "vin", "plate", "timestamp", "co", "hc", "no", "class"});
  for (std::size_t r = 0; r < in.samples.size(); ++r) {
    rows.cell(r).cell(in.samples[r].im.vin).cell(in.samples[r].orrs.plate);
    rows.cell(static_cast<long long>(in.samples[r].orrs.timestamp));
    rows.cell(triples[r].co).cell(triples[r].hc).cell(triples[r].no);
    rows.cell(screen::name_of(cls.classes[r]));
    rows.end_row();
  }
  e.write("classification.csv", rows.str());

  CsvWriter summary({"class", "count", "proportion"});
  constexpr std::array<screen::ScreenClass, 3> kOrder = {screen::ScreenClass::kFreeIm, screen::ScreenClass::kRegular,
                                                        screen::ScreenClass::kReIm};
  for (std::size_t c = 0; c < 3; ++c) {
    summary.cell(screen::name_of(kOrder[c])).cell(cls.counts[c]).cell(cls.proportions[c]);
    summary.end_row();
    spdlog::info("screen: {} {} ({:.2f}%)", screen::name_of(kOrder[c]), cls.counts[c], 100.0 * cls.proportions[c]);
  }
  e.write("screening_summary.csv", summary.str());
  return e.out;
}

StageOutput cmd_robustness(const PipelineConfig& cfg) {
  ensure_dir(cfg.paths.output_dir);
  const auto model = load_model(cfg.paths.model, "robustness");
  const auto in = prepare_screening(cfg, *model, "robustness");
  const auto& r = cfg.robustness;
  if (r.sizes.back() > in.data.size())
    throw ConfigError("robustness.sizes: largest size " + std::to_string(r.sizes.back()) + " exceeds the " +
                      std::to_string(in.data.size()) + " records available");

  const auto report = screen::monte_carlo_thresholds(in.data, cfg.standards, r.monte_carlo);
  for (auto p : kPollutants) {
    const auto& pr = report.pollutants[index_of(p)];
    spdlog::info("robustness: {} RE% free {} re {}", name_of(p), or_absent(pr.free.re_percent),
                 or_absent(pr.re.re_percent));
  }
  const auto sweep = screen::sample_size_sweep(in.data, cfg.standards, r.sizes, r.sweep_t, cfg.seed, cfg.curve,
                                               r.knee_fraction);

  Emitter e{cfg.paths.output_dir, {}};
  e.out.inputs = in.inputs;
  e.out.inputs["model"] = {{"path", cfg.paths.model.generic_string()}, {"sha256", sha256_file(cfg.paths.model)}};
  e.write("robustness_summary.csv", report.summary_csv());
  e.write("robustness_repetitions.csv", report.repetitions_csv());
  e.write("sweep.csv", sweep.table_csv());
  CsvWriter knees({"pollutant", "threshold", "knee_n"});
  for (auto p : kPollutants) {
    const auto i = index_of(p);
    for (const auto& [label, knee] : {std::pair{"free", sweep.free_knee[i]}, std::pair{"re", sweep.re_knee[i]}}) {
      knees.cell(name_of(p)).cell(label);
      if (knee)
        knees.cell(*knee);
      else
        knees.blank();
      knees.end_row();
    }
  }
  e.write("sweep_knees.csv", knees.str());
  return e.out;
}

StageOutput cmd_explain(const PipelineConfig& cfg) {
  ensure_dir(cfg.paths.output_dir);
  const auto model = load_model(cfg.paths.model, "explain");
  const auto matched = load_matched(cfg.paths.orrs, cfg.paths.im, cfg.qc, "explain");
  std::vector<std::string> warnings;
  const Matrix x = build_feature_matrix(matched.samples, model->encoders(), &warnings);
  log_warnings("explain", warnings);

  std::vector<std::size_t> ids = cfg.explain.rows;
  if (ids.empty() && cfg.explain.samples > 0) {
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng = make_rng(cfg.seed, 0xE8);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(cfg.explain.samples, all.size()));
    std::sort(all.begin(), all.end());
    ids = std::move(all);
  }
  if (ids.empty()) throw DataError("explain: sample selection is empty");
  for (auto id : ids)
    if (id >= x.rows())
      throw DataError("explain: row " + std::to_string(id) + " is out of range (" + std::to_string(x.rows()) +
                      " matched records)");

  const Matrix samples = x.select_rows(ids);
  const Matrix background = interpret::select_background(x, cfg.explain.background, cfg.seed);
  std::vector<std::string> names(feature_names().begin(), feature_names().end());
  spdlog::info("explain: {} samples, background {}, {} orderings each", ids.size(), background.rows(),
               cfg.explain.n_permutations);

  Emitter e{cfg.paths.output_dir, {}};
  e.out.inputs = matched.inputs;
  e.out.inputs["model"] = {{"path", cfg.paths.model.generic_string()}, {"sha256", sha256_file(cfg.paths.model)}};
  CsvWriter top({"pollutant", "rank", "feature", "ms", "mas"});
  for (auto p : kPollutants) {
    const interpret::BatchModel fn = [&model, p](const Matrix& m) { return model->predict_pollutant(p, m); };
    const auto rep = interpret::explain(fn, samples, ids, background, cfg.explain.n_permutations, cfg.seed, names);
    const std::string tag(name_of(p));
    e.write("shapley_values_" + tag + ".csv", rep.values_csv());
    e.write("shapley_summary_" + tag + ".csv", rep.summary_csv());
    const std::size_t k = std::min(cfg.explain.top_k, rep.summary.ranking.size());
    for (std::size_t i = 0; i < k; ++i) {
      const auto f = rep.summary.ranking[i];
      top.cell(tag).cell(i + 1).cell(names[f]).cell(rep.summary.ms[f]).cell(rep.summary.mas[f]);
      top.end_row();
    }
    spdlog::info("explain: {} baseline {:.4f}, top factor {}", tag, rep.baseline, names[rep.summary.ranking.front()]);
  }
  e.write("shapley_top.csv", top.str());
  return e.out;
}

StageOutput cmd_report(const PipelineConfig& cfg) {
  ensure_dir(cfg.paths.output_dir);
  const auto model = load_model(cfg.paths.model, "report");
  const auto matched = load_matched(cfg.paths.orrs, cfg.paths.im, cfg.qc, "report");
  const auto all = ensemble::make_training_set(matched.samples, model->encoders());
  ensemble::TrainingSet eval = all;
  std::string scope = "all";
  if (cfg.test_fraction > 0.0) {
    const auto split = ensemble::split_by_vehicle(all.vin, cfg.test_fraction, cfg.seed);
    if (!split.test.empty()) {
      eval = all.subset(split.test);
      scope = "held_out";
    }
  }

  // Per-bin view: equal-count bins of the observed I/M value.
  CsvWriter bins({"pollutant", "bin", "lower", "upper", "model", "n", "r2", "rmse", "slope", "intercept"});
  for (auto p : kPollutants) {
    const auto& obs = eval.target(p);
    const Matrix base = model->base_predictions(p, eval.x);
    const auto final_pred = model->predict_pollutant(p, eval.x);
    std::vector<std::size_t> order(obs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return obs[a] < obs[b]; });
    const std::size_t n_bins = std::min(cfg.report_bins, order.size());
    for (std::size_t b = 0; b < n_bins; ++b) {
      const std::size_t lo = b * order.size() / n_bins, hi = (b + 1) * order.size() / n_bins;
      std::vector<double> o, preds[4];
      for (std::size_t k = lo; k < hi; ++k) {
        const auto r = order[k];
        o.push_back(obs[r]);
        for (std::size_t m = 0; m < 3; ++m) preds[m].push_back(base(r, m));
        preds[3].push_back(final_pred[r]);
      }
      for (std::size_t m = 0; m < 4; ++m) {
        bins.cell(name_of(p)).cell(b).cell(o.front()).cell(o.back());
        bins.cell(m < 3 ? learn::name_of(ensemble::kBaseKinds[m]) : std::string_view("ensemble")).cell(o.size());
        try {
          const auto mt = ensemble::compute_metrics(preds[m], o);
          bins.cell(mt.r2).cell(mt.rmse).cell(mt.slope).cell(mt.intercept);
        } catch (const DataError&) {
          bins.blank().blank().blank().blank();
        }
        bins.end_row();
      }
    }
  }

  Emitter e{cfg.paths.output_dir, {}};
  e.out.inputs = matched.inputs;
  e.write("metrics_by_bin.csv", bins.str());

  json summary = {{"config_hash", cfg.hash()}, {"dataset_hash", matched.hash}, {"evaluation_scope", scope},
                  {"evaluation_rows", eval.size()}};
  summary["metrics_evaluation"] = json::array();
  for (const auto& m : ensemble::evaluate(*model, eval))
    summary["metrics_evaluation"].push_back({{"pollutant", name_of(m.pollutant)},
                                             {"model", m.model},
                                             {"r2", m.metrics.r2},
                                             {"rmse", m.metrics.rmse},
                                             {"slope", m.metrics.slope},
                                             {"intercept", m.metrics.intercept},
                                             {"n", m.metrics.n}});
  const fs::path& dir = cfg.paths.output_dir;
  for (const char* name : {"metrics_cv", "screening_summary", "robustness_summary", "sweep_knees", "shapley_top"}) {
    const fs::path f = dir / (std::string(name) + ".csv");
    if (fs::is_regular_file(f)) summary[name] = csv_to_json(f);
  }
  if (fs::is_regular_file(dir / "thresholds.json")) summary["thresholds"] = json::parse(read_file(dir / "thresholds.json"));
  e.write("summary.json", summary.dump(2));
  return e.out;
}

void update_manifest(const PipelineConfig& cfg, std::string_view stage, double seconds, const StageOutput& out) {
  const fs::path path = cfg.paths.output_dir / kManifestName;
  json manifest = json::object();
  if (fs::is_regular_file(path)) {
    try {
      manifest = json::parse(read_file(path));
    } catch (const json::exception&) {
      spdlog::warn("manifest: existing {} is unreadable, starting a new one", path.string());
      manifest = json::object();
    }
  }
  manifest["schema"] = "roadside.manifest/1";
  manifest["config_hash"] = cfg.hash();
  manifest["components"] = {{"roadside", kVersion},
                            {"feature_schema", kFeatureSchemaVersion},
                            {"feature_schema_hash", feature_schema_hash()},
                            {"stacked_model", ensemble::kStackedSchemaVersion},
                            {"learner_model", learn::kModelSchemaVersion}};
  json outputs = json::array();
  for (const auto& f : out.files) outputs.push_back(f.generic_string());
  manifest["stages"][std::string(stage)] = {
      {"seconds", seconds}, {"config_hash", cfg.hash()}, {"inputs", out.inputs}, {"outputs", outputs}};

  json files = json::object();
  std::error_code ec;
  for (fs::recursive_directory_iterator it(cfg.paths.output_dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const auto rel = fs::relative(it->path(), cfg.paths.output_dir).generic_string();
    if (rel == kManifestName) continue;
    files[rel] = {{"sha256", sha256_file(it->path())}, {"bytes", it->file_size()}};
  }
  if (ec) throw IoError("manifest: cannot scan " + cfg.paths.output_dir.string() + ": " + ec.message());
  manifest["files"] = files;
  write_file(path, manifest.dump(2));
}

void run_stage(std::string_view stage, const PipelineConfig& cfg) {
  using Fn = StageOutput (*)(const PipelineConfig&);
  static const std::array<std::pair<std::string_view, Fn>, 6> kStages = {{{"synth", cmd_synth},
                                                                         {"train", cmd_train},
                                                                         {"screen", cmd_screen},
                                                                         {"robustness", cmd_robustness},
                                                                         {"explain", cmd_explain},
                                                                         {"report", cmd_report}}};
  const auto it = std::find_if(kStages.begin(), kStages.end(), [&](const auto& s) { return s.first == stage; });
  if (it == kStages.end()) throw ConfigError("unknown command '" + std::string(stage) + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const StageOutput out = it->second(cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  update_manifest(cfg, stage, seconds, out);
  spdlog::info("{}: done in {:.1f}s, {} files written", stage, seconds, out.files.size());
}

}  // namespace roadside::app
