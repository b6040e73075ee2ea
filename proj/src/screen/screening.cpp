#include "roadside/screen/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "roadside/errors.hpp"
#include "roadside/util/parallel.hpp"
#include "roadside/util/random.hpp"
#include "roadside/util/text.hpp"

namespace roadside::screen {

namespace {


std::vector<double> pick(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

std::vector<std::size_t> draw_stratified(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                         std::size_t k_first, std::size_t k_second, Rng& rng) {
  if (k_first > first.size() || k_second > second.size())
    throw DataError("resample: stratum smaller than its requested share");
  std::vector<std::size_t> rows;
  rows.reserve(k_first + k_second);
  // Partial Fisher-Yates on a private copy of each pool.
  auto draw = [&](std::span<const std::size_t> src, std::size_t k) {
    std::vector<std::size_t> pool(src.begin(), src.end());
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> u(i, pool.size() - 1);
      std::swap(pool[i], pool[u(rng)]);
      rows.push_back(pool[i]);
    }
  };
  draw(first, k_first);
  draw(second, k_second);
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<std::size_t> draw_stratified(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                         std::size_t k, Rng& rng) {
  std::vector<std::size_t> all(first.begin(), first.end());
  all.insert(all.end(), second.begin(), second.end());
  std::sort(all.begin(), all.end());
  return draw_stratified(all, {}, k, 0, rng);
}

void StandardSet::validate() const {
  for (auto p : kPollutants)
    if (!(of(p) > 0.0) || !std::isfinite(of(p)))
      throw ConfigError("standards." + std::string(roadside::name_of(p)) + " must be a positive number");
}

std::size_t RateCurve::total() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

void RateCurve::validate() const {
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& b = bins[i];
    if (!(b.lower <= b.upper)) throw ConfigError("rate curve: bin " + std::to_string(i) + " has lower > upper");
    if (!(b.rate >= 0.0 && b.rate <= 1.0))
      throw ConfigError("rate curve: bin " + std::to_string(i) + " rate outside [0, 1]");
    if (b.n_over > b.count) throw ConfigError("rate curve: bin " + std::to_string(i) + " n_over > count");
    if (i > 0 && bins[i - 1].upper != b.lower)
      throw ConfigError("rate curve: bins " + std::to_string(i - 1) + " and " + std::to_string(i) +
                        " do not share an edge");
  }
}

RateCurve over_standard_rate_curve(std::span<const double> predicted, std::span<const double> truth,
                                   double standard, std::size_t n_bins, BinBasis basis,
                                   std::vector<std::string>* warnings) {
  if (predicted.size() != truth.size()) throw ConfigError("rate curve: predicted and truth lengths differ");
  if (predicted.empty()) throw ConfigError("rate curve: no values");
  if (n_bins < 2) throw ConfigError("rate curve: n_bins must be >= 2");
  const auto values = basis == BinBasis::kPredicted ? predicted : truth;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]) || !std::isfinite(truth[i]))
      throw DataError("rate curve: non-finite value at index " + std::to_string(i));

  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  });
  auto v = [&](std::size_t rank) { return values[order[rank]]; };

  std::vector<std::size_t> cuts = {0};
  for (std::size_t b = 1; b < n_bins; ++b) {
    std::size_t c = b * n / n_bins;
    while (c > 0 && c < n && v(c - 1) == v(c)) ++c;
    if (c > cuts.back() && c < n) cuts.push_back(c);
  }
  cuts.push_back(n);

  RateCurve curve;
  if (v(0) == v(n - 1)) {
    curve.degenerate = true;
    if (warnings) warnings->push_back("rate curve: all binned values are identical; single degenerate bin");
    cuts = {0, n};
  }
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    RateBin bin;
    bin.lower = k == 0 ? v(0) : curve.bins.back().upper;
    bin.upper = cuts[k + 1] == n ? v(n - 1) : 0.5 * (v(cuts[k + 1] - 1) + v(cuts[k + 1]));
    for (std::size_t r = cuts[k]; r < cuts[k + 1]; ++r)
      if (truth[order[r]] > standard) ++bin.n_over;
    bin.count = cuts[k + 1] - cuts[k];
    bin.rate = static_cast<double>(bin.n_over) / static_cast<double>(bin.count);
    curve.bins.push_back(bin);
  }
  return curve;
}

ThresholdPair find_thresholds(const RateCurve& curve, double eps) {
  if (!(eps >= 0.0 && eps < 0.5)) throw ConfigError("screening.eps must lie in [0, 0.5)");
  ThresholdPair out;
  if (curve.degenerate || curve.bins.empty()) return out;
  const auto& bins = curve.bins;
  std::size_t prefix = 0;
  while (prefix < bins.size() && bins[prefix].rate <= eps) ++prefix;
  std::size_t suffix = 0;
  while (suffix < bins.size() && bins[bins.size() - 1 - suffix].rate >= 1.0 - eps) ++suffix;
  if (prefix > 0) out.free_threshold = bins[prefix - 1].upper;
  if (suffix > 0) out.re_threshold = bins[bins.size() - suffix].lower;
  if (out.free_threshold && out.re_threshold && *out.free_threshold > *out.re_threshold)
    throw std::logic_error("find_thresholds: free threshold above re threshold");
  return out;
}

std::string_view name_of(ScreenClass c) {
  switch (c) {
    case ScreenClass::kFreeIm: return "free_im";
    case ScreenClass::kRegular: return "regular";
    case ScreenClass::kReIm: return "re_im";
  }
  return "?";
}

ScreenClass classify(const PollutantTriple& prediction, const Thresholds& thresholds) {
  bool any_re = false, all_free = true;
  for (auto p : kPollutants) {
    const auto& t = thresholds[index_of(p)];
    if (t.re_threshold && prediction[p] > *t.re_threshold) any_re = true;
    if (!t.free_threshold || !(prediction[p] < *t.free_threshold)) all_free = false;
  }
  if (any_re) return ScreenClass::kReIm;
  return all_free ? ScreenClass::kFreeIm : ScreenClass::kRegular;
}

Classification classify_fleet(std::span<const PollutantTriple> predictions, const Thresholds& thresholds) {
  for (const auto& t : thresholds)
    if (t.free_threshold && t.re_threshold && *t.free_threshold > *t.re_threshold)
      throw ConfigError("thresholds: free threshold above re threshold");
  Classification out;
  out.classes.reserve(predictions.size());
  for (const auto& p : predictions) {
    const auto c = classify(p, thresholds);
    out.classes.push_back(c);
    ++out.counts[static_cast<std::size_t>(c)];
  }
  if (!predictions.empty())
    for (std::size_t i = 0; i < 3; ++i)
      out.proportions[i] = static_cast<double>(out.counts[i]) / static_cast<double>(predictions.size());
  return out;
}

void ScreeningData::validate() const {
  const auto n = predicted[0].size();
  for (std::size_t p = 0; p < 3; ++p)
    if (predicted[p].size() != n || truth[p].size() != n)
      throw DataError("screening data: column lengths differ");
  if (n == 0) throw DataError("screening data: no records");
}

void MonteCarloConfig::validate(std::size_t dataset_size) const {
  if (t < 1) throw ConfigError("robustness.t must be >= 1");
  if (n < 1 || n > dataset_size)
    throw ConfigError("robustness.n = " + std::to_string(n) + " must lie in [1, " + std::to_string(dataset_size) +
                      "]");
}

ThresholdError threshold_error(std::optional<double> reference,
                               std::span<const std::optional<double>> resampled) {
  ThresholdError out;
  out.reference = reference;
  double sum = 0.0;
  for (const auto& r : resampled) {
    if (r) {
      sum += *r;
      ++out.n_present;
    } else {
      ++out.n_absent;
    }
  }
  if (out.n_present > 0) out.mean = sum / static_cast<double>(out.n_present);
  if (reference && out.mean) {
    out.ae = std::abs(*out.mean - *reference);
    if (*reference != 0.0) out.re_percent = *out.ae / std::abs(*reference) * 100.0;
  }
  return out;
}

RobustnessReport monte_carlo_thresholds(const ScreeningData& data, const StandardSet& standards,
                                        const MonteCarloConfig& cfg) {
  data.validate();
  standards.validate();
  cfg.validate(data.size());
  const std::size_t total = data.size();
  RobustnessReport report;
  report.config = cfg;

  for (auto p : kPollutants) {
    const auto pi = index_of(p);
    const auto& pred = data.predicted[pi];
    const auto& truth = data.truth[pi];
    const double standard = standards.of(p);
    auto& out = report.pollutants[pi];
    out.reference = find_thresholds(
        over_standard_rate_curve(pred, truth, standard, cfg.curve.n_bins, cfg.curve.basis), cfg.curve.eps);

    std::vector<std::size_t> over, compliant;
    for (std::size_t i = 0; i < total; ++i) (truth[i] > standard ? over : compliant).push_back(i);
    out.over_ratio = static_cast<double>(over.size()) / static_cast<double>(total);
    std::size_t n_over = 0;
    if (cfg.stratified) {
      n_over = static_cast<std::size_t>(std::llround(out.over_ratio * static_cast<double>(cfg.n)));
      const std::string pname(roadside::name_of(p));
      if (n_over > over.size())
        throw DataError("robustness: stratum over-standard (" + pname + ") has " + std::to_string(over.size()) +
                        " records, needs " + std::to_string(n_over));
      if (cfg.n - n_over > compliant.size())
        throw DataError("robustness: stratum compliant (" + pname + ") has " + std::to_string(compliant.size()) +
                        " records, needs " + std::to_string(cfg.n - n_over));
    }

    out.repetitions.resize(cfg.t);
    std::vector<std::string> errors(cfg.t);
    parallel_for(cfg.t, [&](std::size_t r) {
      Rng rng = make_rng(substream_seed(cfg.seed, r), pi);
      try {
        const auto rows = cfg.stratified ? draw_stratified(over, compliant, n_over, cfg.n - n_over, rng)
                                         : draw_stratified(over, compliant, cfg.n, rng);
        const auto curve = over_standard_rate_curve(pick(pred, rows), pick(truth, rows), standard,
                                                    cfg.curve.n_bins, cfg.curve.basis);
        out.repetitions[r] = find_thresholds(curve, cfg.curve.eps);
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    });
    for (std::size_t r = 0; r < cfg.t; ++r)
      if (!errors[r].empty()) throw DataError("robustness repetition " + std::to_string(r) + ": " + errors[r]);

    std::vector<std::optional<double>> free, re;
    for (const auto& t : out.repetitions) {
      free.push_back(t.free_threshold);
      re.push_back(t.re_threshold);
    }
    out.free = threshold_error(out.reference.free_threshold, free);
    out.re = threshold_error(out.reference.re_threshold, re);
  }
  return report;
}

namespace {

void error_cells(CsvWriter& w, const ThresholdError& e, bool with_reference) {
  auto opt = [&w](const std::optional<double>& v) {
    if (v) w.cell(*v);
    else w.blank();
  };
  if (with_reference) opt(e.reference);
  if (with_reference) opt(e.mean);
  opt(e.re_percent);
  opt(e.ae);
  w.cell(e.n_present).cell(e.n_absent);
}

}  // namespace

std::string RobustnessReport::summary_csv() const {
  CsvWriter w({"pollutant", "threshold", "reference", "mean", "re_percent", "ae", "n_present", "n_absent"});
  for (auto p : kPollutants) {
    const auto& r = pollutants[index_of(p)];
    w.cell(roadside::name_of(p)).cell("free");
    error_cells(w, r.free, true);
    w.end_row();
    w.cell(roadside::name_of(p)).cell("re");
    error_cells(w, r.re, true);
    w.end_row();
  }
  return w.str();
}

std::string RobustnessReport::repetitions_csv() const {
  CsvWriter w({"pollutant", "repetition", "free_threshold", "re_threshold"});
  for (auto p : kPollutants) {
    const auto& reps = pollutants[index_of(p)].repetitions;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      w.cell(roadside::name_of(p)).cell(r);
      if (reps[r].free_threshold) w.cell(*reps[r].free_threshold);
      else w.blank();
      if (reps[r].re_threshold) w.cell(*reps[r].re_threshold);
      else w.blank();
      w.end_row();
    }
  }
  return w.str();
}

std::optional<std::size_t> find_knee(std::span<const std::size_t> sizes,
                                     std::span<const std::optional<double>> re, double fraction) {
  if (sizes.size() < 3 || re.size() != sizes.size()) return std::nullopt;
  for (const auto& v : re)
    if (!v) return std::nullopt;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (*re[i] <= 0.0) return sizes[i];
    if ((*re[i] - *re[i + 1]) / *re[i] < fraction) return sizes[i];
  }
  return std::nullopt;
}

SweepResult sample_size_sweep(const ScreeningData& data, const StandardSet& standards,
                              std::span<const std::size_t> sizes, std::size_t t, std::uint64_t seed,
                              const CurveOptions& curve, double knee_fraction) {
  if (sizes.empty()) throw ConfigError("robustness.sizes must not be empty");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("robustness.sizes must be strictly ascending");
  SweepResult out;
  out.sizes.assign(sizes.begin(), sizes.end());
  std::array<std::vector<std::optional<double>>, 3> free_re, re_re;
  for (auto n : sizes) {
    MonteCarloConfig cfg;
    cfg.t = t;
    cfg.n = n;
    cfg.seed = seed;
    cfg.curve = curve;
    const auto rep = monte_carlo_thresholds(data, standards, cfg);
    for (auto p : kPollutants) {
      const auto& r = rep.pollutants[index_of(p)];
      out.rows.push_back({n, p, r.free, r.re});
      free_re[index_of(p)].push_back(r.free.re_percent);
      re_re[index_of(p)].push_back(r.re.re_percent);
    }
  }
  for (std::size_t p = 0; p < 3; ++p) {
    out.free_knee[p] = find_knee(sizes, free_re[p], knee_fraction);
    out.re_knee[p] = find_knee(sizes, re_re[p], knee_fraction);
  }
  return out;
}

std::string SweepResult::table_csv() const {
  CsvWriter w({"n", "pollutant", "threshold", "re_percent", "ae", "n_present", "n_absent"});
  for (const auto& row : rows) {
    w.cell(row.n).cell(roadside::name_of(row.pollutant)).cell("free");
    error_cells(w, row.free, false);
    w.end_row();
    w.cell(row.n).cell(roadside::name_of(row.pollutant)).cell("re");
    error_cells(w, row.re, false);
    w.end_row();
  }
  return w.str();
}

std::string rate_curves_csv(const std::array<RateCurve, 3>& curves) {
  CsvWriter w({"pollutant", "bin", "lower", "upper", "count", "n_over", "rate"});
  for (auto p : kPollutants) {
    const auto& c = curves[index_of(p)];
    for (std::size_t b = 0; b < c.bins.size(); ++b) {
      const auto& bin = c.bins[b];
      w.cell(roadside::name_of(p)).cell(b).cell(bin.lower).cell(bin.upper).cell(bin.count).cell(bin.n_over).cell(bin.rate);
      w.end_row();
    }
  }
  return w.str();
}

nlohmann::json policy_to_json(const Thresholds& thresholds, const StandardSet& standards,
                              const std::string& dataset_hash, const std::string& config_hash) {
  nlohmann::json rows = nlohmann::json::array();
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  for (auto p : kPollutants) {
    const auto& t = thresholds[index_of(p)];
    rows.push_back({{"pollutant", roadside::name_of(p)},
                    {"free", opt(t.free_threshold)},
                    {"re", opt(t.re_threshold)},
                    {"standard", standards.of(p)}});
  }
  return {{"schema", "roadside.policy/1"},
          {"units", "g/km"},
          {"thresholds", rows},
          {"provenance", {{"dataset_hash", dataset_hash}, {"config_hash", config_hash}}}};
}

Thresholds policy_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != "roadside.policy/1") throw DataError("policy: unsupported schema");
    Thresholds out;
    std::array<bool, 3> seen{};
    for (const auto& row : doc.at("thresholds")) {
      const auto name = row.at("pollutant").get<std::string>();
      std::size_t pi = 3;
      for (auto p : kPollutants)
        if (roadside::name_of(p) == name) pi = index_of(p);
      if (pi == 3) throw DataError("policy: unknown pollutant " + name);
      auto get = [&](const char* key) -> std::optional<double> {
        if (!row.contains(key) || row.at(key).is_null()) return std::nullopt;
        return row.at(key).get<double>();
      };
      out[pi] = {get("free"), get("re")};
      if (out[pi].free_threshold && out[pi].re_threshold && *out[pi].free_threshold > *out[pi].re_threshold)
        throw DataError("policy: free threshold above re threshold for " + name);
      seen[pi] = true;
    }
    for (auto p : kPollutants)
      if (!seen[index_of(p)]) throw DataError("policy: missing pollutant " + std::string(roadside::name_of(p)));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("policy: ") + e.what());
  }
}

}  // namespace roadside::screen
