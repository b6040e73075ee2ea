#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "roadside/errors.hpp"
#include "roadside/screen/met_window.hpp"
#include "roadside/screen/screening.hpp"

using namespace roadside;
using namespace roadside::screen;

namespace {

// Curve sampled from r(m) = 1 / (1 + exp(-(m - 2) / 0.1)) on [1, 3].
RateCurve logistic_curve(std::size_t n_bins) {
  RateCurve c;
  const double w = 2.0 / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    RateBin bin;
    bin.lower = 1.0 + w * static_cast<double>(b);
    bin.upper = b + 1 == n_bins ? 3.0 : 1.0 + w * static_cast<double>(b + 1);
    const double mid = 0.5 * (bin.lower + bin.upper);
    bin.rate = 1.0 / (1.0 + std::exp(-(mid - 2.0) / 0.1));
    bin.count = 1000;
    bin.n_over = static_cast<std::size_t>(std::llround(bin.rate * 1000.0));
    c.bins.push_back(bin);
  }
  return c;
}

// Independent statement of the three-way rule for one vehicle.
ScreenClass oracle(const std::array<int, 3>& zone) {
  // zone: 0 below free, 1 between, 2 above re
  if (zone[0] == 2 || zone[1] == 2 || zone[2] == 2) return ScreenClass::kReIm;
  if (zone[0] == 0 && zone[1] == 0 && zone[2] == 0) return ScreenClass::kFreeIm;
  return ScreenClass::kRegular;
}

}  // namespace

TEST_CASE("rate curve basics") {
  const std::vector<double> pred = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> low(10, 0.5), high(10, 20.0);
  auto c = over_standard_rate_curve(pred, low, 8.0, 5);
  REQUIRE(c.bins.size() == 5);
  for (const auto& b : c.bins) CHECK(b.rate == 0.0);
  c = over_standard_rate_curve(pred, high, 8.0, 5);
  for (const auto& b : c.bins) CHECK(b.rate == 1.0);
  CHECK(c.total() == 10);
  CHECK(c.bins.front().lower == 1.0);
  CHECK(c.bins.back().upper == 10.0);
  CHECK(c.bins[0].upper == 2.5);
  c.validate();

  SUBCASE("calibrated predictions give a step") {
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i + 1;
    // standard 40.5: the first 40 values are compliant; 10 bins of 10.
    const auto step = over_standard_rate_curve(v, v, 40.5, 10);
    for (std::size_t b = 0; b < 10; ++b) CHECK(step.bins[b].rate == (b < 4 ? 0.0 : 1.0));
    const auto t = find_thresholds(step);
    CHECK(*t.free_threshold == 40.5);
    CHECK(*t.re_threshold == 40.5);
  }

  SUBCASE("ties are never split") {
    const std::vector<double> tied = {1, 1, 1, 1, 2, 2, 3, 3, 3, 3};
    const auto t = over_standard_rate_curve(tied, tied, 2.5, 5);
    for (std::size_t b = 1; b < t.bins.size(); ++b) CHECK(t.bins[b - 1].upper < t.bins[b].upper);
    CHECK(t.total() == 10);
    CHECK(t.bins.size() == 3);
  }

  SUBCASE("degenerate input") {
    std::vector<std::string> warnings;
    const std::vector<double> same(20, 3.0);
    const auto d = over_standard_rate_curve(same, pred.size() == 10 ? std::vector<double>(20, 1.0) : same, 2.0,
                                            50, BinBasis::kPredicted, &warnings);
    CHECK(d.degenerate);
    CHECK(d.bins.size() == 1);
    CHECK(warnings.size() == 1);
    const auto t = find_thresholds(d);
    CHECK(!t.free_threshold);
    CHECK(!t.re_threshold);
  }

  SUBCASE("binning over truth") {
    const std::vector<double> truth = {10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
    const auto t = over_standard_rate_curve(pred, truth, 5.5, 2, BinBasis::kTruth);
    CHECK(t.bins[0].rate == 0.0);
    CHECK(t.bins[1].rate == 1.0);
  }

  CHECK_THROWS_AS(over_standard_rate_curve(pred, std::vector<double>(9), 1.0, 5), ConfigError);
  CHECK_THROWS_AS(over_standard_rate_curve(pred, low, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(over_standard_rate_curve(std::vector<double>{}, std::vector<double>{}, 1.0, 5), ConfigError);
}

TEST_CASE("threshold discovery") {
  SUBCASE("analytic logistic crossings within one bin") {
    const auto c = logistic_curve(50);
    const auto t = find_thresholds(c, 0.01);
    const double lo = 2.0 - 0.1 * std::log(99.0), hi = 2.0 + 0.1 * std::log(99.0);
    REQUIRE(t.free_threshold);
    REQUIRE(t.re_threshold);
    CHECK(std::abs(*t.free_threshold - lo) <= 0.04);
    CHECK(std::abs(*t.re_threshold - hi) <= 0.04);
    CHECK(lo == doctest::Approx(1.540).epsilon(1e-3));
  }
  SUBCASE("all-zero curve") {
    auto c = logistic_curve(10);
    for (auto& b : c.bins) b.rate = 0.0;
    const auto t = find_thresholds(c);
    CHECK(*t.free_threshold == 3.0);
    CHECK(!t.re_threshold);
  }
  SUBCASE("noise at both ends gives absent markers") {
    auto c = logistic_curve(10);
    c.bins.front().rate = 0.2;
    c.bins.back().rate = 0.9;
    const auto t = find_thresholds(c);
    CHECK(!t.free_threshold);
    CHECK(!t.re_threshold);
  }
  SUBCASE("sustained prefix ignores later zero bins") {
    auto c = logistic_curve(10);
    for (auto& b : c.bins) b.rate = 0.5;
    c.bins[0].rate = c.bins[1].rate = 0.0;
    c.bins[5].rate = 0.0;
    CHECK(*find_thresholds(c).free_threshold == c.bins[1].upper);
  }
  CHECK_THROWS_AS(find_thresholds(logistic_curve(10), 0.5), ConfigError);
  CHECK_THROWS_AS(find_thresholds(logistic_curve(10), -0.1), ConfigError);
}

TEST_CASE("classification truth table") {
  Thresholds th;
  th[0] = {2.68, 12.30};
  th[1] = {0.62, 2.18};
  th[2] = {0.65, 2.32};
  const double zone_value[3][3] = {{1.0, 5.0, 20.0}, {0.1, 1.0, 3.0}, {0.1, 1.0, 3.0}};
  int cases = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        PollutantTriple p{zone_value[0][a], zone_value[1][b], zone_value[2][c]};
        CHECK(classify(p, th) == oracle({a, b, c}));
        ++cases;
      }
  CHECK(cases == 27);

  // Exactly at a threshold: not below free, not above re.
  CHECK(classify({2.68, 0.1, 0.1}, th) == ScreenClass::kRegular);
  CHECK(classify({12.30, 0.1, 0.1}, th) == ScreenClass::kRegular);

  // Absent thresholds never trigger their class.
  Thresholds partial = th;
  partial[1].re_threshold.reset();
  CHECK(classify({1.0, 50.0, 0.1}, partial) == ScreenClass::kRegular);
  partial[2].free_threshold.reset();
  CHECK(classify({1.0, 0.1, 0.1}, partial) == ScreenClass::kRegular);

  const std::vector<PollutantTriple> fleet = {{1, 0.1, 0.1}, {5, 0.1, 0.1}, {20, 0.1, 0.1}, {1, 0.1, 0.2}};
  const auto cls = classify_fleet(fleet, th);
  CHECK(cls.counts == std::array<std::size_t, 3>{2, 1, 1});
  CHECK(cls.proportions[0] + cls.proportions[1] + cls.proportions[2] == doctest::Approx(1.0));
}

TEST_CASE("classification is monotone under threshold perturbation") {
  std::mt19937_64 rng(42);
  std::lognormal_distribution<double> emis(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PollutantTriple> fleet(400);
  for (auto& v : fleet) v = {emis(rng), emis(rng), emis(rng)};
  for (int trial = 0; trial < 1000; ++trial) {
    Thresholds th;
    for (auto& t : th) {
      const double f = 0.2 + 2.0 * u(rng);
      t = {f, f + 3.0 * u(rng)};
    }
    const auto base = classify_fleet(fleet, th);
    const std::size_t p = trial % 3;
    Thresholds raised = th;
    *raised[p].re_threshold += u(rng);
    CHECK(classify_fleet(fleet, raised).counts[2] <= base.counts[2]);
    Thresholds lowered = th;
    *lowered[p].free_threshold -= u(rng) * *lowered[p].free_threshold;
    CHECK(classify_fleet(fleet, lowered).counts[0] <= base.counts[0]);
  }
}

TEST_CASE("relative and absolute threshold error") {
  const std::vector<std::optional<double>> resampled = {1.9, 2.1, 2.3};
  const auto e = threshold_error(2.0, resampled);
  CHECK(std::abs(*e.mean - 2.1) < 1e-12);
  CHECK(std::abs(*e.re_percent - 5.0) < 1e-12);
  CHECK(std::abs(*e.ae - 0.1) < 1e-12);

  const auto same = threshold_error(2.0, std::vector<std::optional<double>>{2.0, 2.0});
  CHECK(*same.ae == 0.0);
  CHECK(*same.re_percent == 0.0);

  // RE is scale invariant, AE scales.
  const double c = 3.7;
  const auto scaled = threshold_error(2.0 * c, std::vector<std::optional<double>>{1.9 * c, 2.1 * c, 2.3 * c});
  CHECK(*scaled.re_percent == doctest::Approx(*e.re_percent).epsilon(1e-12));
  CHECK(*scaled.ae == doctest::Approx(*e.ae * c).epsilon(1e-12));

  const auto gaps = threshold_error(2.0, std::vector<std::optional<double>>{2.2, std::nullopt});
  CHECK(gaps.n_present == 1);
  CHECK(gaps.n_absent == 1);
  CHECK(*gaps.ae == doctest::Approx(0.2));
  CHECK(!threshold_error(std::nullopt, resampled).re_percent);
  CHECK(!threshold_error(0.0, resampled).re_percent);
}

TEST_CASE("monte carlo thresholds") {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> emis(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  ScreeningData data;
  const StandardSet standards{4.0, 4.0, 4.0};
  for (int i = 0; i < 3000; ++i)
    for (std::size_t p = 0; p < 3; ++p) {
      const double t = emis(rng);
      data.truth[p].push_back(t);
      data.predicted[p].push_back(t * std::exp(noise(rng)));
    }

  SUBCASE("full-size single repetition reproduces the reference") {
    MonteCarloConfig cfg;
    cfg.t = 1;
    cfg.n = 3000;
    cfg.curve.eps = 0.05;
    const auto rep = monte_carlo_thresholds(data, standards, cfg);
    for (const auto& r : rep.pollutants) {
      REQUIRE(r.reference.free_threshold);
      CHECK(*r.free.re_percent == 0.0);
      CHECK(*r.free.ae == 0.0);
      if (r.reference.re_threshold) CHECK(*r.re.ae == 0.0);
    }
  }

  SUBCASE("deterministic and repetition-indexed") {
    MonteCarloConfig cfg;
    cfg.t = 20;
    cfg.n = 1000;
    cfg.seed = 9;
    const auto a = monte_carlo_thresholds(data, standards, cfg);
    const auto b = monte_carlo_thresholds(data, standards, cfg);
    CHECK(a.summary_csv() == b.summary_csv());
    CHECK(a.repetitions_csv() == b.repetitions_csv());
    cfg.t = 10;
    const auto c = monte_carlo_thresholds(data, standards, cfg);
    for (std::size_t r = 0; r < 10; ++r)
      CHECK(c.pollutants[0].repetitions[r].free_threshold == a.pollutants[0].repetitions[r].free_threshold);
    CHECK(a.summary_csv().rfind("pollutant,threshold,reference,mean,re_percent,ae,n_present,n_absent\r\n", 0) == 0);
  }

  SUBCASE("stratified draws keep the over-standard ratio") {
    std::vector<std::size_t> over, compliant;
    for (std::size_t i = 0; i < 3000; ++i) (data.truth[0][i] > 4.0 ? over : compliant).push_back(i);
    const double ratio = static_cast<double>(over.size()) / 3000.0;
    for (std::size_t n : {100, 777, 2500}) {
      Rng g = make_rng(1, n);
      const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
      const auto rows = draw_stratified(over, compliant, k, n - k, g);
      CHECK(rows.size() == n);
      CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
      std::size_t hits = 0;
      for (auto r : rows) hits += data.truth[0][r] > 4.0;
      CHECK(std::abs(static_cast<double>(hits) / static_cast<double>(n) - ratio) <= 1.0 / static_cast<double>(n));
    }
    Rng g = make_rng(1, 0);
    CHECK_THROWS_AS(draw_stratified(over, compliant, over.size() + 1, 0, g), DataError);
  }

  MonteCarloConfig bad;
  bad.n = 5000;
  CHECK_THROWS_AS(monte_carlo_thresholds(data, standards, bad), ConfigError);
  bad.n = 10;
  bad.t = 0;
  CHECK_THROWS_AS(monte_carlo_thresholds(data, standards, bad), ConfigError);
}

TEST_CASE("knee detection and sweeps") {
  const std::vector<std::size_t> sizes = {2000, 5000, 10000, 15000};
  const std::vector<std::optional<double>> re = {10.0, 5.0, 4.8, 4.7};
  CHECK(find_knee(sizes, re) == 5000u);
  CHECK(!find_knee(std::vector<std::size_t>{1, 2}, std::vector<std::optional<double>>{3.0, 1.0}));
  const std::vector<std::optional<double>> steep = {10.0, 5.0, 2.5, 1.0};
  CHECK(!find_knee(sizes, steep));
  const std::vector<std::optional<double>> gap = {10.0, std::nullopt, 2.5, 1.0};
  CHECK(!find_knee(sizes, gap));

  ScreeningData data;
  std::mt19937_64 rng(8);
  std::lognormal_distribution<double> emis(0.0, 1.0);
  for (int i = 0; i < 1200; ++i)
    for (std::size_t p = 0; p < 3; ++p) {
      const double t = emis(rng);
      data.truth[p].push_back(t);
      data.predicted[p].push_back(t);
    }
  const std::vector<std::size_t> two = {300, 600};
  const auto sw = sample_size_sweep(data, StandardSet{3.0, 3.0, 3.0}, two, 5, 1);
  CHECK(sw.rows.size() == 6);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(!sw.free_knee[p]);
    CHECK(!sw.re_knee[p]);
  }
  CHECK(sw.table_csv().rfind("n,pollutant,threshold,re_percent,ae,n_present,n_absent\r\n", 0) == 0);
  CHECK_THROWS_AS(sample_size_sweep(data, StandardSet{}, std::vector<std::size_t>{600, 300}, 5, 1), ConfigError);
}

TEST_CASE("policy documents") {
  Thresholds th;
  th[0] = {2.68, 12.30};
  th[1] = {0.62, std::nullopt};
  th[2] = {std::nullopt, 2.32};
  const auto doc = policy_to_json(th, StandardSet{}, "abc", "def");
  CHECK(doc["provenance"]["dataset_hash"] == "abc");
  CHECK(doc["thresholds"][1]["re"].is_null());
  const auto back = policy_from_json(nlohmann::json::parse(doc.dump()));
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(back[p].free_threshold == th[p].free_threshold);
    CHECK(back[p].re_threshold == th[p].re_threshold);
  }
  auto bad = doc;
  bad["thresholds"][0]["free"] = 20.0;
  CHECK_THROWS_AS(policy_from_json(bad), DataError);
  bad = doc;
  bad["thresholds"].erase(2);
  CHECK_THROWS_AS(policy_from_json(bad), DataError);
  CHECK_THROWS_AS(StandardSet({0.0, 1.0, 1.0}).validate(), ConfigError);

  std::array<RateCurve, 3> curves{logistic_curve(4), logistic_curve(4), logistic_curve(4)};
  const auto csv = rate_curves_csv(curves);
  CHECK(csv.rfind("pollutant,bin,lower,upper,count,n_over,rate\r\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("meteorological window boundaries") {
  const MetWindow w;
  CHECK(in_met_window(20.0, 50.0, 2.0, 10.0, w));
  CHECK(in_met_window(32.0, 50.0, 2.0, 10.0, w));
  CHECK_FALSE(in_met_window(32.1, 50.0, 2.0, 10.0, w));
  CHECK_FALSE(in_met_window(33.0, 50.0, 2.0, 10.0, w));
  CHECK(in_met_window(6.0, 50.0, 2.0, 10.0, w));
  CHECK_FALSE(in_met_window(5.9, 50.0, 2.0, 10.0, w));
  CHECK_FALSE(in_met_window(20.0, 80.0, 2.0, 10.0, w));
  CHECK_FALSE(in_met_window(20.0, 50.0, 5.0, 10.0, w));
  CHECK_FALSE(in_met_window(20.0, 50.0, 2.0, 18.0, w));
}
