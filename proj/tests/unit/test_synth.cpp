#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "roadside/core/io.hpp"
#include "roadside/core/matching.hpp"
#include "roadside/core/qc.hpp"
#include "roadside/errors.hpp"
#include "roadside/screen/met_window.hpp"
#include "roadside/synth/fleet.hpp"
#include "roadside/util/hash.hpp"

using namespace roadside;
using namespace roadside::synth;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double top_decile_share(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 10), 0.0) / total;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

const Fleet& fleet_10k() {
  static const Fleet f = [] {
    FleetSpec s;
    s.n_vehicles = 10000;
    s.seed = 7;
    return generate_fleet(s);
  }();
  return f;
}

}  // namespace

TEST_CASE("emission law hits the requested share analytically") {
  for (double share : {0.5, 0.55, 0.7}) {
    const auto law = EmissionLaw::solve(0.05, 0.8, share, 40.0);
    CHECK(law.top_decile_share() == doctest::Approx(share).epsilon(1e-9));
    CHECK(law.quantile(0.5) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(law.quantile(0.9) == doctest::Approx(law.q90).epsilon(1e-12));
    CHECK(law.quantile(1.0) == doctest::Approx(law.q90 * law.cap_ratio).epsilon(1e-12));
    double prev = 0.0;
    for (double u = 0.01; u < 1.0; u += 0.01) {
      CHECK(law.quantile(u) > prev);
      prev = law.quantile(u);
    }
  }
  // A share that the default cap cannot reach forces the cap to grow.
  const auto wide = EmissionLaw::solve(1.0, 0.8, 0.9, 40.0);
  CHECK(wide.cap_ratio > 40.0);
  CHECK(wide.top_decile_share() == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("generator is deterministic in the seed") {
  FleetSpec s;
  s.n_vehicles = 300;
  const auto a = generate_fleet(s);
  const auto b = generate_fleet(s);
  CHECK(sha256_hex(orrs_to_jsonl(a.orrs)) == sha256_hex(orrs_to_jsonl(b.orrs)));
  CHECK(sha256_hex(im_to_csv(a.im)) == sha256_hex(im_to_csv(b.im)));
  CHECK(truth_to_jsonl(a.truth) == truth_to_jsonl(b.truth));
  s.seed = 2;
  CHECK(orrs_to_jsonl(generate_fleet(s).orrs) != orrs_to_jsonl(a.orrs));
  CHECK(a.truth.size() == 300);
}

TEST_CASE("generator rejects invalid specs") {
  FleetSpec s;
  s.n_vehicles = 99;
  CHECK_THROWS_AS(generate_fleet(s), ConfigError);
  s = {};
  s.top_decile_share = 0.45;
  CHECK_THROWS_AS(generate_fleet(s), ConfigError);
  s.top_decile_share = 1.0;
  CHECK_THROWS_AS(generate_fleet(s), ConfigError);
}

TEST_CASE("generated records satisfy the type invariants") {
  const auto& f = fleet_10k();
  for (const auto& r : f.orrs) {
    CHECK(r.rs_co >= 0.0);
    CHECK(r.rs_hc >= 0.0);
    CHECK(r.rs_no >= 0.0);
    CHECK(r.velocity >= 0.0);
    CHECK(r.relative_humidity >= 0.0);
    CHECK(r.relative_humidity <= 100.0);
    CHECK(r.pressure > 0.0);
  }
  for (const auto& i : f.im) {
    CHECK(i.im_co >= 0.0);
    CHECK(i.accumulated_mileage >= 0.0);
    CHECK(i.model_year <= year_of(i.inspection_date));
  }
  for (const auto& t : f.truth)
    for (std::size_t p = 0; p < 3; ++p) CHECK(t.dirty_tail[p] == (t.quantile[p] > 0.9));
}

TEST_CASE("medians, heavy tail and signal presence at n = 10,000") {
  const auto& f = fleet_10k();
  const FleetSpec spec;
  std::vector<double> co, hc, no;
  for (const auto& t : f.truth) {
    co.push_back(t.factor.co);
    hc.push_back(t.factor.hc);
    no.push_back(t.factor.no);
  }
  CHECK(std::abs(median(co) / spec.median_im_co - 1.0) < 0.05);
  CHECK(std::abs(median(hc) / spec.median_im_hc - 1.0) < 0.05);
  CHECK(std::abs(median(no) / spec.median_im_no - 1.0) < 0.05);
  std::vector<double> hc_ppm;
  for (const auto& r : f.orrs) hc_ppm.push_back(r.rs_hc * kHcPpmPerRatio);
  CHECK(std::abs(median(hc_ppm) / spec.median_orrs_hc_ppm - 1.0) < 0.05);

  for (const auto* v : {&co, &hc, &no}) {
    const double share = top_decile_share(*v);
    CHECK(share >= 0.52);
    CHECK(share <= 0.58);
  }

  // Spearman correlation between latent HC and the roadside HC ratio.
  const auto m = match_records(f.orrs, f.im);
  std::map<std::string, double> latent;
  for (const auto& t : f.truth) latent[t.vin] = t.factor.hc;
  std::vector<double> a, b;
  for (const auto& s : m.matched) {
    a.push_back(latent.at(s.im.vin));
    b.push_back(s.orrs.rs_hc);
  }
  CHECK(pearson(ranks(a), ranks(b)) > 0.6);
}

TEST_CASE("qc violation rate and meteorological window mass") {
  FleetSpec s;
  s.n_vehicles = 20000;
  s.seed = 11;
  const auto f = generate_fleet(s);
  const auto q = apply_qc(f.orrs);
  const double dropped = static_cast<double>(q.dropped.size()) / static_cast<double>(f.orrs.size());
  CHECK(std::abs(dropped - 0.0656) < 0.005);

  // Out-of-window mass (QC violators included) is declared at 24%.
  const auto m = match_records(f.orrs, f.im);
  const auto w = apply_met_window(m.matched);
  CHECK(std::abs(w.kept_fraction() - 0.76) < 0.01);

  // Unregistered passes are reported, not dropped silently.
  CHECK(m.unmatched.size() > 0);
  for (const auto& u : m.unmatched) CHECK(u.reason == "no-registry-entry");
}

TEST_CASE("corruption for robustness") {
  FleetSpec s;
  s.n_vehicles = 900;
  auto records = generate_fleet(s).orrs;
  records.resize(1000 < records.size() ? 1000 : records.size());
  while (records.size() < 1000) records.push_back(records.front());
  REQUIRE(records.size() == 1000);

  const auto none = corrupt_for_robustness(records, 0.0, 5);
  CHECK(none.records == records);
  CHECK(std::count(none.corrupted.begin(), none.corrupted.end(), true) == 0);

  const auto quarter = corrupt_for_robustness(records, 0.25, 5);
  CHECK(std::count(quarter.corrupted.begin(), quarter.corrupted.end(), true) == 250);
  const MetWindow window;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = quarter.records[i];
    if (quarter.corrupted[i]) {
      CHECK_FALSE(in_met_window(r.temperature, r.relative_humidity, r.wind_speed, 0.0, window));
      CHECK((!violates_qc(r, {}) || violates_qc(records[i], {})));
    } else {
      CHECK(r == records[i]);
    }
  }
  CHECK(corrupt_for_robustness(records, 0.25, 5).records == quarter.records);

  const auto all = corrupt_for_robustness(records, 1.0, 9);
  for (const auto& r : all.records)
    CHECK_FALSE(in_met_window(r.temperature, r.relative_humidity, r.wind_speed, 0.0, window));
  CHECK_THROWS_AS(corrupt_for_robustness(records, 1.5, 1), ConfigError);
}
