#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "roadside/errors.hpp"
#include "roadside/interpret/shapley.hpp"
#include "roadside/learn/models.hpp"

using namespace roadside;
using namespace roadside::interpret;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) m(r, c) = u(rng);
  return m;
}

BatchModel rowwise(double (*f)(std::span<const double>)) {
  return [f](const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = f(x.row(r));
    return out;
  };
}

double linear(std::span<const double> x) { return 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2]; }
double product(std::span<const double> x) { return x[0] * x[1]; }
double nonlinear(std::span<const double> x) {
  return x[0] * x[1] + std::max(x[2], x[3]) + std::sin(3.0 * x[4]);
}
double ignores_middle(std::span<const double> x) { return x[0] * x[0] + 4.0 * x[2]; }

BatchModel of_model(const learn::Regressor& m) {
  return [&m](const Matrix& x) { return m.predict(x); };
}

learn::TrainedModel eight_feature_gbt(std::uint64_t seed) {
  auto x = random_matrix(2000, 8, seed);
  std::vector<double> y(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    y[r] = 3.0 * x(r, 0) + 2.0 * x(r, 1) * x(r, 2) - 1.5 * x(r, 3) + std::sin(4.0 * x(r, 4)) +
           0.5 * x(r, 5);
  learn::GbtConfig cfg;
  cfg.n_rounds = 60;
  cfg.max_depth = 4;
  cfg.seed = seed;
  cfg.gain_prune_threshold = 0.0;
  return learn::train_gbt(x, y, cfg);
}

}  // namespace

TEST_CASE("exact attribution of a linear model is w_j times the centred input") {
  const auto bg = random_matrix(40, 3, 1);
  const std::vector<double> x = {0.9, 0.2, 0.4};
  const auto a = shapley_exact(rowwise(linear), x, bg);
  const std::vector<double> w = {2.0, -3.0, 0.5};
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < bg.rows(); ++r) mean += bg(r, j);
    mean /= static_cast<double>(bg.rows());
    CHECK(a.phi[j] == doctest::Approx(w[j] * (x[j] - mean)).epsilon(1e-12));
  }
}

TEST_CASE("exact attribution of a product against one background row") {
  Matrix bg(1, 2);
  bg(0, 0) = 0.5;
  bg(0, 1) = 2.0;
  const std::vector<double> x = {3.0, 4.0};
  const auto a = shapley_exact(rowwise(product), x, bg);
  // phi_0 = (x0 - z0)(x1 + z1) / 2, phi_1 = (x1 - z1)(x0 + z0) / 2
  CHECK(a.phi[0] == doctest::Approx(2.5 * 6.0 / 2.0).epsilon(1e-14));
  CHECK(a.phi[1] == doctest::Approx(2.0 * 3.5 / 2.0).epsilon(1e-14));
  CHECK(a.baseline == 1.0);
  CHECK(a.prediction == 12.0);
}

TEST_CASE("exact oracle axioms") {
  const auto bg = random_matrix(30, 5, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(5);
    for (auto& v : x) v = u(rng);
    const auto a = shapley_exact(rowwise(nonlinear), x, bg);
    double total = a.baseline;
    for (double p : a.phi) total += p;
    CHECK(std::abs(total - nonlinear(x)) < 1e-9);
  }

  SUBCASE("singleton game") {
    const auto bg1 = random_matrix(10, 1, 4);
    auto f = [](std::span<const double> x) { return std::exp(x[0]); };
    const std::vector<double> x = {0.3};
    const auto a = shapley_exact(rowwise(f), x, bg1);
    double base = 0.0;
    for (std::size_t r = 0; r < bg1.rows(); ++r) base += std::exp(bg1(r, 0));
    base /= 10.0;
    CHECK(a.phi[0] == doctest::Approx(std::exp(0.3) - base).epsilon(1e-12));
  }

  SUBCASE("symmetry") {
    // Exchangeable background: every row is paired with its swap.
    const auto half = random_matrix(20, 2, 5);
    Matrix sym(40, 2);
    for (std::size_t r = 0; r < 20; ++r) {
      sym(2 * r, 0) = sym(2 * r + 1, 1) = half(r, 0);
      sym(2 * r, 1) = sym(2 * r + 1, 0) = half(r, 1);
    }
    auto f = [](std::span<const double> x) { return x[0] + x[1] + x[0] * x[1]; };
    const std::vector<double> x = {0.7, 0.7};
    const auto a = shapley_exact(rowwise(f), x, sym);
    CHECK(a.phi[0] == doctest::Approx(a.phi[1]).epsilon(1e-12));
  }

  SUBCASE("dummy feature is exactly zero") {
    const auto bg3 = random_matrix(25, 3, 6);
    const std::vector<double> x = {0.1, 0.95, 0.6};
    CHECK(shapley_exact(rowwise(ignores_middle), x, bg3).phi[1] == 0.0);
    CHECK(shapley_sample(rowwise(ignores_middle), x, bg3, 200, 9).phi[1] == 0.0);
  }
}

TEST_CASE("additive tree model attributes each part separately") {
  // f = g1(x0) + g2(x1) built as a GBT with two depth-1 trees.
  learn::Tree t1, t2;
  t1.nodes = {{0, 0.5, 1, 2, 0.0}, {-1, 0.0, -1, -1, 1.0}, {-1, 0.0, -1, -1, 3.0}};
  t2.nodes = {{1, 0.2, 1, 2, 0.0}, {-1, 0.0, -1, -1, -2.0}, {-1, 0.0, -1, -1, 0.5}};
  const learn::GbtModel model(learn::GbtConfig{}, 2, 0.0, {t1, t2});
  auto g1 = [](double v) { return v < 0.5 ? 1.0 : 3.0; };
  auto g2 = [](double v) { return v < 0.2 ? -2.0 : 0.5; };
  const auto bg = random_matrix(64, 2, 7);
  const std::vector<double> x = {0.8, 0.1};
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t r = 0; r < bg.rows(); ++r) {
    m1 += g1(bg(r, 0));
    m2 += g2(bg(r, 1));
  }
  m1 /= 64.0;
  m2 /= 64.0;
  const auto exact = shapley_exact(of_model(model), x, bg);
  CHECK(exact.phi[0] == doctest::Approx(g1(0.8) - m1).epsilon(1e-12));
  CHECK(exact.phi[1] == doctest::Approx(g2(0.1) - m2).epsilon(1e-12));
  // Additive games have zero permutation variance once the background is
  // fully cycled.
  const auto sampled = shapley_sample(of_model(model), x, bg, 128, 3);
  CHECK(sampled.phi[0] == doctest::Approx(g1(0.8) - m1).epsilon(1e-12));
  CHECK(sampled.phi[1] == doctest::Approx(g2(0.1) - m2).epsilon(1e-12));
}

TEST_CASE("sampled attributions agree with the exact oracle within their standard error") {
  const auto fit = eight_feature_gbt(11);
  const auto model = of_model(*fit.model);
  const auto bg = random_matrix(100, 8, 12);
  const auto xs = random_matrix(3, 8, 13);
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    const auto exact = shapley_exact(model, xs.row(i), bg);
    const auto sampled = shapley_sample(model, xs.row(i), bg, 2000, 100 + i);
    double total = exact.baseline;
    for (double p : exact.phi) total += p;
    CHECK(std::abs(total - exact.prediction) < 1e-9);
    for (std::size_t j = 0; j < 8; ++j) {
      // Features 6 and 7 never enter the target; if unused by the trees
      // both estimators must give exactly zero.
      if (fit.report.feature_gain[j] == 0.0) {
        CHECK(exact.phi[j] == 0.0);
        CHECK(sampled.phi[j] == 0.0);
      }
      CHECK(std::abs(sampled.phi[j] - exact.phi[j]) <= 4.0 * sampled.se[j] + 1e-12);
    }
    double est = sampled.baseline;
    for (double p : sampled.phi) est += p;
    CHECK(std::abs(est - sampled.prediction) <= 3.0 * sampled.efficiency_se + 1e-12);
  }
}

TEST_CASE("sampler standard error shrinks like one over root n") {
  // Pairwise-only games are solved exactly by reversed orderings, so use a
  // tree ensemble with deeper interactions.
  const auto fit = eight_feature_gbt(23);
  const auto bg = random_matrix(16, 8, 21);
  const auto xs = random_matrix(1, 8, 22);
  std::vector<double> lx, ly;
  for (std::size_t n : {100, 400, 1600, 6400}) {
    const auto a = shapley_sample(of_model(*fit.model), xs.row(0), bg, n, 5);
    double se = 0.0;
    for (double s : a.se) se += s;
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(se));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    mx += lx[i] / 4;
    my += ly[i] / 4;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(sxy / sxx == doctest::Approx(-0.5).epsilon(0.3));  // +-0.15
}

TEST_CASE("sampler determinism and validation") {
  const auto bg = random_matrix(16, 5, 31);
  const std::vector<double> x = {0.2, 0.4, 0.6, 0.8, 1.0};
  const auto a = shapley_sample(rowwise(nonlinear), x, bg, 101, 77);
  const auto b = shapley_sample(rowwise(nonlinear), x, bg, 101, 77);
  const auto c = shapley_sample(rowwise(nonlinear), x, bg, 101, 78);
  CHECK(a.phi == b.phi);
  CHECK(a.phi != c.phi);
  CHECK_THROWS_AS(shapley_sample(rowwise(nonlinear), x, Matrix(0, 5), 10, 1), ConfigError);
  CHECK_THROWS_AS(shapley_sample(rowwise(nonlinear), x, bg, 0, 1), ConfigError);
  CHECK_THROWS_AS(shapley_sample(rowwise(nonlinear), std::vector<double>(4), bg, 10, 1), ConfigError);
  CHECK_THROWS_AS(shapley_exact(rowwise(nonlinear), std::vector<double>(13), random_matrix(4, 13, 1)),
                  ConfigError);
}

TEST_CASE("ms and mas aggregation") {
  Matrix one(1, 3);
  one(0, 0) = -2.0;
  one(0, 1) = 0.5;
  one(0, 2) = 0.0;
  auto s = aggregate_ms_mas(one);
  CHECK(s.ms == std::vector<double>{-2.0, 0.5, 0.0});
  CHECK(s.mas == std::vector<double>{2.0, 0.5, 0.0});
  CHECK(s.ranking == std::vector<std::size_t>{0, 1, 2});

  Matrix pm(2, 2);
  pm(0, 0) = 1.0;
  pm(1, 0) = -1.0;
  pm(0, 1) = 1.0;
  pm(1, 1) = 1.0;
  s = aggregate_ms_mas(pm);
  CHECK(s.ms[0] == 0.0);
  CHECK(s.mas[0] == 1.0);
  CHECK(s.ranking == std::vector<std::size_t>{0, 1});  // tie broken by index

  const auto r = random_matrix(50, 6, 41);
  Matrix centred(50, 6);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 6; ++j) centred(i, j) = r(i, j) - 0.5;
  s = aggregate_ms_mas(centred);
  for (std::size_t j = 0; j < 6; ++j) CHECK(s.mas[j] >= std::abs(s.ms[j]));
  CHECK_THROWS_AS(aggregate_ms_mas(Matrix(0, 3)), ConfigError);
}

TEST_CASE("explain is keyed by sample id and exports both tables") {
  const auto bg = random_matrix(32, 3, 51);
  const auto xs = random_matrix(4, 3, 52);
  const std::vector<std::size_t> ids = {10, 11, 12, 13};
  const auto rep = explain(rowwise(linear), xs, ids, bg, 64, 9, {"a", "b", "c"});
  CHECK(rep.values.rows() == 4);
  // Sample 12 alone gives the same row.
  const auto single = explain(rowwise(linear), xs.select_rows(std::vector<std::size_t>{2}),
                              std::vector<std::size_t>{12}, bg, 64, 9, {"a", "b", "c"});
  for (std::size_t j = 0; j < 3; ++j) CHECK(single.values(0, j) == rep.values(2, j));

  const auto values = rep.values_csv();
  CHECK(values.rfind("sample_id,feature,value\r\n", 0) == 0);
  CHECK(std::count(values.begin(), values.end(), '\n') == 1 + 12);
  const auto summary = rep.summary_csv();
  CHECK(summary.rfind("feature,ms,mas,rank\r\n", 0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 4);
  // |w| ordering 3, 2, 0.5 gives b, a, c for spread-out samples.
  CHECK(rep.summary.ranking.front() == 1);
}

TEST_CASE("background selection") {
  const auto data = random_matrix(1000, 2, 61);
  const auto a = select_background(data, 256, 3);
  const auto b = select_background(data, 256, 3);
  CHECK(a.rows() == 256);
  CHECK(a.data() == b.data());
  CHECK(select_background(data, 5000, 3).rows() == 1000);
}
