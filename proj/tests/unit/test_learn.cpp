#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "roadside/errors.hpp"
#include "roadside/learn/grid.hpp"
#include "roadside/learn/models.hpp"
#include "roadside/util/random.hpp"

using namespace roadside;
using namespace roadside::learn;

namespace {

struct Data {
  Matrix x;
  std::vector<double> y;
};

Data make_data(std::size_t n, std::size_t d, std::uint64_t seed,
               double (*f)(std::span<const double>), double noise = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, 1.0);
  Data out{Matrix(n, d), std::vector<double>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out.x(r, c) = u(rng);
    out.y[r] = f(out.x.row(r)) + noise * e(rng);
  }
  return out;
}

double r2(std::span<const double> p, std::span<const double> y) {
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0, st = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss += (p[i] - y[i]) * (p[i] - y[i]);
    st += (y[i] - m) * (y[i] - m);
  }
  return 1.0 - ss / st;
}

double rmse(std::span<const double> p, std::span<const double> y) {
  double ss = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (p[i] - y[i]) * (p[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

double smooth(std::span<const double> x) { return 2.0 * x[0] + std::sin(6.0 * x[1]) + x[2] * x[3]; }
double linear3(std::span<const double> x) { return 3.0 * x[0]; }
double step(std::span<const double> x) { return x[0] > 0.5 ? 1.0 : 0.0; }

}  // namespace

TEST_CASE("single boosting round matches a hand-walked tree") {
  Matrix x(4, 1);
  for (int i = 0; i < 4; ++i) x(i, 0) = i + 1;
  const std::vector<double> y = {1, 1, 5, 5};
  GbtConfig cfg;
  cfg.n_rounds = 1;
  cfg.max_depth = 1;
  cfg.min_child_weight = 1;
  cfg.subsample = cfg.colsample = 1.0;
  cfg.learning_rate = 1.0;
  cfg.lambda_l2 = 0.0;
  const auto fit = train_gbt(x, y, cfg);
  const auto& m = dynamic_cast<const GbtModel&>(*fit.model);
  REQUIRE(m.trees().size() == 1);
  const auto& t = m.trees()[0];
  // Base 3; residuals (-2,-2,2,2); best cut between 2 and 3.
  CHECK(m.base_score() == 3.0);
  REQUIRE(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold == 2.5);
  CHECK(t.nodes[static_cast<std::size_t>(t.nodes[0].left)].value == -2.0);
  CHECK(t.nodes[static_cast<std::size_t>(t.nodes[0].right)].value == 2.0);
  CHECK(m.predict(x) == y);
  // Gain = SSE reduction: 16 - 0.
  CHECK(fit.report.feature_gain[0] == doctest::Approx(16.0));
  // Manual traversal on fresh points.
  const double probe[] = {2.49};
  CHECK(m.predict_one(probe) == 1.0);
}

TEST_CASE("degenerate models predict the mean") {
  const auto d = make_data(50, 3, 1, smooth);
  const double mean = std::accumulate(d.y.begin(), d.y.end(), 0.0) / 50.0;

  ForestConfig rf;
  rf.n_trees = 1;
  rf.max_depth = 0;
  rf.bootstrap = false;
  CHECK(train_forest(d.x, d.y, rf).model->predict_one(d.x.row(0)) == doctest::Approx(mean).epsilon(1e-12));

  // With bootstrap the leaf is the mean of the resample (Poisson(1) counts per row).
  rf.bootstrap = true;
  rf.seed = 42;
  double sw = 0, swy = 0;
  for (std::size_t r = 0; r < 50; ++r) {
    const double w = poisson_one(hash_to_unit(substream_seed(42, 1, r)));
    sw += w;
    swy += w * d.y[r];
  }
  CHECK(train_forest(d.x, d.y, rf).model->predict_one(d.x.row(0)) == doctest::Approx(swy / sw).epsilon(1e-12));

  GbtConfig g;
  g.n_rounds = 1;
  g.max_depth = 0;
  g.subsample = 1.0;
  CHECK(train_gbt(d.x, d.y, g).model->predict_one(d.x.row(3)) == doctest::Approx(mean).epsilon(1e-12));
  g.n_rounds = 0;
  CHECK(train_gbt(d.x, d.y, g).model->predict_one(d.x.row(3)) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("forest prediction is the mean of its trees") {
  const auto d = make_data(300, 4, 2, smooth, 0.1);
  ForestConfig cfg;
  cfg.n_trees = 25;
  cfg.max_depth = 5;
  cfg.max_features = 0.5;
  const auto fit = train_forest(d.x, d.y, cfg);
  const auto& m = dynamic_cast<const ForestModel&>(*fit.model);
  const auto pred = m.predict(d.x);
  for (std::size_t r = 0; r < d.x.rows(); ++r) {
    double s = 0;
    for (const auto& t : m.trees()) s += t.predict(d.x.row(r));
    CHECK(std::abs(pred[r] - s / 25.0) <= 1e-12);
  }
  CHECK(fit.report.loss.size() == 25);
}

TEST_CASE("forest learns a step function") {
  const auto d = make_data(1000, 3, 3, step);
  ForestConfig cfg;
  cfg.n_trees = 200;
  cfg.max_depth = 3;
  const auto fit = train_forest(d.x, d.y, cfg);
  CHECK(r2(fit.model->predict(d.x), d.y) > 0.95);
}

TEST_CASE("boosting training loss never increases") {
  for (std::uint64_t data_seed : {10u, 11u, 12u}) {
    const auto d = make_data(400, 5, data_seed, smooth, 0.3);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      GbtConfig cfg;
      cfg.n_rounds = 60;
      cfg.max_depth = 4;
      cfg.subsample = cfg.colsample = 1.0;
      cfg.seed = seed;
      cfg.prune_refit = false;
      const auto fit = train_gbt(d.x, d.y, cfg);
      REQUIRE(fit.report.loss.size() == 60);
      for (std::size_t i = 1; i < fit.report.loss.size(); ++i)
        CHECK(fit.report.loss[i] <= fit.report.loss[i - 1] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("gain pruning flags a pure-noise column and zero columns get no gain") {
  auto d = make_data(1500, 8, 4, [](std::span<const double> x) { return 3.0 * x[0] + 2.0 * x[1] * x[2]; }, 0.05);
  for (std::size_t r = 0; r < d.x.rows(); ++r) d.x(r, 5) = 0.0;
  GbtConfig cfg;
  cfg.n_rounds = 80;
  cfg.max_depth = 4;
  const auto fit = train_gbt(d.x, d.y, cfg);
  const double total = std::accumulate(fit.report.feature_gain.begin(), fit.report.feature_gain.end(), 0.0);
  CHECK(fit.report.feature_gain[7] / total <= 0.01);
  CHECK(std::find(fit.report.pruned.begin(), fit.report.pruned.end(), 7u) != fit.report.pruned.end());
  CHECK(fit.report.feature_gain[5] == 0.0);
  CHECK(std::find(fit.report.pruned.begin(), fit.report.pruned.end(), 0u) == fit.report.pruned.end());
  // The refit does not read pruned columns.
  const auto used = fit.model->used_features();
  for (auto f : fit.report.pruned) CHECK(used[f] == 0);

  cfg.prune_refit = false;
  const auto raw = train_gbt(d.x, d.y, cfg);
  const auto refit = refit_without_pruned(d.x, d.y, cfg, raw.report);
  for (auto f : raw.report.pruned) CHECK(refit.model->used_features()[f] == 0);
}

TEST_CASE("tree learners are equivariant under row permutation with row ids") {
  const auto d = make_data(300, 4, 5, smooth, 0.2);
  std::vector<std::uint64_t> ids(300);
  std::iota(ids.begin(), ids.end(), 1000);
  std::vector<std::size_t> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(5));
  const Matrix xp = d.x.select_rows(perm);
  const auto yp = select(std::span<const double>(d.y), std::span<const std::size_t>(perm));
  const auto idp = select(std::span<const std::uint64_t>(ids), std::span<const std::size_t>(perm));

  ForestConfig rf;
  rf.n_trees = 20;
  rf.max_features = 0.5;
  const auto a = train_forest(d.x, d.y, rf, ids).model->predict(d.x);
  const auto b = train_forest(xp, yp, rf, idp).model->predict(d.x);
  CHECK(a == b);

  GbtConfig g;
  g.n_rounds = 30;
  const auto c = train_gbt(d.x, d.y, g, ids).model->predict(d.x);
  const auto e = train_gbt(xp, yp, g, idp).model->predict(d.x);
  CHECK(c == e);

  // Predictions permute with the rows.
  const auto model = train_gbt(d.x, d.y, g, ids).model;
  const auto pp = model->predict(xp);
  for (std::size_t i = 0; i < 300; ++i) CHECK(pp[i] == c[perm[i]]);
  CHECK(model->predict(Matrix(0, 4)).empty());
  CHECK_THROWS_AS(model->predict(Matrix(2, 3)), ConfigError);
}

TEST_CASE("mlp gradient matches central finite differences") {
  Rng rng = make_rng(3, 0);
  MlpNetwork net({1, 3, 1}, false, rng);
  REQUIRE(net.parameter_count() == 10);
  // Keep every hidden unit away from its kink.
  for (int i = 0; i < 3; ++i) net.layers()[0].bias(i) = 0.5;
  Eigen::MatrixXd x(1, 8);
  Eigen::RowVectorXd t(8);
  for (int i = 0; i < 8; ++i) {
    x(0, i) = 0.1 * (i + 1);
    t(i) = std::sin(i);
  }
  std::vector<double> grad, scratch;
  net.loss_and_gradient(x, t, 0.0, nullptr, grad);
  const auto theta = net.parameters();
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto plus = theta, minus = theta;
    plus[k] += 1e-5;
    minus[k] -= 1e-5;
    net.set_parameters(plus);
    const double lp = net.loss_and_gradient(x, t, 0.0, nullptr, scratch);
    net.set_parameters(minus);
    const double lm = net.loss_and_gradient(x, t, 0.0, nullptr, scratch);
    const double fd = (lp - lm) / 2e-5;
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(std::abs(fd) + std::abs(grad[k]), 1e-8));
  }
  net.set_parameters(theta);
  CHECK(worst < 1e-4);
}

TEST_CASE("mlp fits constants and linear signals") {
  Matrix x(200, 2);
  std::vector<double> y(200, 2.5);
  for (std::size_t r = 0; r < 200; ++r) x(r, 0) = x(r, 1) = static_cast<double>(r);
  MlpConfig cfg;
  cfg.hidden_layers = {8};
  cfg.epochs = 5;
  const auto c = train_mlp(x, y, cfg);
  CHECK(c.report.warnings.size() == 1);
  for (double p : c.model->predict(x)) CHECK(std::abs(p - 2.5) < 1e-3);

  const auto d = make_data(2500, 3, 6, linear3, 0.01);
  std::vector<std::size_t> tr(2000), te(500);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 2000);
  const auto ytr = select(std::span<const double>(d.y), std::span<const std::size_t>(tr));
  const auto yte = select(std::span<const double>(d.y), std::span<const std::size_t>(te));
  MlpConfig lin;
  lin.hidden_layers = {32, 32};
  lin.epochs = 100;
  lin.batch_size = 32;
  lin.dropout_rate = 0.1;
  lin.learning_rate = 1e-2;
  const auto fit = train_mlp(d.x.select_rows(tr), ytr, lin);
  CHECK(r2(fit.model->predict(d.x.select_rows(te)), yte) > 0.95);
  CHECK(fit.report.loss.size() == 100);
  CHECK(fit.model->predict(d.x) == fit.model->predict(d.x));
}

TEST_CASE("mlp owns its input scaling and one-hot expansion") {
  auto d = make_data(300, 3, 7, smooth);
  for (std::size_t r = 0; r < 300; ++r) {
    d.x(r, 0) = 1000.0 + 500.0 * d.x(r, 0);
    d.x(r, 2) = static_cast<double>(r % 4);
  }
  MlpConfig cfg;
  cfg.hidden_layers = {6, 4};
  cfg.epochs = 3;
  const std::vector<int> cards = {0, 0, 4};
  const auto fit = train_mlp(d.x, d.y, cfg, cards);
  const auto& m = dynamic_cast<const MlpModel&>(*fit.model);
  REQUIRE(m.encoding().encoded_width() == 6);

  // Manual standardization and one-hot, then the bare network.
  double mean0 = 0, mean1 = 0;
  for (std::size_t r = 0; r < 300; ++r) {
    mean0 += d.x(r, 0) / 300.0;
    mean1 += d.x(r, 1) / 300.0;
  }
  double v0 = 0, v1 = 0;
  for (std::size_t r = 0; r < 300; ++r) {
    v0 += (d.x(r, 0) - mean0) * (d.x(r, 0) - mean0) / 300.0;
    v1 += (d.x(r, 1) - mean1) * (d.x(r, 1) - mean1) / 300.0;
  }
  double ym = 0, yv = 0;
  for (double v : d.y) ym += v / 300.0;
  for (double v : d.y) yv += (v - ym) * (v - ym) / 300.0;
  Eigen::MatrixXd manual = Eigen::MatrixXd::Zero(6, 300);
  for (std::size_t r = 0; r < 300; ++r) {
    const auto c = static_cast<Eigen::Index>(r);
    manual(0, c) = (d.x(r, 0) - mean0) / std::sqrt(v0);
    manual(1, c) = (d.x(r, 1) - mean1) / std::sqrt(v1);
    manual(2 + static_cast<Eigen::Index>(d.x(r, 2)), c) = 1.0;
  }
  const Eigen::RowVectorXd net_out = m.network().forward(manual);
  const auto pred = m.predict(d.x);
  for (std::size_t r = 0; r < 300; ++r)
    CHECK(pred[r] == doctest::Approx(net_out(static_cast<Eigen::Index>(r)) * std::sqrt(yv)).epsilon(1e-10));
}

TEST_CASE("mlp rejects bad input") {
  Matrix x(3, 1);
  std::vector<double> y = {1, 2, 3};
  x(1, 0) = std::nan("");
  CHECK_THROWS_AS(train_mlp(x, y, MlpConfig{}), TrainingError);
  CHECK_THROWS_AS(train_mlp(Matrix(1, 1), std::vector<double>{1.0}, MlpConfig{}), TrainingError);
}

TEST_CASE("model documents round-trip bit-exactly") {
  const auto d = make_data(300, 4, 8, smooth, 0.1);
  ForestConfig rf;
  rf.n_trees = 10;
  GbtConfig g;
  g.n_rounds = 20;
  MlpConfig n;
  n.hidden_layers = {8, 8};
  n.epochs = 5;
  std::vector<std::shared_ptr<const Regressor>> models = {
      train_forest(d.x, d.y, rf).model, train_gbt(d.x, d.y, g).model, train_mlp(d.x, d.y, n).model};
  for (const auto& m : models) {
    const auto text = model_to_json(*m, "abc").dump();
    const auto back = model_from_json(nlohmann::json::parse(text), "abc");
    CHECK(back->kind() == m->kind());
    CHECK(back->predict(d.x) == m->predict(d.x));
    CHECK(model_to_json(*back, "abc").dump() == text);
    CHECK_THROWS_AS(model_from_json(nlohmann::json::parse(text), "other"), DataError);
  }
}

TEST_CASE("grid search") {
  const auto d = make_data(400, 4, 9, smooth, 0.1);
  HyperGrid single;
  single.base = {{"n_rounds", 10}};
  auto r = grid_search(single, make_trainer(LearnerKind::kGbt), d.x, d.y, 3, 1);
  CHECK(r.best == single.base);
  CHECK(r.table.size() == 1);

  HyperGrid two;
  two.axes["n_rounds"] = {0, 50};
  r = grid_search(two, make_trainer(LearnerKind::kGbt), d.x, d.y, 5, 1);
  CHECK(r.table.size() == 2);
  CHECK(r.best.at("n_rounds") == 50);
  CHECK(r.table[1].mean_rmse < r.table[0].mean_rmse);

  // Failing points are recorded and skipped.
  HyperGrid bad;
  bad.axes["max_depth"] = {-1, 3};
  r = grid_search(bad, make_trainer(LearnerKind::kGbt), d.x, d.y, 3, 1);
  CHECK(r.table[0].failed);
  CHECK(r.best.at("max_depth") == 3);
  HyperGrid all_bad;
  all_bad.axes["max_depth"] = {-1};
  CHECK_THROWS_AS(grid_search(all_bad, make_trainer(LearnerKind::kGbt), d.x, d.y, 3, 1), TrainingError);

  // Ties resolve to the lexicographically smaller config.
  HyperGrid tie;
  tie.base = {{"n_rounds", 0}};
  tie.axes["max_depth"] = {5, 4};
  r = grid_search(tie, make_trainer(LearnerKind::kGbt), d.x, d.y, 3, 1);
  CHECK(r.best.at("max_depth") == 4);

  HyperGrid sizes;
  sizes.axes["max_depth"] = {4, 5, 6};
  sizes.axes["subsample"] = {0.5, 0.9};
  CHECK(sizes.expand().size() == 6);
}

TEST_CASE("grid validation names the offending key") {
  HyperGrid g;
  g.axes["max_depth"] = {4, 9};
  try {
    validate_grid(g, LearnerKind::kGbt, "learners.gbt.grid");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learners.gbt.grid.max_depth[1]") != std::string::npos);
  }
  HyperGrid ok;
  ok.axes["n_trees"] = {100, 400};
  CHECK_NOTHROW(validate_grid(ok, LearnerKind::kForest, "x"));
  HyperGrid lr;
  lr.axes["learning_rate"] = {0.05};
  CHECK_THROWS_AS(validate_grid(lr, LearnerKind::kMlp, "x"), ConfigError);
}
