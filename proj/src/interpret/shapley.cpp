#include "roadside/interpret/shapley.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <numeric>

#include "roadside/errors.hpp"
#include "roadside/util/parallel.hpp"
#include "roadside/util/random.hpp"
#include "roadside/util/text.hpp"

namespace roadside::interpret {

namespace {

void check_inputs(std::span<const double> x, const Matrix& background) {
  if (background.rows() == 0) throw ConfigError("shapley: background set is empty");
  if (background.cols() != x.size())
    throw ConfigError("shapley: background width " + std::to_string(background.cols()) +
                      " does not match sample width " + std::to_string(x.size()));
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> evaluate(const BatchModel& model, const Matrix& rows) {
  auto out = model(rows);
  if (out.size() != rows.rows()) throw ConfigError("shapley: model returned the wrong number of outputs");
  return out;
}

}  // namespace

Attribution shapley_sample(const BatchModel& model, std::span<const double> x,
                           const Matrix& background, std::size_t n_perm, std::uint64_t seed) {
  check_inputs(x, background);
  if (n_perm == 0) throw ConfigError("shapley: n_perm must be >= 1");
  const std::size_t d = x.size();
  const std::size_t nb = background.rows();
  // A block is one random ordering, its d rotations and the reverse of each,
  // so inside a block every feature takes every position equally often.
  const std::size_t block_size = 2 * d;
  const std::size_t blocks = (n_perm + block_size - 1) / block_size;
  Rng rng = make_rng(seed, 0);

  std::vector<std::size_t> bg_order(nb);
  std::iota(bg_order.begin(), bg_order.end(), std::size_t{0});
  std::shuffle(bg_order.begin(), bg_order.end(), rng);
  std::size_t next_bg = 0;

  Attribution out;
  out.baseline = mean_of(evaluate(model, background));
  {
    Matrix one(1, d);
    std::copy(x.begin(), x.end(), one.row(0).begin());
    out.prediction = evaluate(model, one)[0];
  }

  // Per background row: sum and sum of squares of pair contributions, and
  // the same for their total (column d).
  const std::size_t w = d + 1;
  std::vector<double> zsum(nb * w, 0.0), zsumsq(nb * w, 0.0);
  std::vector<std::size_t> zcount(nb, 0);

  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const std::size_t rows_per_order = d + 1;
  std::vector<std::vector<std::size_t>> orders(block_size, std::vector<std::size_t>(d));
  std::vector<std::size_t> pair_z(d);
  Matrix rows(block_size * rows_per_order, d);
  std::vector<double> contrib(d);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t s = 0; s < d; ++s) {
      auto& fwd = orders[2 * s];
      auto& rev = orders[2 * s + 1];
      for (std::size_t k = 0; k < d; ++k) fwd[k] = perm[(k + s) % d];
      std::reverse_copy(fwd.begin(), fwd.end(), rev.begin());
      // An ordering and its reverse share a background row.
      pair_z[s] = bg_order[next_bg++ % nb];
      const auto z = background.row(pair_z[s]);
      for (std::size_t o = 2 * s; o < 2 * s + 2; ++o) {
        const std::size_t base = o * rows_per_order;
        std::copy(z.begin(), z.end(), rows.row(base).begin());
        for (std::size_t step = 0; step < d; ++step) {
          auto next = rows.row(base + step + 1);
          std::copy(rows.row(base + step).begin(), rows.row(base + step).end(), next.begin());
          next[orders[o][step]] = x[orders[o][step]];
        }
      }
    }
    const auto f = evaluate(model, rows);
    for (std::size_t s = 0; s < d; ++s) {
      std::fill(contrib.begin(), contrib.end(), 0.0);
      for (std::size_t o = 2 * s; o < 2 * s + 2; ++o) {
        const std::size_t base = o * rows_per_order;
        for (std::size_t step = 0; step < d; ++step)
          contrib[orders[o][step]] += 0.5 * (f[base + step + 1] - f[base + step]);
      }
      const std::size_t zi = pair_z[s];
      double total = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        zsum[zi * w + j] += contrib[j];
        zsumsq[zi * w + j] += contrib[j] * contrib[j];
        total += contrib[j];
      }
      zsum[zi * w + d] += total;
      zsumsq[zi * w + d] += total * total;
      ++zcount[zi];
    }
  }

  // Post-stratify on the background row so uneven visit counts do not
  // reweight the background. The variance is pooled within rows when rows
  // repeat, and taken across pairs otherwise.
  std::size_t used = 0, pairs = 0, repeated = 0;
  for (std::size_t zi = 0; zi < nb; ++zi) {
    if (zcount[zi] == 0) continue;
    ++used;
    pairs += zcount[zi];
    if (zcount[zi] > 1) repeated += zcount[zi] - 1;
  }
  const double m = static_cast<double>(used);
  double inv_count_sum = 0.0;
  for (std::size_t zi = 0; zi < nb; ++zi)
    if (zcount[zi] > 0) inv_count_sum += 1.0 / static_cast<double>(zcount[zi]);

  std::vector<double> estimate(w, 0.0), se(w, 0.0);
  for (std::size_t c = 0; c < w; ++c) {
    double acc = 0.0, within = 0.0, all_sum = 0.0, all_sumsq = 0.0;
    for (std::size_t zi = 0; zi < nb; ++zi) {
      if (zcount[zi] == 0) continue;
      const double n = static_cast<double>(zcount[zi]);
      const double s1 = zsum[zi * w + c], s2 = zsumsq[zi * w + c];
      acc += s1 / n;
      within += std::max(0.0, s2 - s1 * s1 / n);
      all_sum += s1;
      all_sumsq += s2;
    }
    estimate[c] = acc / m;
    if (repeated > 0) {
      const double var = within / static_cast<double>(repeated);
      se[c] = std::sqrt(var * inv_count_sum) / m;
    } else if (pairs > 1) {
      const double np = static_cast<double>(pairs);
      const double var = std::max(0.0, (all_sumsq - all_sum * all_sum / np) / (np - 1.0));
      se[c] = std::sqrt(var / np);
    }
  }
  out.phi.assign(estimate.begin(), estimate.begin() + static_cast<std::ptrdiff_t>(d));
  out.se.assign(se.begin(), se.begin() + static_cast<std::ptrdiff_t>(d));
  out.efficiency_se = se[d];
  return out;
}

Attribution shapley_exact(const BatchModel& model, std::span<const double> x,
                          const Matrix& background) {
  check_inputs(x, background);
  const std::size_t d = x.size();
  if (d > kMaxExactFeatures)
    throw ConfigError("shapley_exact: " + std::to_string(d) + " features exceeds the limit of " +
                      std::to_string(kMaxExactFeatures));
  const std::size_t n_coalitions = std::size_t{1} << d;
  const std::size_t nb = background.rows();

  // v(S) for every coalition, S encoded as a bit mask over features.
  std::vector<double> value(n_coalitions);
  constexpr std::size_t kCoalitionsPerBatch = 64;
  for (std::size_t start = 0; start < n_coalitions; start += kCoalitionsPerBatch) {
    const std::size_t count = std::min(kCoalitionsPerBatch, n_coalitions - start);
    Matrix rows(count * nb, d);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t mask = start + c;
      for (std::size_t b = 0; b < nb; ++b) {
        auto r = rows.row(c * nb + b);
        const auto z = background.row(b);
        for (std::size_t j = 0; j < d; ++j) r[j] = (mask >> j) & 1U ? x[j] : z[j];
      }
    }
    const auto f = evaluate(model, rows);
    for (std::size_t c = 0; c < count; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < nb; ++b) s += f[c * nb + b];
      value[start + c] = s / static_cast<double>(nb);
    }
  }

  // weight(|S|) = |S|! (d - |S| - 1)! / d!
  std::vector<double> weight(d);
  for (std::size_t s = 0; s < d; ++s) {
    double w = 1.0 / static_cast<double>(d);
    // 1 / (d * C(d-1, s))
    for (std::size_t i = 1; i <= s; ++i) w *= static_cast<double>(i) / static_cast<double>(d - s - 1 + i);
    weight[s] = w;
  }

  Attribution out;
  out.phi.assign(d, 0.0);
  out.se.assign(d, 0.0);
  out.baseline = value[0];
  out.prediction = value[n_coalitions - 1];
  for (std::size_t mask = 0; mask < n_coalitions; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t j = 0; j < d; ++j) {
      if ((mask >> j) & 1U) continue;
      out.phi[j] += weight[size] * (value[mask | (std::size_t{1} << j)] - value[mask]);
    }
  }
  return out;
}

MsMas aggregate_ms_mas(const Matrix& a) {
  if (a.rows() == 0) throw ConfigError("ms/mas: attribution matrix is empty");
  MsMas out;
  out.ms.assign(a.cols(), 0.0);
  out.mas.assign(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) {
      out.ms[c] += a(r, c);
      out.mas[c] += std::abs(a(r, c));
    }
  const double n = static_cast<double>(a.rows());
  for (std::size_t c = 0; c < a.cols(); ++c) {
    out.ms[c] /= n;
    out.mas[c] /= n;
  }
  out.ranking.resize(a.cols());
  std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t i, std::size_t j) { return out.mas[i] > out.mas[j]; });
  return out;
}

std::string ShapleyReport::values_csv() const {
  CsvWriter w({"sample_id", "feature", "value"});
  for (std::size_t r = 0; r < values.rows(); ++r)
    for (std::size_t c = 0; c < values.cols(); ++c) {
      w.cell(sample_ids[r]).cell(feature_names[c]).cell(values(r, c));
      w.end_row();
    }
  return w.str();
}

std::string ShapleyReport::summary_csv() const {
  CsvWriter w({"feature", "ms", "mas", "rank"});
  std::vector<std::size_t> rank(summary.ranking.size());
  for (std::size_t i = 0; i < summary.ranking.size(); ++i) rank[summary.ranking[i]] = i + 1;
  for (std::size_t c = 0; c < feature_names.size(); ++c) {
    w.cell(feature_names[c]).cell(summary.ms[c]).cell(summary.mas[c]).cell(rank[c]);
    w.end_row();
  }
  return w.str();
}

ShapleyReport explain(const BatchModel& model, const Matrix& samples,
                      std::span<const std::size_t> sample_ids, const Matrix& background,
                      std::size_t n_perm, std::uint64_t seed,
                      std::vector<std::string> feature_names) {
  if (samples.rows() == 0) throw ConfigError("explain: sample selection is empty");
  if (sample_ids.size() != samples.rows()) throw ConfigError("explain: one id per sample required");
  if (feature_names.size() != samples.cols()) throw ConfigError("explain: one name per feature required");
  ShapleyReport report;
  report.feature_names = std::move(feature_names);
  report.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  report.values = Matrix(samples.rows(), samples.cols());
  report.standard_errors = Matrix(samples.rows(), samples.cols());
  report.predictions.resize(samples.rows());
  report.n_permutations = n_perm;
  report.background_size = background.rows();
  report.seed = seed;
  std::vector<double> baselines(samples.rows());
  parallel_for(samples.rows(), [&](std::size_t i) {
    const auto a = shapley_sample(model, samples.row(i), background, n_perm, substream_seed(seed, sample_ids[i]));
    std::copy(a.phi.begin(), a.phi.end(), report.values.row(i).begin());
    std::copy(a.se.begin(), a.se.end(), report.standard_errors.row(i).begin());
    report.predictions[i] = a.prediction;
    baselines[i] = a.baseline;
  });
  report.baseline = baselines.front();
  report.summary = aggregate_ms_mas(report.values);
  return report;
}

Matrix select_background(const Matrix& data, std::size_t size, std::uint64_t seed) {
  if (data.rows() <= size) return data;
  std::vector<std::size_t> idx(data.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0xBAC6);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return data.select_rows(idx);
}

}  // namespace roadside::interpret
