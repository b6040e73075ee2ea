#include "roadside/learn/mlp.hpp"

#include <cmath>

#include "roadside/errors.hpp"

namespace roadside::learn {

InputEncoding InputEncoding::fit(const Matrix& x, std::span<const int> cardinalities) {
  InputEncoding enc;
  const std::size_t d = x.cols();
  if (!cardinalities.empty() && cardinalities.size() != d)
    throw ConfigError("cardinalities must have one entry per input column");
  enc.mean_.assign(d, 0.0);
  enc.scale_.assign(d, 1.0);
  enc.cardinality_.assign(d, 0);
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < d; ++c) {
    if (!cardinalities.empty() && cardinalities[c] > 0) {
      enc.cardinality_[c] = cardinalities[c];
      continue;
    }
    double sum = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) sum += x(r, c);
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(ss / n);
    enc.mean_[c] = mean;
    enc.scale_[c] = sd > 0.0 ? sd : 1.0;
  }
  enc.finish();
  return enc;
}

void InputEncoding::finish() {
  offset_.resize(mean_.size());
  encoded_width_ = 0;
  for (std::size_t c = 0; c < mean_.size(); ++c) {
    offset_[c] = encoded_width_;
    encoded_width_ += cardinality_[c] > 0 ? static_cast<std::size_t>(cardinality_[c]) : 1;
  }
}

void InputEncoding::encode_row(std::span<const double> row, double* out) const {
  for (std::size_t c = 0; c < mean_.size(); ++c) {
    double* o = out + offset_[c];
    if (cardinality_[c] == 0) {
      *o = (row[c] - mean_[c]) / scale_[c];
      continue;
    }
    std::fill(o, o + cardinality_[c], 0.0);
    const double v = row[c];
    const bool in_range = v >= 0.0 && v < cardinality_[c] && v == std::floor(v);
    o[in_range ? static_cast<std::size_t>(v) : 0] = 1.0;
  }
}

Eigen::MatrixXd InputEncoding::encode(const Matrix& x) const {
  if (x.cols() != width())
    throw ConfigError("input width " + std::to_string(x.cols()) + " does not match model width " +
                      std::to_string(width()));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(encoded_width_), static_cast<Eigen::Index>(x.rows()));
  for (std::size_t r = 0; r < x.rows(); ++r) encode_row(x.row(r), out.col(static_cast<Eigen::Index>(r)).data());
  return out;
}

nlohmann::json InputEncoding::to_json() const {
  return {{"mean", mean_}, {"scale", scale_}, {"cardinality", cardinality_}};
}

InputEncoding InputEncoding::from_json(const nlohmann::json& doc) {
  InputEncoding enc;
  enc.mean_ = doc.at("mean").get<std::vector<double>>();
  enc.scale_ = doc.at("scale").get<std::vector<double>>();
  enc.cardinality_ = doc.at("cardinality").get<std::vector<int>>();
  if (enc.scale_.size() != enc.mean_.size() || enc.cardinality_.size() != enc.mean_.size())
    throw DataError("model document: inconsistent input encoding");
  enc.finish();
  return enc;
}

MlpNetwork::MlpNetwork(const std::vector<int>& sizes, bool output_relu, Rng& rng)
    : output_relu_(output_relu) {
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const int in = sizes[l - 1], out = sizes[l];
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = he(rng);
    layers_.push_back(std::move(layer));
  }
}

Eigen::RowVectorXd MlpNetwork::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    const bool last = l + 1 == layers_.size();
    a = (!last || output_relu_) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a.row(0);
}

double MlpNetwork::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& target,
                                     double dropout_rate, Rng* rng,
                                     std::vector<double>& gradient) const {
  const std::size_t n_layers = layers_.size();
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);  // post-activation (and dropout)
  std::vector<Eigen::MatrixXd> pre(n_layers);
  std::vector<Eigen::MatrixXd> masks(n_layers);
  acts[0] = x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 - dropout_rate;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l] = layers_[l].weight * acts[l];
    pre[l].colwise() += layers_[l].bias;
    const bool last = l + 1 == n_layers;
    if (last) {
      acts[l + 1] = output_relu_ ? Eigen::MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
      continue;
    }
    acts[l + 1] = pre[l].cwiseMax(0.0);
    if (dropout_rate > 0.0 && rng != nullptr) {
      masks[l].resize(pre[l].rows(), pre[l].cols());
      for (Eigen::Index j = 0; j < masks[l].cols(); ++j)
        for (Eigen::Index i = 0; i < masks[l].rows(); ++i)
          masks[l](i, j) = unit(*rng) < keep ? 1.0 / keep : 0.0;
      acts[l + 1] = acts[l + 1].cwiseProduct(masks[l]);
    }
  }
  const Eigen::RowVectorXd residual = acts[n_layers].row(0) - target;
  const double batch = static_cast<double>(x.cols());
  const double loss = std::sqrt(residual.squaredNorm() / batch);

  gradient.assign(parameter_count(), 0.0);
  if (loss == 0.0) return loss;
  Eigen::MatrixXd delta = residual / (batch * loss);  // dL/d(output)
  std::vector<std::size_t> offsets(n_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(layers_[l].weight.size() + layers_[l].bias.size());
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const bool last = l + 1 == n_layers;
    if (!last || output_relu_) delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    if (!last && masks[l].size() > 0) delta = delta.cwiseProduct(masks[l]);
    const auto& w = layers_[l].weight;
    Eigen::Map<Eigen::MatrixXd> gw(gradient.data() + offsets[l], w.rows(), w.cols());
    gw = delta * acts[l].transpose();
    Eigen::Map<Eigen::VectorXd> gb(gradient.data() + offsets[l] + w.size(), w.rows());
    gb = delta.rowwise().sum();
    if (l > 0) delta = w.transpose() * delta;
  }
  return loss;
}

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<double> MlpNetwork::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void MlpNetwork::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw ConfigError("parameter vector has the wrong size");
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy_n(values.data() + off, l.weight.size(), l.weight.data());
    off += static_cast<std::size_t>(l.weight.size());
    std::copy_n(values.data() + off, l.bias.size(), l.bias.data());
    off += static_cast<std::size_t>(l.bias.size());
  }
}

void MlpNetwork::apply_step(std::span<const double> gradient, double step) {
  std::size_t off = 0;
  for (auto& l : layers_) {
    Eigen::Map<const Eigen::VectorXd> gw(gradient.data() + off, l.weight.size());
    Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) -= step * gw;
    off += static_cast<std::size_t>(l.weight.size());
    l.bias -= step * Eigen::Map<const Eigen::VectorXd>(gradient.data() + off, l.bias.size());
    off += static_cast<std::size_t>(l.bias.size());
  }
}

nlohmann::json MlpNetwork::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    // Row-major weights: one array per output unit.
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(l.weight.cols()));
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) r[static_cast<std::size_t>(j)] = l.weight(i, j);
      rows.push_back(r);
    }
    layers.push_back({{"weight", rows},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"output_activation", output_relu_ ? "relu" : "linear"}, {"layers", layers}};
}

MlpNetwork MlpNetwork::from_json(const nlohmann::json& doc) {
  MlpNetwork net;
  net.output_relu_ = doc.at("output_activation").get<std::string>() == "relu";
  for (const auto& lj : doc.at("layers")) {
    const auto rows = lj.at("weight").get<std::vector<std::vector<double>>>();
    const auto bias = lj.at("bias").get<std::vector<double>>();
    if (rows.size() != bias.size() || rows.empty()) throw DataError("model document: bad layer");
    DenseLayer layer{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()),
                                     static_cast<Eigen::Index>(rows[0].size())),
                     Eigen::VectorXd(static_cast<Eigen::Index>(bias.size()))};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw DataError("model document: ragged weights");
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        layer.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      layer.bias(static_cast<Eigen::Index>(i)) = bias[i];
    }
    if (!net.layers_.empty() && net.layers_.back().weight.rows() != layer.weight.cols())
      throw DataError("model document: layer sizes do not chain");
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

}  // namespace roadside::learn
