#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "json.hpp"
#include "roadside/matrix.hpp"
#include "roadside/util/random.hpp"

namespace roadside::learn {

/// Maps raw input columns to network inputs: numeric columns are
/// standardized, categorical columns are one-hot expanded (codes outside
/// [0, cardinality) fall into slot 0, the reserved unknown code).
class InputEncoding {
 public:
  InputEncoding() = default;
  static InputEncoding fit(const Matrix& x, std::span<const int> cardinalities);

  std::size_t width() const { return mean_.size(); }
  std::size_t encoded_width() const { return encoded_width_; }
  /// Encoded inputs as columns (encoded_width x rows).
  Eigen::MatrixXd encode(const Matrix& x) const;
  void encode_row(std::span<const double> row, double* out) const;

  nlohmann::json to_json() const;
  static InputEncoding from_json(const nlohmann::json& doc);

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return scale_; }
  const std::vector<int>& cardinality() const { return cardinality_; }

 private:
  void finish();

  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<int> cardinality_;  // 0 for numeric columns
  std::vector<std::size_t> offset_;
  std::size_t encoded_width_ = 0;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Fully connected ReLU network with a single output.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  /// He-normal weights, zero biases. sizes = {inputs, hidden..., 1}.
  MlpNetwork(const std::vector<int>& sizes, bool output_relu, Rng& rng);

  /// Outputs for inputs given as columns; no dropout.
  Eigen::RowVectorXd forward(const Eigen::MatrixXd& x) const;

  /// RMSE loss over the batch and its gradient with respect to every
  /// parameter (layer-major: weight column-major, then bias). Dropout masks
  /// are drawn from `rng` when dropout_rate > 0.
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& target,
                           double dropout_rate, Rng* rng, std::vector<double>& gradient) const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);
  /// params -= step * gradient
  void apply_step(std::span<const double> gradient, double step);

  bool output_relu() const { return output_relu_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  nlohmann::json to_json() const;
  static MlpNetwork from_json(const nlohmann::json& doc);

 private:
  std::vector<DenseLayer> layers_;
  bool output_relu_ = true;
};

}  // namespace roadside::learn
