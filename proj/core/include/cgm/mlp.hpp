#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace cgm {

// Small fixed-shape feed-forward network: input of dimension 3 or 4, three
// tanh hidden layers of equal width, linear 3-vector output. Weights are
// drawn zero-mean with variance 1/fan_in, biases start at zero.
class MlpField {
 public:
  static constexpr int kHiddenLayers = 3;

  MlpField() = default;
  MlpField(int input_dim, int hidden_dim, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  // weights[0]: hidden x input, weights[1..2]: hidden x hidden,
  // weights[3]: 3 x hidden; one bias vector per weight matrix.
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  // Flat parameter vector in declared order: W0, b0, W1, b1, W2, b2, W3, b3
  // with weight matrices flattened column-major.
  int parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  // Plain network evaluation, one column per input point.
  Eigen::Vector3d raw(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd raw_batch(const Eigen::MatrixXd& inputs) const;

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

// Gradient accumulator shaped like a field's parameters.
struct MlpGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  explicit MlpGradient(const MlpField& like);
  void set_zero();
  void add_scaled(const MlpGradient& other, double scale);
  Eigen::VectorXd flatten() const;  // same order as MlpField::parameters
};

}  // namespace cgm
