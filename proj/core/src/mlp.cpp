#include "cgm/mlp.hpp"

#include <cmath>

#include "cgm/errors.hpp"
#include "cgm/rng.hpp"

namespace cgm {

MlpField::MlpField(int input_dim, int hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  if (input_dim != 3 && input_dim != 4)
    throw InputError("MlpField: input dimension must be 3 or 4");
  if (hidden_dim < 1) throw InputError("MlpField: hidden dimension must be positive");
  Rng rng(seed);
  std::vector<int> in{input_dim, hidden_dim, hidden_dim, hidden_dim};
  std::vector<int> out{hidden_dim, hidden_dim, hidden_dim, 3};
  for (int l = 0; l < kHiddenLayers + 1; ++l) {
    Eigen::MatrixXd w(out[l], in[l]);
    double sd = 1.0 / std::sqrt(static_cast<double>(in[l]));
    for (int c = 0; c < w.cols(); ++c)
      for (int r = 0; r < w.rows(); ++r) w(r, c) = sd * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(out[l]));
  }
}

int MlpField::parameter_count() const {
  int n = 0;
  for (size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<int>(weights_[l].size() + biases_[l].size());
  return n;
}

Eigen::VectorXd MlpField::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  int at = 0;
  for (size_t l = 0; l < weights_.size(); ++l) {
    int nw = static_cast<int>(weights_[l].size());
    flat.segment(at, nw) = Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), nw);
    at += nw;
    flat.segment(at, biases_[l].size()) = biases_[l];
    at += static_cast<int>(biases_[l].size());
  }
  return flat;
}

void MlpField::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count())
    throw InputError("MlpField: parameter vector has the wrong length");
  int at = 0;
  for (size_t l = 0; l < weights_.size(); ++l) {
    int nw = static_cast<int>(weights_[l].size());
    Eigen::Map<Eigen::VectorXd>(weights_[l].data(), nw) = flat.segment(at, nw);
    at += nw;
    biases_[l] = flat.segment(at, biases_[l].size());
    at += static_cast<int>(biases_[l].size());
  }
}

Eigen::Vector3d MlpField::raw(const Eigen::VectorXd& input) const {
  return raw_batch(input);
}

Eigen::MatrixXd MlpField::raw_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dim_) throw InputError("MlpField: input dimension mismatch");
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < kHiddenLayers; ++l)
    a = ((weights_[l] * a).colwise() + biases_[l]).array().tanh().matrix();
  return (weights_[kHiddenLayers] * a).colwise() + biases_[kHiddenLayers];
}

MlpGradient::MlpGradient(const MlpField& like) {
  for (const auto& w : like.weights()) weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : like.biases()) biases.emplace_back(b.size());
  set_zero();
}

void MlpGradient::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpGradient::add_scaled(const MlpGradient& other, double scale) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
}

Eigen::VectorXd MlpGradient::flatten() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  Eigen::VectorXd flat(n);
  int at = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    int nw = static_cast<int>(weights[l].size());
    flat.segment(at, nw) = Eigen::Map<const Eigen::VectorXd>(weights[l].data(), nw);
    at += nw;
    flat.segment(at, biases[l].size()) = biases[l];
    at += static_cast<int>(biases[l].size());
  }
  return flat;
}

}  // namespace cgm
