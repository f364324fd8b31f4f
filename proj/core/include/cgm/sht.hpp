#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

namespace cgm {

// Equiangular colatitude/azimuth grid with 2B rows and 2B columns:
// theta_j = pi(2j+1)/(4B), phi_k = pi k/B.
double dh_theta(int bandwidth, int j);
double dh_phi(int bandwidth, int k);

// Quadrature weights over the colatitude rows; they absorb the sin(theta)
// area factor and integrate cos-polynomials up to degree 2B-1 exactly, so
// the weights sum to exactly 2.
std::vector<double> dh_weights(int bandwidth);

// Orthonormal spherical-harmonic basis functions theta part, with
// Condon-Shortley phase: Y_lm = P(l, m, theta) exp(i m phi). All orders
// 0 <= m <= l <= lmax, indexed l(l+1)/2 + m.
std::vector<double> legendre_table(int lmax, double theta);

// Dense coefficient block for degrees l < bandwidth, all orders |m| <= l,
// indexed l^2 + l + m.
class HarmonicCoefficients {
 public:
  HarmonicCoefficients() = default;
  explicit HarmonicCoefficients(int bandwidth)
      : bandwidth_(bandwidth), coeff_(static_cast<size_t>(bandwidth) * bandwidth) {}

  int bandwidth() const { return bandwidth_; }
  std::complex<double>& at(int l, int m) { return coeff_[l * l + l + m]; }
  const std::complex<double>& at(int l, int m) const { return coeff_[l * l + l + m]; }
  std::vector<std::complex<double>>& raw() { return coeff_; }
  const std::vector<std::complex<double>>& raw() const { return coeff_; }

 private:
  int bandwidth_ = 0;
  std::vector<std::complex<double>> coeff_;
};

// Forward transform of a real field sampled on the 2B x 2B grid (row j =
// colatitude, column k = azimuth). Exact for fields band-limited below B.
// The colatitude reduction uses compensated summation.
HarmonicCoefficients sht_forward(const Eigen::MatrixXd& samples);

// Synthesis back onto the grid. Coefficients must carry the real-field
// symmetry c(l,-m) = (-1)^m conj(c(l,m)).
Eigen::MatrixXd sht_inverse(const HarmonicCoefficients& coeffs);

// Pointwise synthesis at an arbitrary unit direction.
double harmonic_evaluate(const HarmonicCoefficients& coeffs, const Eigen::Vector3d& x);

}  // namespace cgm
