#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "cgm/sht.hpp"
#include "cgm/sphere_correspondence.hpp"

namespace cgm {

using SphereField = std::function<double(const Eigen::Vector3d&)>;

// Rotation about z by alpha, then y by beta, then z by gamma (applied
// right to left: R = Rz(alpha) Ry(beta) Rz(gamma)).
Eigen::Matrix3d euler_zyz(double alpha, double beta, double gamma);

// Angle of the relative rotation a^T b, in [0, pi].
double rotation_geodesic_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Field samples on the bandwidth-B grid (row = colatitude, col = azimuth).
Eigen::MatrixXd sample_field(int bandwidth, const SphereField& field);

// Mean of a sampled field over the sphere (quadrature integral / 4 pi).
double field_mean(const Eigen::MatrixXd& samples);

// Quadrature overlap integral of two fields on the bandwidth-B grid.
double sphere_overlap(int bandwidth, const SphereField& a, const SphereField& b);

// Correlation C(R) = integral of f(R x) g(x) over the sphere, evaluated on
// the full Euler grid alpha_p = pi p / B, beta_j = the colatitude grid,
// gamma_q = pi q / B via the harmonic factorization.
struct CorrelationVolume {
  int bandwidth = 0;
  std::vector<Eigen::MatrixXd> values;  // values[j](p, q)
  double max_imag = 0.0;                // residual imaginary part, ~0 for real fields

  struct Peak {
    int alpha_index = 0, beta_index = 0, gamma_index = 0;
    double value = 0.0;
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
  };
  Peak peak() const;
};
CorrelationVolume so3_correlation(const HarmonicCoefficients& f, const HarmonicCoefficients& g);

struct AlignmentResult {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double score = 0.0;     // overlap of the centered fields at the result
  double max_imag = 0.0;  // from the correlation volume
  bool degenerate = false;
};

// Rotation R maximizing the overlap of reference(R x) with other(x). Both
// fields are mean-centered before correlation. A field with no variation
// yields the identity with the degenerate flag set. With refine, the grid
// peak is polished by per-angle golden-section ascent on the quadrature
// overlap of the raw fields.
AlignmentResult align_fields(int bandwidth, const SphereField& reference,
                             const SphereField& other, bool refine = true);

// Alignment of the log conformal factor fields of two parameterizations.
AlignmentResult align_parameterizations(const SphericalTriangulation& reference,
                                        const SphericalTriangulation& other, int bandwidth = 16,
                                        bool refine = true);

}  // namespace cgm
