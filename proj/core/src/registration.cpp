#include "cgm/registration.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <complex>

#include "cgm/errors.hpp"
#include "cgm/wigner.hpp"

namespace cgm {

Eigen::Matrix3d euler_zyz(double alpha, double beta, double gamma) {
  return (Eigen::AngleAxisd(alpha, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(beta, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(gamma, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

double rotation_geodesic_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  double t = 0.5 * ((a.transpose() * b).trace() - 1.0);
  return std::acos(std::min(1.0, std::max(-1.0, t)));
}

Eigen::MatrixXd sample_field(int bandwidth, const SphereField& field) {
  const int B = bandwidth;
  Eigen::MatrixXd out(2 * B, 2 * B);
  for (int j = 0; j < 2 * B; ++j) {
    double theta = dh_theta(B, j), st = std::sin(theta), ct = std::cos(theta);
    for (int k = 0; k < 2 * B; ++k) {
      double phi = dh_phi(B, k);
      out(j, k) = field(Eigen::Vector3d(st * std::cos(phi), st * std::sin(phi), ct));
    }
  }
  return out;
}

double field_mean(const Eigen::MatrixXd& samples) {
  const int B = static_cast<int>(samples.rows()) / 2;
  auto w = dh_weights(B);
  double sum = 0.0;
  for (int j = 0; j < 2 * B; ++j) sum += w[j] * samples.row(j).sum();
  return (M_PI / B) * sum / (4.0 * M_PI);
}

double sphere_overlap(int bandwidth, const SphereField& a, const SphereField& b) {
  const int B = bandwidth;
  auto w = dh_weights(B);
  double sum = 0.0;
  for (int j = 0; j < 2 * B; ++j) {
    double theta = dh_theta(B, j), st = std::sin(theta), ct = std::cos(theta);
    double row = 0.0;
    for (int k = 0; k < 2 * B; ++k) {
      double phi = dh_phi(B, k);
      Eigen::Vector3d x(st * std::cos(phi), st * std::sin(phi), ct);
      row += a(x) * b(x);
    }
    sum += w[j] * row;
  }
  return (M_PI / B) * sum;
}

CorrelationVolume::Peak CorrelationVolume::peak() const {
  Peak best;
  best.value = -std::numeric_limits<double>::infinity();
  const int B = bandwidth;
  for (int j = 0; j < 2 * B; ++j)
    for (int p = 0; p < 2 * B; ++p)
      for (int q = 0; q < 2 * B; ++q)
        if (values[j](p, q) > best.value) {
          best.value = values[j](p, q);
          best.beta_index = j;
          best.alpha_index = p;
          best.gamma_index = q;
        }
  best.alpha = dh_phi(B, best.alpha_index);
  best.beta = dh_theta(B, best.beta_index);
  best.gamma = dh_phi(B, best.gamma_index);
  return best;
}

CorrelationVolume so3_correlation(const HarmonicCoefficients& f,
                                  const HarmonicCoefficients& g) {
  const int B = f.bandwidth();
  if (g.bandwidth() != B) throw Error("so3_correlation: bandwidth mismatch");
  if (B < 1) throw Error("so3_correlation: empty coefficients");

  using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;
  const int nm = 2 * B - 1;  // orders -(B-1)..B-1

  ComplexMatrix E(2 * B, nm);
  for (int p = 0; p < 2 * B; ++p)
    for (int m = -(B - 1); m <= B - 1; ++m)
      E(p, m + B - 1) = std::polar(1.0, m * dh_phi(B, p));

  CorrelationVolume vol;
  vol.bandwidth = B;
  vol.values.resize(2 * B);
  ComplexMatrix T(nm, nm);
  for (int j = 0; j < 2 * B; ++j) {
    auto d = wigner_d_matrices(B - 1, dh_theta(B, j));
    T.setZero();
    for (int m = -(B - 1); m <= B - 1; ++m)
      for (int mp = -(B - 1); mp <= B - 1; ++mp) {
        std::complex<double> t = 0.0;
        for (int l = std::max(std::abs(m), std::abs(mp)); l < B; ++l)
          t += f.at(l, m) * std::conj(g.at(l, mp)) * d[l](m + l, mp + l);
        T(m + B - 1, mp + B - 1) = t;
      }
    ComplexMatrix C = E * T * E.transpose();
    vol.values[j] = C.real();
    vol.max_imag = std::max(vol.max_imag, C.imag().cwiseAbs().maxCoeff());
  }
  return vol;
}

namespace {

// Golden-section maximization over [lo, hi].
double golden_max(const std::function<double(double)>& fn, double lo, double hi, int iters) {
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = fn(x1), f2 = fn(x2);
  for (int it = 0; it < iters; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = fn(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = fn(x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

AlignmentResult align_fields(int bandwidth, const SphereField& reference,
                             const SphereField& other, bool refine) {
  const int B = bandwidth;
  if (B < 2) throw Error("align_fields: bandwidth must be at least 2");
  Eigen::MatrixXd F = sample_field(B, reference);
  Eigen::MatrixXd G = sample_field(B, other);

  AlignmentResult result;
  double var_f = F.maxCoeff() - F.minCoeff();
  double var_g = G.maxCoeff() - G.minCoeff();
  if (var_f < 1e-12 || var_g < 1e-12) {
    result.degenerate = true;
    return result;
  }

  double mean_f = field_mean(F), mean_g = field_mean(G);
  F.array() -= mean_f;
  G.array() -= mean_g;

  CorrelationVolume vol = so3_correlation(sht_forward(F), sht_forward(G));
  auto peak = vol.peak();
  result.alpha = peak.alpha;
  result.beta = peak.beta;
  result.gamma = peak.gamma;
  result.score = peak.value;
  result.max_imag = vol.max_imag;

  if (refine) {
    auto w = dh_weights(B);
    auto overlap = [&](double alpha, double beta, double gamma) {
      Eigen::Matrix3d R = euler_zyz(alpha, beta, gamma);
      double sum = 0.0;
      for (int j = 0; j < 2 * B; ++j) {
        double theta = dh_theta(B, j), st = std::sin(theta), ct = std::cos(theta);
        double row = 0.0;
        for (int k = 0; k < 2 * B; ++k) {
          double phi = dh_phi(B, k);
          Eigen::Vector3d x(st * std::cos(phi), st * std::sin(phi), ct);
          row += (reference(R * x) - mean_f) * G(j, k);
        }
        sum += w[j] * row;
      }
      return (M_PI / B) * sum;
    };
    double window = 0.5 * M_PI / B;
    double a = result.alpha, b = result.beta, g = result.gamma;
    for (int sweep = 0; sweep < 2; ++sweep) {
      a = golden_max([&](double t) { return overlap(t, b, g); }, a - window, a + window, 24);
      b = golden_max([&](double t) { return overlap(a, t, g); }, std::max(0.0, b - window),
                     std::min(M_PI, b + window), 24);
      g = golden_max([&](double t) { return overlap(a, b, t); }, g - window, g + window, 24);
    }
    result.alpha = a;
    result.beta = b;
    result.gamma = g;
    result.score = overlap(a, b, g);
  }
  result.rotation = euler_zyz(result.alpha, result.beta, result.gamma);
  return result;
}

AlignmentResult align_parameterizations(const SphericalTriangulation& reference,
                                        const SphericalTriangulation& other, int bandwidth,
                                        bool refine) {
  SphereField ref = [&](const Eigen::Vector3d& x) { return reference.log_factor_at(x); };
  SphereField oth = [&](const Eigen::Vector3d& x) { return other.log_factor_at(x); };
  return align_fields(bandwidth, ref, oth, refine);
}

}  // namespace cgm
