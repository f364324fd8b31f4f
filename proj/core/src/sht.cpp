#include "cgm/sht.hpp"

#include <cmath>
#include <string>

#include "cgm/errors.hpp"

namespace cgm {

namespace {

template <typename T>
void kahan_add(T& sum, T& comp, const T& term) {
  T y = term - comp;
  T t = sum + y;
  comp = (t - sum) - y;
  sum = t;
}

}  // namespace

double dh_theta(int bandwidth, int j) { return M_PI * (2 * j + 1) / (4.0 * bandwidth); }

double dh_phi(int bandwidth, int k) { return M_PI * k / bandwidth; }

std::vector<double> dh_weights(int bandwidth) {
  const int B = bandwidth;
  std::vector<double> w(2 * B);
  for (int j = 0; j < 2 * B; ++j) {
    double theta = dh_theta(B, j);
    double s = 0.0, comp = 0.0;
    for (int k = 0; k < B; ++k)
      kahan_add(s, comp, std::sin((2 * k + 1) * theta) / (2 * k + 1));
    w[j] = (2.0 / B) * std::sin(theta) * s;
  }
  return w;
}

std::vector<double> legendre_table(int lmax, double theta) {
  const double x = std::cos(theta), s = std::sin(theta);
  std::vector<double> P((lmax + 1) * (lmax + 2) / 2);
  auto idx = [](int l, int m) { return l * (l + 1) / 2 + m; };
  P[0] = std::sqrt(1.0 / (4.0 * M_PI));
  for (int m = 1; m <= lmax; ++m)
    P[idx(m, m)] = -std::sqrt((2.0 * m + 1) / (2.0 * m)) * s * P[idx(m - 1, m - 1)];
  for (int m = 0; m < lmax; ++m)
    P[idx(m + 1, m)] = std::sqrt(2.0 * m + 3) * x * P[idx(m, m)];
  for (int m = 0; m <= lmax; ++m)
    for (int l = m + 2; l <= lmax; ++l) {
      double a = std::sqrt((4.0 * l * l - 1) / (static_cast<double>(l) * l - m * m));
      double a_prev =
          std::sqrt((4.0 * (l - 1.0) * (l - 1) - 1) / ((l - 1.0) * (l - 1) - m * m));
      P[idx(l, m)] = a * (x * P[idx(l - 1, m)] - P[idx(l - 2, m)] / a_prev);
    }
  return P;
}

HarmonicCoefficients sht_forward(const Eigen::MatrixXd& samples) {
  const int n = static_cast<int>(samples.rows());
  if (samples.cols() != n || n < 2 || n % 2 != 0)
    throw Error("sht_forward: samples must form a square grid with even side");
  const int B = n / 2;
  const std::vector<double> w = dh_weights(B);

  // azimuth phase table: exp(-i pi t / B) for t in [0, 2B)
  std::vector<std::complex<double>> phase(2 * B);
  for (int t = 0; t < 2 * B; ++t) phase[t] = std::polar(1.0, -M_PI * t / B);

  const int npairs = B * (B + 1) / 2;
  std::vector<std::complex<double>> acc(npairs, 0.0), comp(npairs, 0.0);
  auto idx = [](int l, int m) { return l * (l + 1) / 2 + m; };

  std::vector<std::complex<double>> F(B);
  for (int j = 0; j < 2 * B; ++j) {
    for (int m = 0; m < B; ++m) {
      std::complex<double> fm = 0.0;
      for (int k = 0; k < 2 * B; ++k) fm += samples(j, k) * phase[(m * k) % (2 * B)];
      F[m] = fm;
    }
    std::vector<double> P = legendre_table(B - 1, dh_theta(B, j));
    for (int l = 0; l < B; ++l)
      for (int m = 0; m <= l; ++m)
        kahan_add(acc[idx(l, m)], comp[idx(l, m)], w[j] * P[idx(l, m)] * F[m]);
  }

  HarmonicCoefficients out(B);
  const double scale = M_PI / B;
  for (int l = 0; l < B; ++l)
    for (int m = 0; m <= l; ++m) {
      std::complex<double> c = scale * acc[idx(l, m)];
      out.at(l, m) = c;
      if (m > 0) out.at(l, -m) = (m % 2 ? -1.0 : 1.0) * std::conj(c);
    }
  return out;
}

Eigen::MatrixXd sht_inverse(const HarmonicCoefficients& coeffs) {
  const int B = coeffs.bandwidth();
  if (B < 1) throw Error("sht_inverse: empty coefficients");
  Eigen::MatrixXd out(2 * B, 2 * B);

  std::vector<std::complex<double>> phase(2 * B);
  for (int t = 0; t < 2 * B; ++t) phase[t] = std::polar(1.0, M_PI * t / B);

  std::vector<std::complex<double>> G(B);
  for (int j = 0; j < 2 * B; ++j) {
    std::vector<double> P = legendre_table(B - 1, dh_theta(B, j));
    auto idx = [](int l, int m) { return l * (l + 1) / 2 + m; };
    for (int m = 0; m < B; ++m) {
      std::complex<double> g = 0.0;
      for (int l = m; l < B; ++l) g += coeffs.at(l, m) * P[idx(l, m)];
      G[m] = g;
    }
    for (int k = 0; k < 2 * B; ++k) {
      double v = G[0].real();
      for (int m = 1; m < B; ++m) v += 2.0 * (G[m] * phase[(m * k) % (2 * B)]).real();
      out(j, k) = v;
    }
  }
  return out;
}

double harmonic_evaluate(const HarmonicCoefficients& coeffs, const Eigen::Vector3d& x) {
  const int B = coeffs.bandwidth();
  double r = x.norm();
  if (r < 1e-300) throw Error("harmonic_evaluate: zero direction");
  double theta = std::acos(std::min(1.0, std::max(-1.0, x.z() / r)));
  double phi = std::atan2(x.y(), x.x());
  std::vector<double> P = legendre_table(B - 1, theta);
  auto idx = [](int l, int m) { return l * (l + 1) / 2 + m; };
  double v = 0.0;
  for (int m = 0; m < B; ++m) {
    std::complex<double> g = 0.0;
    for (int l = m; l < B; ++l) g += coeffs.at(l, m) * P[idx(l, m)];
    if (m == 0)
      v += g.real();
    else
      v += 2.0 * (g * std::polar(1.0, m * phi)).real();
  }
  return v;
}

}  // namespace cgm
