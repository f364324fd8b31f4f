#include "cgm/wigner.hpp"

#include <cmath>

#include "cgm/errors.hpp"

namespace cgm {

namespace {

// d^j_{j,m}(beta) = (-1)^{j-m} sqrt(binom(2j, j-m)) cos(beta/2)^{j+m}
// sin(beta/2)^{j-m}, evaluated in log space to survive large j.
double top_row_seed(int j, int m, double c, double s) {
  if (c == 0.0 && j + m > 0) return 0.0;
  if (s == 0.0 && j - m > 0) return 0.0;
  double log_mag = 0.5 * (std::lgamma(2.0 * j + 1) - std::lgamma(j - m + 1.0) -
                          std::lgamma(j + m + 1.0));
  if (j + m > 0) log_mag += (j + m) * std::log(c);
  if (j - m > 0) log_mag += (j - m) * std::log(s);
  double sign = (j - m) % 2 ? -1.0 : 1.0;
  return sign * std::exp(log_mag);
}

// Seed value d^{lmin}_{m'm} where lmin = max(|m|, |m'|), reduced to the top
// row by the symmetries d_{m'm} = (-1)^{m'-m} d_{mm'} = d_{-m,-m'}.
double seed(int mp, int m, double c, double s) {
  double parity = (mp - m) % 2 ? -1.0 : 1.0;
  if (std::abs(mp) >= std::abs(m))
    return mp >= 0 ? top_row_seed(mp, m, c, s) : parity * top_row_seed(-mp, -m, c, s);
  return m >= 0 ? parity * top_row_seed(m, mp, c, s) : top_row_seed(-m, -mp, c, s);
}

}  // namespace

std::vector<Eigen::MatrixXd> wigner_d_matrices(int lmax, double beta) {
  if (lmax < 0) throw Error("wigner_d_matrices: negative degree");
  const double x = std::cos(beta);
  const double c = std::cos(0.5 * beta), s = std::sin(0.5 * beta);

  std::vector<Eigen::MatrixXd> d(lmax + 1);
  for (int l = 0; l <= lmax; ++l) d[l].setZero(2 * l + 1, 2 * l + 1);
  d[0](0, 0) = 1.0;

  for (int mp = -lmax; mp <= lmax; ++mp)
    for (int m = -lmax; m <= lmax; ++m) {
      int lmin = std::max(std::abs(mp), std::abs(m));
      if (lmin > lmax) continue;
      double prev2 = 0.0;
      double prev = seed(mp, m, c, s);
      d[lmin](mp + lmin, m + lmin) = prev;
      for (int l = lmin; l < lmax; ++l) {
        double ap = std::sqrt(((l + 1.0) * (l + 1) - m * m) *
                              ((l + 1.0) * (l + 1) - static_cast<double>(mp) * mp)) /
                    ((l + 1.0) * (2 * l + 1));
        double b = l == 0 ? 0.0 : static_cast<double>(m) * mp / (l * (l + 1.0));
        double am = l == 0 ? 0.0
                           : std::sqrt((static_cast<double>(l) * l - m * m) *
                                       (static_cast<double>(l) * l -
                                        static_cast<double>(mp) * mp)) /
                                 (l * (2.0 * l + 1));
        double next = ((x - b) * prev - am * prev2) / ap;
        d[l + 1](mp + l + 1, m + l + 1) = next;
        prev2 = prev;
        prev = next;
      }
    }
  return d;
}

}  // namespace cgm
