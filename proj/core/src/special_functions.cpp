#include "cgm/special_functions.hpp"

#include <cmath>

namespace cgm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// zeta(2n) for n = 1..14; beyond that zeta(2n) - 1 is below 4e-9 and the
// series coefficient is already < 1e-11, so 1.0 is exact to double precision.
constexpr double kZetaEven[] = {
    1.6449340668482264365, 1.0823232337111381916, 1.0173430619844491397,
    1.0040773561979443394, 1.0009945751278180853, 1.0002460865533080483,
    1.0000612481350587048, 1.0000152822594086519, 1.0000038172932649998,
    1.0000009539620338728, 1.0000002384505027277, 1.0000000596081890513,
    1.0000000149015548884, 1.0000000037253340248,
};

// Series for t in [0, pi]: Cl2(t) = t - t log t + t * sum_n zeta(2n)/(n(2n+1)) (t/2pi)^{2n}.
double clausen2_series(double t) {
  if (t == 0.0) return 0.0;
  double r = (t / kTwoPi) * (t / kTwoPi);
  double rn = 1.0;
  double sum = 0.0;
  for (int n = 1; n <= 60; ++n) {
    rn *= r;
    double zeta = n <= 14 ? kZetaEven[n - 1] : 1.0;
    double term = zeta / (static_cast<double>(n) * (2 * n + 1)) * rn;
    sum += term;
    if (term < 1e-18) break;
  }
  return t - t * std::log(t) + t * sum;
}

}  // namespace

double clausen2(double x) {
  double t = std::fmod(x, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  if (t > 0.5 * kTwoPi) return -clausen2_series(kTwoPi - t);
  return clausen2_series(t);
}

double lobachevsky(double x) { return 0.5 * clausen2(2.0 * x); }

}  // namespace cgm
