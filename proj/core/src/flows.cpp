#include "cgm/flows.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cgm/errors.hpp"
#include "cgm/rng.hpp"

namespace cgm {

namespace {

constexpr double kNu = 1.0 / (4.0 * M_PI);

Eigen::RowVectorXd col_dots(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).colwise().sum().matrix();
}

// Forward pass of the extended-projected field on a batch of points (one
// column each), optionally with the three coordinate-axis tangents needed
// for exact divergences. Everything the reverse pass needs is cached.
struct FieldCache {
  Eigen::RowVectorXd r, invr, xn;
  Eigen::MatrixXd xhat;               // 3 x B, x normalized
  Eigen::MatrixXd a0;                 // network input, in_dim x B
  Eigen::MatrixXd act[3];             // hidden activations, h x B
  Eigen::MatrixXd n;                  // raw network output, 3 x B
  Eigen::MatrixXd g;                  // tangent-projected field, 3 x B
  Eigen::MatrixXd u[3];               // d xhat / d x_e, 3 x B
  Eigen::MatrixXd dz[3][3], da[3][3]; // tangent pre/post activations [layer][axis]
  Eigen::MatrixXd dn[3];              // output tangents, 3 x B
  Eigen::VectorXd div;                // divergence per column
  bool has_div = false;
};

void field_forward(const MlpField& f, const Eigen::MatrixXd& x, double t, bool want_div,
                   FieldCache& c) {
  const auto& W = f.weights();
  const auto& b = f.biases();
  const int B = static_cast<int>(x.cols());

  c.r = x.colwise().norm();
  if ((c.r.array() <= 0.0).any()) throw Error("field evaluation at the origin");
  c.invr = c.r.cwiseInverse();
  c.xhat = x * c.invr.asDiagonal();

  c.a0.resize(f.input_dim(), B);
  c.a0.topRows(3) = c.xhat;
  if (f.input_dim() == 4) c.a0.row(3).setConstant(t);

  const Eigen::MatrixXd* prev = &c.a0;
  for (int l = 0; l < MlpField::kHiddenLayers; ++l) {
    c.act[l] = ((W[l] * (*prev)).colwise() + b[l]).array().tanh().matrix();
    prev = &c.act[l];
  }
  c.n = (W[3] * c.act[2]).colwise() + b[3];
  c.xn = col_dots(c.xhat, c.n);
  c.g = c.n - c.xhat * c.xn.asDiagonal();

  c.has_div = want_div;
  if (!want_div) return;

  for (int e = 0; e < 3; ++e) {
    c.u[e] = -(c.xhat * c.xhat.row(e).asDiagonal());
    c.u[e].row(e).array() += 1.0;
    c.u[e] = c.u[e] * c.invr.asDiagonal();

    c.dz[0][e] = W[0].leftCols(3) * c.u[e];
    for (int l = 0; l < MlpField::kHiddenLayers; ++l) {
      if (l > 0) c.dz[l][e] = W[l] * c.da[l - 1][e];
      c.da[l][e] =
          ((1.0 - c.act[l].array().square()) * c.dz[l][e].array()).matrix();
    }
    c.dn[e] = W[3] * c.da[2][e];
  }

  c.div = Eigen::VectorXd::Zero(B);
  for (int e = 0; e < 3; ++e) {
    Eigen::RowVectorXd un = col_dots(c.u[e], c.n);
    Eigen::RowVectorXd xdn = col_dots(c.xhat, c.dn[e]);
    c.div += (c.dn[e].row(e) - c.xhat.row(e).cwiseProduct(un + xdn) -
              c.u[e].row(e).cwiseProduct(c.xn))
                 .transpose();
  }
}

// Reverse pass: cotangents of the projected field (gbar) and the divergence
// (divbar) propagate into parameter gradients and, optionally, into the
// input points. Either cotangent may be empty.
void field_backward(const MlpField& f, const FieldCache& c, const Eigen::MatrixXd& gbar,
                    const Eigen::VectorXd& divbar, MlpGradient& grad,
                    Eigen::MatrixXd* xbar_out) {
  const auto& W = f.weights();
  const int B = static_cast<int>(c.xhat.cols());
  const bool use_g = gbar.size() > 0;
  const bool use_div = divbar.size() > 0;
  if (use_div && !c.has_div) throw Error("field_backward: cache lacks tangents");

  Eigen::MatrixXd nbar = Eigen::MatrixXd::Zero(3, B);
  Eigen::MatrixXd xhatbar = Eigen::MatrixXd::Zero(3, B);
  Eigen::MatrixXd dnbar[3], ubar[3];
  Eigen::RowVectorXd rbar = Eigen::RowVectorXd::Zero(B);

  if (use_g) {
    Eigen::RowVectorXd xg = col_dots(c.xhat, gbar);
    nbar += gbar - c.xhat * xg.asDiagonal();
    xhatbar -= c.n * xg.asDiagonal() + gbar * c.xn.asDiagonal();
  }
  if (use_div) {
    Eigen::RowVectorXd w = divbar.transpose();
    for (int e = 0; e < 3; ++e) {
      Eigen::RowVectorXd un = col_dots(c.u[e], c.n);
      Eigen::RowVectorXd xdn = col_dots(c.xhat, c.dn[e]);
      Eigen::RowVectorXd xew = c.xhat.row(e).cwiseProduct(w);
      Eigen::RowVectorXd uew = c.u[e].row(e).cwiseProduct(w);

      dnbar[e] = -(c.xhat * xew.asDiagonal());
      dnbar[e].row(e) += w;

      nbar -= c.u[e] * xew.asDiagonal() + c.xhat * uew.asDiagonal();

      ubar[e] = -(c.n * xew.asDiagonal());
      ubar[e].row(e) -= c.xn.cwiseProduct(w);

      xhatbar.row(e) -= (un + xdn).cwiseProduct(w);
      xhatbar -= c.dn[e] * xew.asDiagonal() + c.n * uew.asDiagonal();
    }
  }

  // output linear layer
  grad.weights[3] += nbar * c.act[2].transpose();
  grad.biases[3] += nbar.rowwise().sum();
  Eigen::MatrixXd abar = W[3].transpose() * nbar;
  Eigen::MatrixXd dabar[3];
  if (use_div)
    for (int e = 0; e < 3; ++e) {
      grad.weights[3] += dnbar[e] * c.da[2][e].transpose();
      dabar[e] = W[3].transpose() * dnbar[e];
    }

  for (int l = MlpField::kHiddenLayers - 1; l >= 0; --l) {
    Eigen::ArrayXXd phi1 = 1.0 - c.act[l].array().square();
    Eigen::MatrixXd zbar = (phi1 * abar.array()).matrix();
    Eigen::MatrixXd dzbar[3];
    if (use_div) {
      Eigen::ArrayXXd phi2 = -2.0 * c.act[l].array() * phi1;
      for (int e = 0; e < 3; ++e) {
        dzbar[e] = (phi1 * dabar[e].array()).matrix();
        zbar += (phi2 * c.dz[l][e].array() * dabar[e].array()).matrix();
      }
    }
    const Eigen::MatrixXd& aprev = (l == 0) ? c.a0 : c.act[l - 1];
    grad.weights[l] += zbar * aprev.transpose();
    grad.biases[l] += zbar.rowwise().sum();
    if (use_div) {
      for (int e = 0; e < 3; ++e) {
        if (l == 0)
          grad.weights[0].leftCols(3) += dzbar[e] * c.u[e].transpose();
        else
          grad.weights[l] += dzbar[e] * c.da[l - 1][e].transpose();
      }
    }
    if (l > 0) {
      abar = W[l].transpose() * zbar;
      if (use_div)
        for (int e = 0; e < 3; ++e) dabar[e] = W[l].transpose() * dzbar[e];
    } else {
      Eigen::MatrixXd a0bar = W[0].transpose() * zbar;
      xhatbar += a0bar.topRows(3);
      if (use_div)
        for (int e = 0; e < 3; ++e) {
          Eigen::MatrixXd d0 = W[0].transpose() * dzbar[e];
          ubar[e] += d0.topRows(3);
        }
    }
  }

  if (!xbar_out) return;

  if (use_div) {
    for (int e = 0; e < 3; ++e) {
      Eigen::RowVectorXd ux = col_dots(ubar[e], c.xhat);
      xhatbar.row(e) -= ux.cwiseProduct(c.invr);
      xhatbar -= ubar[e] * c.xhat.row(e).cwiseProduct(c.invr).asDiagonal();
      rbar -= col_dots(ubar[e], c.u[e]).cwiseProduct(c.invr);
    }
  }
  Eigen::RowVectorXd xx = col_dots(c.xhat, xhatbar);
  *xbar_out = (xhatbar - c.xhat * xx.asDiagonal()) * c.invr.asDiagonal() +
              c.xhat * rbar.asDiagonal();
}

// Extension-projection and divergence for an analytic raw field.
void raw_point(const RawField& raw, const Eigen::Vector3d& x, Eigen::Vector3d* g_out,
               double* div_out) {
  double r = x.norm();
  if (r <= 0.0) throw InputError("field evaluation at the origin");
  Eigen::Vector3d xhat = x / r;
  FieldJet jet = raw(xhat);
  const Eigen::Vector3d& n = jet.value;
  double xn = xhat.dot(n);
  if (g_out) *g_out = n - xn * xhat;
  if (!div_out) return;
  double div = 0.0;
  for (int e = 0; e < 3; ++e) {
    Eigen::Vector3d ue = -xhat(e) * xhat;
    ue(e) += 1.0;
    ue /= r;
    Eigen::Vector3d dn = jet.jacobian * ue;
    Eigen::Vector3d dg = dn - (ue.dot(n) + xhat.dot(dn)) * xhat - xn * ue;
    div += dg(e);
  }
  *div_out = div;
}

// Dormand-Prince 5(4) coefficients.
struct Dp54 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // difference between the 5th- and 4th-order solutions
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

void check_unit(const Eigen::Matrix3Xd& points) {
  for (int j = 0; j < points.cols(); ++j)
    if (std::abs(points.col(j).norm() - 1.0) > 1e-9)
      throw InputError("flow integration requires unit input points");
}

// Shared adaptive driver. Eval fills the projected field G and divergence
// for a batch at time t; the step controller follows the worst sample.
template <class Eval>
CnfResult integrate_adaptive(Eval&& eval, const Eigen::Matrix3Xd& points, bool backward,
                             const OdeOptions& opts) {
  check_unit(points);
  const int B = static_cast<int>(points.cols());
  const double t_end = backward ? 0.0 : 1.0;
  const double dir = backward ? -1.0 : 1.0;

  Eigen::MatrixXd X = points;
  Eigen::VectorXd L = Eigen::VectorXd::Zero(B);  // accumulated -div
  double t = backward ? 1.0 : 0.0;
  double h = 0.1 * dir;

  Eigen::MatrixXd K[7];
  Eigen::VectorXd D[7];
  eval(X, t, K[0], D[0]);

  CnfResult result;
  for (int iter = 0; iter < opts.max_steps; ++iter) {
    if (dir * (t_end - t) <= 1e-14) {
      for (int j = 0; j < B; ++j) {
        double drift = std::abs(X.col(j).norm() - 1.0);
        result.max_drift = std::max(result.max_drift, drift);
      }
      result.terminal = X;
      for (int j = 0; j < B; ++j) result.terminal.col(j).normalize();
      result.delta_log_density = L;
      return result;
    }
    if (dir * h > dir * (t_end - t)) h = t_end - t;

    eval(X + h * Dp54::a21 * K[0], t + Dp54::c2 * h, K[1], D[1]);
    eval(X + h * (Dp54::a31 * K[0] + Dp54::a32 * K[1]), t + Dp54::c3 * h, K[2], D[2]);
    eval(X + h * (Dp54::a41 * K[0] + Dp54::a42 * K[1] + Dp54::a43 * K[2]),
         t + Dp54::c4 * h, K[3], D[3]);
    eval(X + h * (Dp54::a51 * K[0] + Dp54::a52 * K[1] + Dp54::a53 * K[2] +
                  Dp54::a54 * K[3]),
         t + Dp54::c5 * h, K[4], D[4]);
    eval(X + h * (Dp54::a61 * K[0] + Dp54::a62 * K[1] + Dp54::a63 * K[2] +
                  Dp54::a64 * K[3] + Dp54::a65 * K[4]),
         t + h, K[5], D[5]);
    Eigen::MatrixXd X_new = X + h * (Dp54::b1 * K[0] + Dp54::b3 * K[2] + Dp54::b4 * K[3] +
                                     Dp54::b5 * K[4] + Dp54::b6 * K[5]);
    Eigen::VectorXd L_new = L - h * (Dp54::b1 * D[0] + Dp54::b3 * D[2] + Dp54::b4 * D[3] +
                                     Dp54::b5 * D[4] + Dp54::b6 * D[5]);
    eval(X_new, t + h, K[6], D[6]);

    Eigen::MatrixXd err_x = h * (Dp54::e1 * K[0] + Dp54::e3 * K[2] + Dp54::e4 * K[3] +
                                 Dp54::e5 * K[4] + Dp54::e6 * K[5] + Dp54::e7 * K[6]);
    Eigen::VectorXd err_l = -h * (Dp54::e1 * D[0] + Dp54::e3 * D[2] + Dp54::e4 * D[3] +
                                  Dp54::e5 * D[4] + Dp54::e6 * D[5] + Dp54::e7 * D[6]);
    double worst = 0.0;
    for (int j = 0; j < B; ++j) {
      double s = 0.0;
      for (int comp = 0; comp < 3; ++comp) {
        double sc = opts.atol +
                    opts.rtol * std::max(std::abs(X(comp, j)), std::abs(X_new(comp, j)));
        double q = err_x(comp, j) / sc;
        s += q * q;
      }
      double sc = opts.atol + opts.rtol * std::max(std::abs(L(j)), std::abs(L_new(j)));
      double q = err_l(j) / sc;
      s += q * q;
      worst = std::max(worst, s / 4.0);
    }
    double err = std::sqrt(worst);

    if (err <= 1.0) {
      t += h;
      X.swap(X_new);
      L.swap(L_new);
      K[0].swap(K[6]);
      D[0].swap(D[6]);
      ++result.steps;
      for (int j = 0; j < B; ++j) {
        double drift = std::abs(X.col(j).norm() - 1.0);
        result.max_drift = std::max(result.max_drift, drift);
        if (drift > opts.max_drift)
          throw Error("flow integration drifted off the sphere (|1-|x|| = " +
                      std::to_string(drift) + ")");
      }
    }
    double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::min(5.0, std::max(0.2, factor));
    if (std::abs(h) < 1e-12) throw Error("flow integration step size underflow");
  }
  throw Error("flow integration exceeded the step limit");
}

struct Rk4Trajectory {
  std::vector<Eigen::MatrixXd> x;  // state at the start of each step
  Eigen::MatrixXd terminal;
  Eigen::VectorXd ell;  // integral of +div along the path
  double max_drift = 0.0;
};

Rk4Trajectory rk4_forward(const MlpField& f, const Eigen::MatrixXd& start, int steps,
                          bool store, double max_drift, bool backward = false) {
  if (steps < 1) throw InputError("rk4_forward: steps must be positive");
  const int B = static_cast<int>(start.cols());
  const double h = (backward ? -1.0 : 1.0) / steps;
  const double t0 = backward ? 1.0 : 0.0;

  Rk4Trajectory traj;
  if (store) traj.x.reserve(steps);
  Eigen::MatrixXd X = start;
  Eigen::VectorXd ell = Eigen::VectorXd::Zero(B);
  FieldCache c;
  for (int n = 0; n < steps; ++n) {
    double t = t0 + n * h;
    if (store) traj.x.push_back(X);
    field_forward(f, X, t, true, c);
    Eigen::MatrixXd k1 = c.g;
    Eigen::VectorXd d1 = c.div;
    field_forward(f, X + 0.5 * h * k1, t + 0.5 * h, true, c);
    Eigen::MatrixXd k2 = c.g;
    Eigen::VectorXd d2 = c.div;
    field_forward(f, X + 0.5 * h * k2, t + 0.5 * h, true, c);
    Eigen::MatrixXd k3 = c.g;
    Eigen::VectorXd d3 = c.div;
    field_forward(f, X + h * k3, t + h, true, c);
    X += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + c.g);
    ell += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + c.div);
    for (int j = 0; j < B; ++j) {
      double drift = std::abs(X.col(j).norm() - 1.0);
      traj.max_drift = std::max(traj.max_drift, drift);
      if (drift > max_drift)
        throw Error("flow integration drifted off the sphere (|1-|x|| = " +
                    std::to_string(drift) + ")");
    }
  }
  traj.terminal = X;
  traj.ell = ell;
  return traj;
}

// Reverse sweep of the fixed-step solve: the loss depends on the final
// integral of div with per-sample weight ellbar, and the stage caches are
// recomputed from the stored step-start states.
void rk4_backward(const MlpField& f, const Rk4Trajectory& traj,
                  const Eigen::VectorXd& ellbar, MlpGradient& grad) {
  const int steps = static_cast<int>(traj.x.size());
  const int B = static_cast<int>(ellbar.size());
  const double h = 1.0 / steps;
  Eigen::MatrixXd Xbar = Eigen::MatrixXd::Zero(3, B);
  FieldCache c1, c2, c3, c4;
  for (int n = steps - 1; n >= 0; --n) {
    const Eigen::MatrixXd& X0 = traj.x[n];
    double t = n * h;
    field_forward(f, X0, t, true, c1);
    field_forward(f, X0 + 0.5 * h * c1.g, t + 0.5 * h, true, c2);
    field_forward(f, X0 + 0.5 * h * c2.g, t + 0.5 * h, true, c3);
    field_forward(f, X0 + h * c3.g, t + h, true, c4);

    Eigen::MatrixXd k1b = (h / 6.0) * Xbar, k2b = (h / 3.0) * Xbar,
                    k3b = (h / 3.0) * Xbar, k4b = (h / 6.0) * Xbar;
    Eigen::VectorXd d1b = (h / 6.0) * ellbar, d2b = (h / 3.0) * ellbar,
                    d3b = (h / 3.0) * ellbar, d4b = (h / 6.0) * ellbar;

    Eigen::MatrixXd xb;
    field_backward(f, c4, k4b, d4b, grad, &xb);
    Xbar += xb;
    k3b += h * xb;
    field_backward(f, c3, k3b, d3b, grad, &xb);
    Xbar += xb;
    k2b += 0.5 * h * xb;
    field_backward(f, c2, k2b, d2b, grad, &xb);
    Xbar += xb;
    k1b += 0.5 * h * xb;
    field_backward(f, c1, k1b, d1b, grad, &xb);
    Xbar += xb;
  }
}

FieldCache gather_columns(const FieldCache& c, const std::vector<int>& cols) {
  const int m = static_cast<int>(cols.size());
  auto pick = [&](const Eigen::MatrixXd& src) {
    Eigen::MatrixXd out(src.rows(), m);
    for (int i = 0; i < m; ++i) out.col(i) = src.col(cols[i]);
    return out;
  };
  FieldCache o;
  o.has_div = c.has_div;
  o.r.resize(m);
  o.invr.resize(m);
  o.xn.resize(m);
  o.div.resize(m);
  for (int i = 0; i < m; ++i) {
    o.r(i) = c.r(cols[i]);
    o.invr(i) = c.invr(cols[i]);
    o.xn(i) = c.xn(cols[i]);
    o.div(i) = c.div(cols[i]);
  }
  o.xhat = pick(c.xhat);
  o.a0 = pick(c.a0);
  for (int l = 0; l < 3; ++l) o.act[l] = pick(c.act[l]);
  o.n = pick(c.n);
  o.g = pick(c.g);
  for (int e = 0; e < 3; ++e) {
    o.u[e] = pick(c.u[e]);
    o.dn[e] = pick(c.dn[e]);
    for (int l = 0; l < 3; ++l) {
      o.dz[l][e] = pick(c.dz[l][e]);
      o.da[l][e] = pick(c.da[l][e]);
    }
  }
  return o;
}

Eigen::Matrix3Xd uniform_sphere(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Matrix3Xd x(3, n);
  for (int j = 0; j < n; ++j) x.col(j) = rng.unit_vector();
  return x;
}

void dataset_to_matrices(const std::vector<SphereSample>& data, Eigen::Matrix3Xd& x,
                         Eigen::VectorXd& corrections) {
  x.resize(3, static_cast<int>(data.size()));
  corrections.resize(static_cast<int>(data.size()));
  for (size_t i = 0; i < data.size(); ++i) {
    x.col(static_cast<int>(i)) = data[i].direction.normalized();
    corrections(static_cast<int>(i)) = data[i].log_area_correction;
  }
}

constexpr int kEvalChunk = 4096;

}  // namespace

Eigen::Vector3d extend_field(const MlpField& field, const Eigen::Vector3d& x, double t) {
  double r = x.norm();
  if (r <= 0.0) throw InputError("extend_field: zero input vector");
  Eigen::VectorXd input(field.input_dim());
  input.head<3>() = x / r;
  if (field.input_dim() == 4) input(3) = t;
  return field.raw(input);
}

Eigen::Vector3d tangent_project(const Eigen::Vector3d& x, const Eigen::Vector3d& v) {
  double xx = x.squaredNorm();
  if (xx <= 0.0) throw InputError("tangent_project: zero input vector");
  return v - (x.dot(v) / xx) * x;
}

Eigen::Vector3d projected_field(const MlpField& field, const Eigen::Vector3d& x,
                                double t) {
  return tangent_project(x, extend_field(field, x, t));
}

double divergence(const MlpField& field, const Eigen::Vector3d& x, double t) {
  FieldCache c;
  field_forward(field, x, t, true, c);
  return c.div(0);
}

Eigen::Vector3d projected_field(const RawField& raw, const Eigen::Vector3d& x) {
  Eigen::Vector3d g;
  raw_point(raw, x, &g, nullptr);
  return g;
}

double divergence(const RawField& raw, const Eigen::Vector3d& x) {
  double div = 0.0;
  raw_point(raw, x, nullptr, &div);
  return div;
}

std::string flow_kind_name(FlowKind kind) {
  return kind == FlowKind::cnf ? "cnf" : "moser";
}

FlowKind flow_kind_from_name(const std::string& name) {
  if (name == "cnf") return FlowKind::cnf;
  if (name == "moser") return FlowKind::moser;
  throw InputError("unknown flow kind '" + name + "' (expected cnf or moser)");
}

CnfResult cnf_forward(const Eigen::Matrix3Xd& points, const FlowModel& model,
                      bool backward, const OdeOptions& options) {
  auto eval = [&](const Eigen::MatrixXd& X, double t, Eigen::MatrixXd& G,
                  Eigen::VectorXd& div) {
    FieldCache c;
    field_forward(model.field, X, t, true, c);
    G = std::move(c.g);
    div = std::move(c.div);
  };
  return integrate_adaptive(eval, points, backward, options);
}

CnfResult integrate_field(const RawField& raw, const Eigen::Matrix3Xd& points,
                          bool backward, const OdeOptions& options) {
  auto eval = [&](const Eigen::MatrixXd& X, double, Eigen::MatrixXd& G,
                  Eigen::VectorXd& div) {
    G.resize(3, X.cols());
    div.resize(X.cols());
    for (int j = 0; j < X.cols(); ++j) {
      Eigen::Vector3d g;
      double d;
      raw_point(raw, X.col(j), &g, &d);
      G.col(j) = g;
      div(j) = d;
    }
  };
  return integrate_adaptive(eval, points, backward, options);
}

CnfResult cnf_forward_fixed(const Eigen::Matrix3Xd& points, const FlowModel& model,
                            int steps, bool backward, double max_drift) {
  check_unit(points);
  Rk4Trajectory traj =
      rk4_forward(model.field, points, steps, false, max_drift, backward);
  CnfResult result;
  result.terminal = traj.terminal;
  for (int j = 0; j < result.terminal.cols(); ++j) result.terminal.col(j).normalize();
  result.delta_log_density = -traj.ell;
  result.max_drift = traj.max_drift;
  result.steps = steps;
  return result;
}

Eigen::VectorXd cnf_log_density(const Eigen::Matrix3Xd& points, const FlowModel& model,
                                const OdeOptions& options) {
  Eigen::VectorXd out(points.cols());
  for (int at = 0; at < points.cols(); at += kEvalChunk) {
    int len = std::min<int>(kEvalChunk, static_cast<int>(points.cols()) - at);
    CnfResult r = cnf_forward(points.middleCols(at, len), model, false, options);
    out.segment(at, len) =
        Eigen::VectorXd::Constant(len, FlowModel::log_noise_density()) -
        r.delta_log_density;
  }
  return out;
}

double cnf_log_density(const Eigen::Vector3d& x, const FlowModel& model,
                       const OdeOptions& options) {
  return cnf_log_density(Eigen::Matrix3Xd(x), model, options)(0);
}

Eigen::Matrix3Xd cnf_sample(int n, const FlowModel& model, std::uint64_t seed,
                            const OdeOptions& options) {
  if (n < 1) throw InputError("cnf_sample: sample count must be positive");
  Eigen::Matrix3Xd noise = uniform_sphere(n, seed);
  Eigen::Matrix3Xd out(3, n);
  for (int at = 0; at < n; at += kEvalChunk) {
    int len = std::min(kEvalChunk, n - at);
    out.middleCols(at, len) =
        cnf_forward(noise.middleCols(at, len), model, true, options).terminal;
  }
  return out;
}

Eigen::VectorXd moser_density(const FlowModel& model, const Eigen::Matrix3Xd& points) {
  FieldCache c;
  field_forward(model.field, points, 0.0, true, c);
  return Eigen::VectorXd::Constant(points.cols(), kNu) - c.div;
}

double moser_density(const FlowModel& model, const Eigen::Vector3d& x) {
  return moser_density(model, Eigen::Matrix3Xd(x))(0);
}

Eigen::Matrix3Xd moser_sample(int n, const FlowModel& model, std::uint64_t seed,
                              int steps, double floor) {
  if (n < 1) throw InputError("moser_sample: sample count must be positive");
  if (steps < 1) throw InputError("moser_sample: steps must be positive");
  Eigen::MatrixXd X = uniform_sphere(n, seed);
  const double h = 1.0 / steps;
  FieldCache c;
  auto velocity = [&](const Eigen::MatrixXd& pts, double s) {
    field_forward(model.field, pts, 0.0, true, c);
    Eigen::ArrayXd denom = kNu - s * c.div.array();
    if ((denom < floor).any())
      throw Error("moser_sample: interpolant density fell below the floor");
    return Eigen::MatrixXd(c.g * denom.inverse().matrix().asDiagonal());
  };
  for (int nstep = 0; nstep < steps; ++nstep) {
    double s = nstep * h;
    Eigen::MatrixXd k1 = velocity(X, s);
    Eigen::MatrixXd k2 = velocity(X + 0.5 * h * k1, s + 0.5 * h);
    Eigen::MatrixXd k3 = velocity(X + 0.5 * h * k2, s + 0.5 * h);
    Eigen::MatrixXd k4 = velocity(X + h * k3, s + h);
    X += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    for (int j = 0; j < n; ++j) X.col(j).normalize();
  }
  return X;
}

double cnf_loss_gradient(const FlowModel& model, const Eigen::Matrix3Xd& points,
                         const Eigen::VectorXd& log_corrections, int rk_steps,
                         MlpGradient* grad) {
  const int B = static_cast<int>(points.cols());
  if (B < 1) throw InputError("cnf_loss_gradient: empty batch");
  Rk4Trajectory traj = rk4_forward(model.field, points, rk_steps, grad != nullptr, 1e-3);
  double loss = std::log(4.0 * M_PI) +
                (log_corrections.array() - traj.ell.array()).mean();
  if (grad) {
    Eigen::VectorXd ellbar = Eigen::VectorXd::Constant(B, -1.0 / B);
    rk4_backward(model.field, traj, ellbar, *grad);
  }
  return loss;
}

double moser_loss_gradient(const FlowModel& model, const Eigen::Matrix3Xd& points,
                           const Eigen::VectorXd& log_corrections,
                           const Eigen::Matrix3Xd& constraint_points, double lambda,
                           double floor, MlpGradient* grad, double* data_nll_out) {
  const int B = static_cast<int>(points.cols());
  const int K = static_cast<int>(constraint_points.cols());
  if (B < 1) throw InputError("moser_loss_gradient: empty batch");

  FieldCache cd;
  field_forward(model.field, points, 0.0, true, cd);
  Eigen::ArrayXd mu = kNu - cd.div.array();
  double data_nll =
      (log_corrections.array() - mu.max(floor).log()).mean();

  double penalty = 0.0;
  FieldCache cz;
  Eigen::ArrayXd mu_z;
  if (K > 0) {
    field_forward(model.field, constraint_points, 0.0, true, cz);
    mu_z = kNu - cz.div.array();
    penalty = lambda * (floor - mu_z).max(0.0).mean();
  }

  if (grad) {
    Eigen::VectorXd divbar(B);
    for (int i = 0; i < B; ++i) divbar(i) = mu(i) > floor ? 1.0 / (B * mu(i)) : 0.0;
    field_backward(model.field, cd, Eigen::MatrixXd(), divbar, *grad, nullptr);

    if (K > 0) {
      std::vector<int> active;
      for (int k = 0; k < K; ++k)
        if (mu_z(k) < floor) active.push_back(k);
      if (!active.empty()) {
        FieldCache sub = gather_columns(cz, active);
        Eigen::VectorXd zb =
            Eigen::VectorXd::Constant(static_cast<int>(active.size()), lambda / K);
        field_backward(model.field, sub, Eigen::MatrixXd(), zb, *grad, nullptr);
      }
    }
  }
  if (data_nll_out) *data_nll_out = data_nll;
  return data_nll + penalty;
}

TrainConfig TrainConfig::defaults(FlowKind kind) {
  TrainConfig c;
  if (kind == FlowKind::moser) {
    c.epochs = 4000;
    c.learning_rate = 1e-4;
  }
  return c;
}

Eigen::VectorXd corrected_log_likelihoods(const FlowModel& model,
                                          const std::vector<SphereSample>& data,
                                          const OdeOptions& options, double moser_floor) {
  if (data.empty()) throw InputError("corrected_log_likelihoods: empty dataset");
  Eigen::Matrix3Xd x;
  Eigen::VectorXd corrections;
  dataset_to_matrices(data, x, corrections);
  Eigen::VectorXd log_density;
  if (model.kind == FlowKind::cnf) {
    log_density = cnf_log_density(x, model, options);
  } else {
    log_density = moser_density(model, x).array().max(moser_floor).log();
  }
  return log_density - corrections;
}

Evaluation evaluate(const FlowModel& model, const std::vector<SphereSample>& data,
                    const OdeOptions& options, double moser_floor) {
  Eigen::VectorXd ll = corrected_log_likelihoods(model, data, options, moser_floor);
  Evaluation ev;
  ev.count = static_cast<int>(ll.size());
  ev.mean = ll.mean();
  double var = (ll.array() - ev.mean).square().mean();
  ev.std_error = std::sqrt(var / ev.count);
  return ev;
}

TrainResult train_flow(FlowKind kind, const std::vector<SphereSample>& train,
                       const std::vector<SphereSample>& validation,
                       const TrainConfig& config) {
  if (train.empty()) throw InputError("train_flow: empty training set");
  if (config.epochs < 1 || config.batch_size < 1)
    throw InputError("train_flow: epochs and batch size must be positive");

  const int n = static_cast<int>(train.size());
  const int in_dim = kind == FlowKind::cnf ? 4 : 3;
  FlowModel model{kind,
                  MlpField(in_dim, config.hidden_dim, derive_seed(config.seed, "init"))};

  Eigen::Matrix3Xd x_train, x_val;
  Eigen::VectorXd c_train, c_val;
  dataset_to_matrices(train, x_train, c_train);
  if (!validation.empty()) dataset_to_matrices(validation, x_val, c_val);

  auto draw_constraints = config.constraint_sampler;
  if (!draw_constraints)
    draw_constraints = [](int count, std::uint64_t seed) {
      return uniform_sphere(count, seed);
    };

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd params = model.field.parameters();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.size());
  int adam_t = 0;

  // corrected LL of a set under the current model, with the training-time
  // integrator for the cnf case
  auto corrected_ll = [&](const Eigen::Matrix3Xd& xs, const Eigen::VectorXd& cs) {
    double total = 0.0;
    for (int at = 0; at < xs.cols(); at += kEvalChunk) {
      int len = std::min<int>(kEvalChunk, static_cast<int>(xs.cols()) - at);
      Eigen::VectorXd ld;
      if (kind == FlowKind::cnf) {
        Rk4Trajectory t = rk4_forward(model.field, xs.middleCols(at, len),
                                      config.ode_train_steps, false, config.ode.max_drift);
        ld = Eigen::VectorXd::Constant(len, FlowModel::log_noise_density()) + t.ell;
      } else {
        Eigen::Matrix3Xd chunk = xs.middleCols(at, len);
        ld = moser_density(model, chunk).array().max(config.moser_floor).log();
      }
      total += (ld - cs.segment(at, len)).sum();
    }
    return total / xs.cols();
  };

  TrainResult result;
  auto start_time = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.uniform() * (i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_ll_sum = 0.0;
    for (int at = 0; at < n; at += config.batch_size) {
      int len = std::min(config.batch_size, n - at);
      Eigen::Matrix3Xd xb(3, len);
      Eigen::VectorXd cb(len);
      for (int i = 0; i < len; ++i) {
        xb.col(i) = x_train.col(order[at + i]);
        cb(i) = c_train(order[at + i]);
      }

      MlpGradient grad(model.field);
      double data_nll = 0.0;
      double loss;
      if (kind == FlowKind::cnf) {
        loss = cnf_loss_gradient(model, xb, cb, config.ode_train_steps, &grad);
        data_nll = loss;
      } else {
        Eigen::Matrix3Xd z = draw_constraints(
            config.constraint_samples, derive_seed(config.seed, "constraint", adam_t));
        loss = moser_loss_gradient(model, xb, cb, z, config.moser_lambda,
                                   config.moser_floor, &grad, &data_nll);
      }
      if (!std::isfinite(loss))
        throw Error("train_flow: non-finite loss at epoch " + std::to_string(epoch));
      epoch_ll_sum += -data_nll * len;

      ++adam_t;
      Eigen::VectorXd g = grad.flatten();
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
      double mc = 1.0 - std::pow(config.beta1, adam_t);
      double vc = 1.0 - std::pow(config.beta2, adam_t);
      params -= (config.learning_rate / mc) *
                (m.array() / ((v.array() / vc).sqrt() + config.adam_eps)).matrix();
      model.field.set_parameters(params);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_ll = epoch_ll_sum / n;
    entry.validation_ll =
        validation.empty() ? std::nan("") : corrected_ll(x_val, c_val);
    entry.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start_time)
                             .count();
    result.log.push_back(entry);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace cgm
