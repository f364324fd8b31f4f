#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgm/mlp.hpp"
#include "cgm/transport.hpp"

namespace cgm {

// Euclidean extension of a network field to all of R^3 \ {0}: the raw net
// evaluated at x/|x| (plus a time coordinate when the net takes one).
Eigen::Vector3d extend_field(const MlpField& field, const Eigen::Vector3d& x,
                             double t = 0.0);

// v minus its radial component at x.
Eigen::Vector3d tangent_project(const Eigen::Vector3d& x, const Eigen::Vector3d& v);

// The tangent field actually integrated: tangent_project(x, extend_field(x, t)).
Eigen::Vector3d projected_field(const MlpField& field, const Eigen::Vector3d& x,
                                double t = 0.0);

// Exact divergence of the extended-projected field at x: the trace of its
// 3x3 Jacobian from three forward-mode passes along the coordinate axes.
double divergence(const MlpField& field, const Eigen::Vector3d& x, double t = 0.0);

// Analytic raw field (value and Jacobian at a given input) for closed-form
// checks of the extension-projection machinery and the integrators.
struct FieldJet {
  Eigen::Vector3d value;
  Eigen::Matrix3d jacobian;
};
using RawField = std::function<FieldJet(const Eigen::Vector3d&)>;

Eigen::Vector3d projected_field(const RawField& raw, const Eigen::Vector3d& x);
double divergence(const RawField& raw, const Eigen::Vector3d& x);

enum class FlowKind { cnf, moser };

std::string flow_kind_name(FlowKind kind);
FlowKind flow_kind_from_name(const std::string& name);

// Generative model on the unit sphere. The noise density is always uniform,
// 1/(4 pi). A cnf field takes (x, t); a moser flux field takes x alone.
struct FlowModel {
  FlowKind kind = FlowKind::cnf;
  MlpField field;

  static double log_noise_density() { return -std::log(4.0 * M_PI); }
};

struct OdeOptions {
  double rtol = 1e-5;
  double atol = 1e-5;
  double max_drift = 1e-3;  // |1 - |x|| beyond this aborts the solve
  int max_steps = 100000;
};

struct CnfResult {
  Eigen::Matrix3Xd terminal;           // renormalized end points, one column each
  Eigen::VectorXd delta_log_density;   // -(integral of div f dt) along each path
  double max_drift = 0.0;              // worst |1 - |x|| seen before renormalizing
  int steps = 0;                       // accepted solver steps
};

// Integrates dx/dt = projected field over t in [0,1] (or [1,0] when
// backward) with an adaptive embedded Runge-Kutta 5(4) scheme.
CnfResult cnf_forward(const Eigen::Matrix3Xd& points, const FlowModel& model,
                      bool backward = false, const OdeOptions& options = {});

// Same solver driven by an analytic field; for closed-form flow tests.
CnfResult integrate_field(const RawField& raw, const Eigen::Matrix3Xd& points,
                          bool backward = false, const OdeOptions& options = {});

// Fixed-step RK4 variant (bit-reproducible step count).
CnfResult cnf_forward_fixed(const Eigen::Matrix3Xd& points, const FlowModel& model,
                            int steps = 40, bool backward = false,
                            double max_drift = 1e-3);

// log rho(x) = log nu(terminal) + integral of div f dt along the forward path.
Eigen::VectorXd cnf_log_density(const Eigen::Matrix3Xd& points, const FlowModel& model,
                                const OdeOptions& options = {});
double cnf_log_density(const Eigen::Vector3d& x, const FlowModel& model,
                       const OdeOptions& options = {});

// Uniform noise (normalized Gaussian triples) integrated backward.
Eigen::Matrix3Xd cnf_sample(int n, const FlowModel& model, std::uint64_t seed,
                            const OdeOptions& options = {});

// mu(x) = nu - div F(x); may be negative for untrained parameters.
double moser_density(const FlowModel& model, const Eigen::Vector3d& x);
Eigen::VectorXd moser_density(const FlowModel& model, const Eigen::Matrix3Xd& points);

// Fixed-step integration of dx/ds = F(x) / (nu - s div F(x)) from uniform
// noise at s=0 to the model density at s=1, renormalizing each step. Throws
// when a denominator falls below `floor` (the density constraint failed).
Eigen::Matrix3Xd moser_sample(int n, const FlowModel& model, std::uint64_t seed,
                              int steps = 100, double floor = 1e-5);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int hidden_dim = 32;
  double moser_lambda = 100.0;      // weight of the positivity penalty
  double moser_floor = 1e-5;        // density floor epsilon
  int constraint_samples = 1024;    // Monte Carlo constraint points per step
  int ode_train_steps = 20;         // fixed RK4 steps while training a cnf
  OdeOptions ode;                   // adaptive-solver settings for evaluation

  // Draws the Moser constraint set; empty means uniform on the sphere. The
  // pipeline can plug in uniform-by-area mesh sampling mapped to the sphere.
  std::function<Eigen::Matrix3Xd(int count, std::uint64_t seed)> constraint_sampler;

  static TrainConfig defaults(FlowKind kind);
};

struct EpochLog {
  int epoch = 0;
  double train_ll = 0.0;       // mean corrected LL over the epoch's batches
  double validation_ll = 0.0;  // corrected LL on the validation set
  double wall_seconds = 0.0;
};

struct TrainResult {
  FlowModel model;
  std::vector<EpochLog> log;
};

TrainResult train_flow(FlowKind kind, const std::vector<SphereSample>& train,
                       const std::vector<SphereSample>& validation,
                       const TrainConfig& config);

struct Evaluation {
  double mean = 0.0;
  double std_error = 0.0;
  int count = 0;
};

// Per-sample corrected log likelihood: spherical log density minus the
// sample's log area correction (Moser densities are floored first).
Eigen::VectorXd corrected_log_likelihoods(const FlowModel& model,
                                          const std::vector<SphereSample>& data,
                                          const OdeOptions& options = {},
                                          double moser_floor = 1e-5);
Evaluation evaluate(const FlowModel& model, const std::vector<SphereSample>& data,
                    const OdeOptions& options = {}, double moser_floor = 1e-5);

// Training objective and its parameter gradient on one fixed batch, exposed
// for derivative verification. Returns the objective value; `grad` may be
// null. The cnf objective is the mean negative corrected log likelihood with
// densities from an `rk_steps`-step fixed RK4 solve; the moser objective
// adds the positivity penalty over the given constraint points.
double cnf_loss_gradient(const FlowModel& model, const Eigen::Matrix3Xd& points,
                         const Eigen::VectorXd& log_corrections, int rk_steps,
                         MlpGradient* grad);
double moser_loss_gradient(const FlowModel& model, const Eigen::Matrix3Xd& points,
                           const Eigen::VectorXd& log_corrections,
                           const Eigen::Matrix3Xd& constraint_points, double lambda,
                           double floor, MlpGradient* grad, double* data_nll = nullptr);

}  // namespace cgm
