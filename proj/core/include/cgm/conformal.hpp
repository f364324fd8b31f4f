#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "cgm/mesh.hpp"

namespace cgm {

struct FlattenOptions {
  int max_iterations = 50;
  double defect_tol = 1e-10;
};

struct ParameterizeOptions {
  int removed_vertex = -1;  // -1: pick the vertex of maximal degree
  FlattenOptions flatten;
  double center_tol = 1e-6;
  int center_max_iterations = 1000;
};

struct ConvergenceReport {
  int newton_iterations = 0;
  double max_angle_defect = 0.0;
  int mobius_iterations = 0;
  double center_norm = 0.0;
  double reinsert_residual = 0.0;  // worst edge residual at the reinserted vertex
  double max_edge_residual = 0.0;  // worst conformal-equivalence residual, all edges
};

// Vertices of the source mesh embedded on the unit sphere, conformally
// equivalent to the original metric with per-vertex log scale factor u:
// measured chord lengths satisfy l~_ij = exp((u_i+u_j)/2) * l_ij.
struct SphericalParameterization {
  std::vector<Eigen::Vector3d> positions;
  std::vector<double> log_factor;
  int removed_vertex = -1;
  ConvergenceReport report;
};

// Conformal rescale of a metric by per-vertex log factors u.
DiscreteMetric apply_log_factors(const TriangleMesh& mesh, const DiscreteMetric& metric,
                                 const std::vector<double>& u);

// Rescales the 1-ring of `pivot` so every incident edge length becomes the
// geometric mean of the original incident lengths (u supported on the link,
// zero at the pivot). Validates the triangle inequality on faces that
// survive puncturing the pivot.
std::pair<std::vector<double>, DiscreteMetric> normalize_neighborhood(
    const TriangleMesh& mesh, const DiscreteMetric& metric, int pivot);

// The mesh minus one vertex and its incident faces, with id maps back to the
// parent. Vertex order is preserved (ids above the pivot shift down by one).
struct PuncturedDisk {
  TriangleMesh mesh;
  std::vector<int> vertex_to_parent;
  std::vector<int> face_to_parent;
  std::vector<int> parent_to_vertex;  // -1 for the pivot
};
PuncturedDisk puncture(const TriangleMesh& mesh, int pivot);

// Convex flattening energy for log factors u (boundary handling is the
// caller's concern; the energy itself treats every vertex alike with target
// angle 2*pi). Exposed for derivative oracle tests.
double flatten_energy(const TriangleMesh& mesh, const DiscreteMetric& metric,
                      const Eigen::VectorXd& u);

// Angle defect 2*pi minus the angle sum around each vertex under `metric`.
Eigen::VectorXd angle_defects(const TriangleMesh& mesh, const DiscreteMetric& metric);

struct FlattenResult {
  std::vector<double> u;  // zero on boundary vertices
  DiscreteMetric flat;
  int iterations = 0;
  double max_defect = 0.0;
};

// Newton minimization of the flattening energy on a disk mesh: interior
// angle sums are driven to 2*pi with u fixed to zero on the boundary.
FlattenResult flatten_disk(const TriangleMesh& disk, const DiscreteMetric& metric,
                           const FlattenOptions& options = {});

// Isometric planar layout of a flat disk metric, breadth-first from face 0.
// All faces come out counterclockwise (positive signed area).
std::vector<Eigen::Vector2d> layout_plane(const TriangleMesh& disk,
                                          const DiscreteMetric& flat);

// Inverse stereographic projection through the north pole, with the exact
// per-vertex conformal increment -log((|p|^2+1)/2) for chord lengths.
std::pair<std::vector<Eigen::Vector3d>, std::vector<double>> stereographic_to_sphere(
    const std::vector<Eigen::Vector2d>& planar);

struct MobiusResult {
  std::vector<Eigen::Vector3d> positions;
  std::vector<double> u_increment;
  int iterations = 0;
  double center_norm = 0.0;
};

// Drives the weighted vertex center to the origin with damped sphere-
// preserving Mobius inversions, accumulating the per-vertex conformal
// increment. Weights must be nonnegative with a positive sum.
MobiusResult mobius_center(std::vector<Eigen::Vector3d> positions,
                           const Eigen::VectorXd& weights, double tol = 1e-6,
                           int max_iterations = 1000);

// Sphere-preserving Mobius inversion parameterized by |c| < 1 and its
// per-point log conformal (chord-scale) factor.
Eigen::Vector3d mobius_transform(const Eigen::Vector3d& x, const Eigen::Vector3d& c);
double mobius_log_factor(const Eigen::Vector3d& x, const Eigen::Vector3d& c);

// Full pipeline: puncture, normalize, flatten, lay out, project, reinsert,
// center. Requires a topological sphere.
SphericalParameterization spherical_parameterize(const TriangleMesh& mesh,
                                                 const ParameterizeOptions& options = {});

// Worst conformal-equivalence residual over edges:
// max_e | log l~_e - (u_a+u_b)/2 - log l_e |.
double max_conformal_residual(const TriangleMesh& mesh,
                              const SphericalParameterization& param);

}  // namespace cgm
