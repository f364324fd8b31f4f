#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgm/mesh.hpp"
#include "cgm/sphere_correspondence.hpp"

namespace cgm {

// A surface sample carried onto the aligned sphere: the source surface point
// (mesh id, face, barycentrics), its direction after alignment, and the log
// differential area ratio of the correspondence at that point.
struct SphereSample {
  int mesh_id = 0;
  int face_id = -1;
  std::array<double, 3> bary{0.0, 0.0, 0.0};
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
  double log_area_correction = 0.0;
};

// Per-vertex contact probabilities from raw intensities: a sigmoid calibrated
// so the maximum intensity maps to 0.999 and the minimum to 0.001 (affine
// changes of the intensity scale therefore do not matter). All-equal
// intensities degenerate to the uniform value 0.5; `degenerate` reports it.
std::vector<double> contact_probabilities(const std::vector<double>& intensities,
                                          bool* degenerate = nullptr);

// Unnormalized face weights: mean of the three vertex probabilities.
Eigen::VectorXd face_distribution(const TriangleMesh& mesh,
                                  const std::vector<double>& vertex_probs);

// n surface points: faces drawn categorically by weight, positions uniform
// within the face via the square-root barycentric map. One fixed draw order
// (face, then r1, r2) keeps results reproducible per seed.
std::vector<SurfacePoint> sample_surface(const TriangleMesh& mesh,
                                         const Eigen::VectorXd& face_weights, int n,
                                         std::uint64_t seed);

// Surface points -> aligned sphere samples. The area correction is evaluated
// on the unrotated sphere at the sample's own face (no point location); the
// rotation is isometric and applied afterward.
std::vector<SphereSample> to_sphere_dataset(const std::vector<SurfacePoint>& points,
                                            const SphericalTriangulation& tri,
                                            const Eigen::Matrix3d& rotation, int mesh_id);

// Aligned direction -> surface point: undo the rotation, locate, read
// barycentric coordinates.
SurfacePoint from_sphere(const Eigen::Vector3d& x, const SphericalTriangulation& tri,
                         const Eigen::Matrix3d& rotation);

// Aggregate per-mesh datasets, ordered by mesh id with input order preserved
// within each mesh.
std::vector<SphereSample> pool(const std::vector<std::vector<SphereSample>>& datasets);

// Dataset artifact: CSV with a mandatory header, doubles written with
// shortest round-trip formatting so reload is bit-exact.
void save_dataset_csv(const std::string& path, const std::vector<SphereSample>& samples);
std::vector<SphereSample> load_dataset_csv(const std::string& path);

}  // namespace cgm
