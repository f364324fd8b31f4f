#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "cgm/conformal.hpp"
#include "cgm/mesh.hpp"

namespace cgm {

// Signed area of the spherical triangle with unit-vector corners (a, b, c);
// positive for counterclockwise orientation seen from outside.
double spherical_triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                               const Eigen::Vector3d& c);

// A spherical parameterization packaged for point queries: maps directions on
// the unit sphere to surface points of the source mesh and back, and exposes
// the exact piecewise area distortion of that correspondence. Point location
// is accelerated by a bounding-cap hierarchy over the spherical faces.
class SphericalTriangulation {
 public:
  static SphericalTriangulation build(const TriangleMesh& mesh,
                                      const SphericalParameterization& param);

  int n_vertices() const { return static_cast<int>(sphere_pos_.size()); }
  int n_faces() const { return static_cast<int>(faces_.size()); }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  const std::vector<Eigen::Vector3d>& sphere_positions() const { return sphere_pos_; }
  const std::vector<Eigen::Vector3d>& original_positions() const { return orig_pos_; }
  const std::vector<double>& log_factors() const { return log_factor_; }

  // Face whose spherical triangle contains the given direction: all three
  // edge determinants at least -1e-12, lowest face id on ties. The two
  // variants agree; the linear scan is the reference for tests.
  int locate(const Eigen::Vector3d& direction) const;
  int locate_linear(const Eigen::Vector3d& direction) const;

  // Direction -> surface point via central projection onto the face's chord
  // plane; barycentric coordinates are clamped to the simplex.
  SurfacePoint sphere_to_surface(const Eigen::Vector3d& direction) const;
  SurfacePoint sphere_to_surface(const Eigen::Vector3d& direction, int face) const;

  // Surface point -> direction: normalize the chord-plane position.
  Eigen::Vector3d surface_to_sphere(const SurfacePoint& sp) const;

  // Position of a surface point in the original embedding.
  Eigen::Vector3d original_point(const SurfacePoint& sp) const;

  // Log of the differential area ratio d(original surface)/d(sphere) of the
  // correspondence at a direction known to lie in `face`.
  double log_area_factor(const Eigen::Vector3d& direction, int face) const;

  // Log conformal factor interpolated barycentrically at a direction.
  double log_factor_at(const Eigen::Vector3d& direction, int face) const;
  double log_factor_at(const Eigen::Vector3d& direction) const;

 private:
  struct CapNode {
    Eigen::Vector3d axis;
    double cos_bound = -1.0;  // prune a subtree when axis.dot(x) < cos_bound
    int left = -1, right = -1, face = -1;
  };

  std::array<double, 3> face_determinants(const Eigen::Vector3d& x, int face) const;
  std::array<double, 3> barycentric_in_face(const Eigen::Vector3d& x, int face) const;
  int build_cap_tree(std::vector<int>& face_ids, int begin, int end,
                     const std::vector<Eigen::Vector3d>& centroids);

  std::vector<std::array<int, 3>> faces_;
  std::vector<Eigen::Vector3d> sphere_pos_;
  std::vector<Eigen::Vector3d> orig_pos_;
  std::vector<double> log_factor_;
  std::vector<CapNode> nodes_;
  int root_ = -1;
};

}  // namespace cgm
