#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace cgm {

// Point on a mesh face in barycentric coordinates (nonnegative, sum 1).
struct SurfacePoint {
  int face = -1;
  std::array<double, 3> bary{0.0, 0.0, 0.0};
};

// Per-edge positive lengths; the intrinsic geometry of a mesh, independent
// of any embedding.
struct DiscreteMetric {
  std::vector<double> length;
};

// Immutable triangle mesh: positions plus validated connectivity.
// Edges are stored canonically as (min, max) vertex pairs, sorted
// lexicographically so edge ids are deterministic. Faces keep their input
// orientation (counterclockwise w.r.t. outward normal for closed surfaces).
class TriangleMesh {
 public:
  // Validates and indexes the mesh. Throws InputError on: face referencing a
  // missing vertex, repeated vertex within a face, an edge shared by more
  // than two faces, an isolated vertex, or a zero-length edge.
  static TriangleMesh build(std::vector<Eigen::Vector3d> positions,
                            std::vector<std::array<int, 3>> faces);

  int n_vertices() const { return static_cast<int>(positions_.size()); }
  int n_edges() const { return static_cast<int>(edges_.size()); }
  int n_faces() const { return static_cast<int>(faces_.size()); }

  const std::vector<Eigen::Vector3d>& positions() const { return positions_; }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  const std::vector<std::array<int, 2>>& edges() const { return edges_; }

  // Edge id for the unordered pair (a, b); -1 if absent.
  int edge_id(int a, int b) const;

  // Edge ids of face f; entry k is the edge opposite corner k.
  const std::array<int, 3>& face_edges(int f) const { return face_edges_[f]; }

  // Faces incident to edge e ((f, -1) for boundary edges).
  const std::array<int, 2>& edge_faces(int e) const { return edge_faces_[e]; }

  const std::vector<int>& vertex_faces(int v) const { return vertex_faces_[v]; }
  int vertex_degree(int v) const { return static_cast<int>(vertex_edges_[v].size()); }
  const std::vector<int>& vertex_edges(int v) const { return vertex_edges_[v]; }

  bool has_boundary() const { return boundary_edge_count_ > 0; }
  bool edge_is_boundary(int e) const { return edge_faces_[e][1] < 0; }

 private:
  std::vector<Eigen::Vector3d> positions_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<std::array<int, 3>> face_edges_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<std::array<int, 2>> edge_faces_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<std::vector<int>> vertex_edges_;
  std::unordered_map<std::uint64_t, int> edge_lookup_;
  int boundary_edge_count_ = 0;
};

int euler_characteristic(const TriangleMesh& mesh);
bool is_topological_sphere(const TriangleMesh& mesh);

// Per-edge Euclidean lengths. Throws Error if any face violates the strict
// triangle inequality within 1e-12 relative slack.
DiscreteMetric discrete_metric(const TriangleMesh& mesh);

double face_area(const TriangleMesh& mesh, int face);
double total_area(const TriangleMesh& mesh);

// Angles of a triangle with side lengths (l0, l1, l2); entry k is the angle
// opposite side k. Uses the half-angle form, stable for thin triangles.
std::array<double, 3> triangle_angles(double l0, double l1, double l2);

// Heron's formula in Kahan's numerically stable arrangement.
double triangle_area_from_lengths(double a, double b, double c);

// Position of a surface point: sum of barycentric-weighted corner positions.
Eigen::Vector3d barycentric_point(const TriangleMesh& mesh, const SurfacePoint& sp);

// Inverse of barycentric_point for a point on the face plane (within 1e-9 of
// the face diameter; throws Error beyond). Slightly-negative coordinates down
// to -1e-9 are clamped and renormalized.
SurfacePoint locate_barycentric(const TriangleMesh& mesh, int face, const Eigen::Vector3d& p);

}  // namespace cgm
