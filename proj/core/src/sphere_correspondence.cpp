#include "cgm/sphere_correspondence.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cgm/errors.hpp"

namespace cgm {

namespace {

constexpr double kInsideTol = 1e-12;
constexpr double kCapPad = 1e-7;

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

double spherical_triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                               const Eigen::Vector3d& c) {
  return 2.0 * std::atan2(a.dot(b.cross(c)), 1.0 + a.dot(b) + b.dot(c) + c.dot(a));
}

SphericalTriangulation SphericalTriangulation::build(const TriangleMesh& mesh,
                                                     const SphericalParameterization& param) {
  SphericalTriangulation tri;
  tri.faces_ = mesh.faces();
  tri.sphere_pos_ = param.positions;
  tri.orig_pos_ = mesh.positions();
  tri.log_factor_ = param.log_factor;
  if (static_cast<int>(tri.sphere_pos_.size()) != mesh.n_vertices())
    throw Error("SphericalTriangulation: vertex count mismatch");

  for (const auto& fv : tri.faces_) {
    double det = tri.sphere_pos_[fv[0]].cross(tri.sphere_pos_[fv[1]]).dot(tri.sphere_pos_[fv[2]]);
    if (det <= 0.0)
      throw Error("SphericalTriangulation: spherical face is degenerate or flipped");
  }

  std::vector<Eigen::Vector3d> centroids(tri.n_faces());
  for (int f = 0; f < tri.n_faces(); ++f) {
    const auto& fv = tri.faces_[f];
    centroids[f] =
        (tri.sphere_pos_[fv[0]] + tri.sphere_pos_[fv[1]] + tri.sphere_pos_[fv[2]]).normalized();
  }
  std::vector<int> face_ids(tri.n_faces());
  for (int f = 0; f < tri.n_faces(); ++f) face_ids[f] = f;
  tri.nodes_.reserve(2 * tri.n_faces());
  tri.root_ = tri.build_cap_tree(face_ids, 0, tri.n_faces(), centroids);
  return tri;
}

int SphericalTriangulation::build_cap_tree(std::vector<int>& face_ids, int begin, int end,
                                           const std::vector<Eigen::Vector3d>& centroids) {
  CapNode node;
  if (end - begin == 1) {
    int f = face_ids[begin];
    node.face = f;
    node.axis = centroids[f];
    double theta = 0.0;
    for (int v : faces_[f]) theta = std::max(theta, angle_between(node.axis, sphere_pos_[v]));
    node.cos_bound = std::cos(std::min(theta + kCapPad, M_PI));
  } else {
    Eigen::Vector3d lo = centroids[face_ids[begin]], hi = lo;
    for (int k = begin + 1; k < end; ++k) {
      lo = lo.cwiseMin(centroids[face_ids[k]]);
      hi = hi.cwiseMax(centroids[face_ids[k]]);
    }
    int axis_dim = 0;
    (hi - lo).maxCoeff(&axis_dim);
    int mid = (begin + end) / 2;
    std::nth_element(face_ids.begin() + begin, face_ids.begin() + mid, face_ids.begin() + end,
                     [&](int a, int b) { return centroids[a][axis_dim] < centroids[b][axis_dim]; });
    node.left = build_cap_tree(face_ids, begin, mid, centroids);
    node.right = build_cap_tree(face_ids, mid, end, centroids);

    const CapNode& l = nodes_[node.left];
    const CapNode& r = nodes_[node.right];
    Eigen::Vector3d axis = l.axis + r.axis;
    node.axis = axis.norm() > 1e-12 ? Eigen::Vector3d(axis.normalized()) : l.axis;
    double theta = 0.0;
    for (const CapNode* child : {&l, &r}) {
      double child_theta = std::acos(std::clamp(child->cos_bound, -1.0, 1.0));
      theta = std::max(theta, angle_between(node.axis, child->axis) + child_theta);
    }
    node.cos_bound = std::cos(std::min(theta + kCapPad, M_PI));
  }
  nodes_.push_back(node);
  return static_cast<int>(nodes_.size()) - 1;
}

std::array<double, 3> SphericalTriangulation::face_determinants(const Eigen::Vector3d& x,
                                                                int face) const {
  const auto& fv = faces_[face];
  const Eigen::Vector3d& a = sphere_pos_[fv[0]];
  const Eigen::Vector3d& b = sphere_pos_[fv[1]];
  const Eigen::Vector3d& c = sphere_pos_[fv[2]];
  return {a.cross(b).dot(x), b.cross(c).dot(x), c.cross(a).dot(x)};
}

int SphericalTriangulation::locate(const Eigen::Vector3d& direction) const {
  int best = -1;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    const CapNode& node = nodes_[id];
    if (node.axis.dot(direction) < node.cos_bound) continue;
    if (node.face >= 0) {
      if (best >= 0 && node.face >= best) continue;
      auto det = face_determinants(direction, node.face);
      if (det[0] >= -kInsideTol && det[1] >= -kInsideTol && det[2] >= -kInsideTol)
        best = node.face;
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (best < 0) throw Error("SphericalTriangulation::locate: direction not covered by any face");
  return best;
}

int SphericalTriangulation::locate_linear(const Eigen::Vector3d& direction) const {
  for (int f = 0; f < n_faces(); ++f) {
    auto det = face_determinants(direction, f);
    if (det[0] >= -kInsideTol && det[1] >= -kInsideTol && det[2] >= -kInsideTol) return f;
  }
  throw Error("SphericalTriangulation::locate_linear: direction not covered by any face");
}

std::array<double, 3> SphericalTriangulation::barycentric_in_face(const Eigen::Vector3d& x,
                                                                  int face) const {
  const auto& fv = faces_[face];
  const Eigen::Vector3d& a = sphere_pos_[fv[0]];
  const Eigen::Vector3d& b = sphere_pos_[fv[1]];
  const Eigen::Vector3d& c = sphere_pos_[fv[2]];
  double D = a.cross(b).dot(c);
  // Scale x onto the chord plane; each barycentric coordinate is then the
  // volume ratio against the full chord tetrahedron.
  std::array<double, 3> bary{b.cross(c).dot(x) / D, c.cross(a).dot(x) / D,
                             a.cross(b).dot(x) / D};
  double alpha = bary[0] + bary[1] + bary[2];
  if (!(alpha > 0.0))
    throw Error("SphericalTriangulation: direction does not intersect the face plane");
  double sum = 0.0;
  for (double& bk : bary) {
    bk /= alpha;
    if (bk < -1e-9)
      throw Error("SphericalTriangulation: direction outside the face (barycentric " +
                  std::to_string(bk) + ")");
    bk = std::max(bk, 0.0);
    sum += bk;
  }
  for (double& bk : bary) bk /= sum;
  return bary;
}

SurfacePoint SphericalTriangulation::sphere_to_surface(const Eigen::Vector3d& direction) const {
  return sphere_to_surface(direction, locate(direction));
}

SurfacePoint SphericalTriangulation::sphere_to_surface(const Eigen::Vector3d& direction,
                                                       int face) const {
  SurfacePoint sp;
  sp.face = face;
  sp.bary = barycentric_in_face(direction, face);
  return sp;
}

Eigen::Vector3d SphericalTriangulation::surface_to_sphere(const SurfacePoint& sp) const {
  const auto& fv = faces_[sp.face];
  Eigen::Vector3d q = sp.bary[0] * sphere_pos_[fv[0]] + sp.bary[1] * sphere_pos_[fv[1]] +
                      sp.bary[2] * sphere_pos_[fv[2]];
  double n = q.norm();
  if (n < 1e-12) throw Error("SphericalTriangulation: degenerate chord point");
  return q / n;
}

Eigen::Vector3d SphericalTriangulation::original_point(const SurfacePoint& sp) const {
  const auto& fv = faces_[sp.face];
  return sp.bary[0] * orig_pos_[fv[0]] + sp.bary[1] * orig_pos_[fv[1]] +
         sp.bary[2] * orig_pos_[fv[2]];
}

double SphericalTriangulation::log_area_factor(const Eigen::Vector3d& direction, int face) const {
  const auto& fv = faces_[face];
  const Eigen::Vector3d& a = sphere_pos_[fv[0]];
  const Eigen::Vector3d& b = sphere_pos_[fv[1]];
  const Eigen::Vector3d& c = sphere_pos_[fv[2]];
  double det = a.cross(b).dot(c);
  Eigen::Vector3d n = (b - a).cross(c - a);
  double nx = std::abs(n.dot(direction));
  if (nx < 1e-300) throw Error("SphericalTriangulation: direction parallel to the face plane");
  double twice_orig =
      (orig_pos_[fv[1]] - orig_pos_[fv[0]]).cross(orig_pos_[fv[2]] - orig_pos_[fv[0]]).norm();
  return 2.0 * std::log(det) + std::log(twice_orig) - 3.0 * std::log(nx);
}

double SphericalTriangulation::log_factor_at(const Eigen::Vector3d& direction, int face) const {
  auto bary = barycentric_in_face(direction, face);
  const auto& fv = faces_[face];
  return bary[0] * log_factor_[fv[0]] + bary[1] * log_factor_[fv[1]] +
         bary[2] * log_factor_[fv[2]];
}

double SphericalTriangulation::log_factor_at(const Eigen::Vector3d& direction) const {
  return log_factor_at(direction, locate(direction));
}

}  // namespace cgm
