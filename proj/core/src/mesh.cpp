#include "cgm/mesh.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "cgm/errors.hpp"

namespace cgm {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

TriangleMesh TriangleMesh::build(std::vector<Eigen::Vector3d> positions,
                                 std::vector<std::array<int, 3>> faces) {
  TriangleMesh m;
  m.positions_ = std::move(positions);
  m.faces_ = std::move(faces);
  const int nv = m.n_vertices();
  const int nf = m.n_faces();

  for (int f = 0; f < nf; ++f) {
    const auto& [i, j, k] = m.faces_[f];
    if (i < 0 || j < 0 || k < 0 || i >= nv || j >= nv || k >= nv)
      throw InputError("face " + std::to_string(f) + " references a missing vertex");
    if (i == j || j == k || k == i)
      throw InputError("face " + std::to_string(f) + " repeats a vertex");
  }

  // Canonical edge set, ids in lexicographic (min, max) order.
  std::vector<std::array<int, 2>> pairs;
  pairs.reserve(3 * nf);
  for (const auto& fv : m.faces_)
    for (int c = 0; c < 3; ++c) {
      int a = fv[(c + 1) % 3], b = fv[(c + 2) % 3];
      pairs.push_back({std::min(a, b), std::max(a, b)});
    }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  m.edges_ = std::move(pairs);
  for (int e = 0; e < m.n_edges(); ++e)
    m.edge_lookup_[edge_key(m.edges_[e][0], m.edges_[e][1])] = e;

  m.face_edges_.resize(nf);
  m.edge_faces_.assign(m.n_edges(), {-1, -1});
  for (int f = 0; f < nf; ++f) {
    const auto& fv = m.faces_[f];
    for (int c = 0; c < 3; ++c) {
      int e = m.edge_id(fv[(c + 1) % 3], fv[(c + 2) % 3]);
      m.face_edges_[f][c] = e;
      auto& inc = m.edge_faces_[e];
      if (inc[0] < 0) {
        inc[0] = f;
      } else if (inc[1] < 0) {
        inc[1] = f;
      } else {
        throw InputError("edge (" + std::to_string(m.edges_[e][0]) + ", " +
                         std::to_string(m.edges_[e][1]) + ") shared by more than two faces");
      }
    }
  }
  for (int e = 0; e < m.n_edges(); ++e)
    if (m.edge_faces_[e][1] < 0) ++m.boundary_edge_count_;

  m.vertex_faces_.resize(nv);
  for (int f = 0; f < nf; ++f)
    for (int v : m.faces_[f]) m.vertex_faces_[v].push_back(f);
  m.vertex_edges_.resize(nv);
  for (int e = 0; e < m.n_edges(); ++e) {
    m.vertex_edges_[m.edges_[e][0]].push_back(e);
    m.vertex_edges_[m.edges_[e][1]].push_back(e);
  }

  for (int v = 0; v < nv; ++v)
    if (m.vertex_faces_[v].empty())
      throw InputError("isolated vertex " + std::to_string(v));
  for (int e = 0; e < m.n_edges(); ++e) {
    double len = (m.positions_[m.edges_[e][0]] - m.positions_[m.edges_[e][1]]).norm();
    if (!(len > 0.0))
      throw InputError("zero-length edge (" + std::to_string(m.edges_[e][0]) + ", " +
                       std::to_string(m.edges_[e][1]) + ")");
  }
  return m;
}

int TriangleMesh::edge_id(int a, int b) const {
  auto it = edge_lookup_.find(edge_key(a, b));
  return it == edge_lookup_.end() ? -1 : it->second;
}

int euler_characteristic(const TriangleMesh& mesh) {
  return mesh.n_faces() - mesh.n_edges() + mesh.n_vertices();
}

bool is_topological_sphere(const TriangleMesh& mesh) {
  return euler_characteristic(mesh) == 2 && !mesh.has_boundary();
}

DiscreteMetric discrete_metric(const TriangleMesh& mesh) {
  DiscreteMetric metric;
  metric.length.resize(mesh.n_edges());
  for (int e = 0; e < mesh.n_edges(); ++e)
    metric.length[e] =
        (mesh.positions()[mesh.edges()[e][0]] - mesh.positions()[mesh.edges()[e][1]]).norm();
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fe = mesh.face_edges(f);
    for (int c = 0; c < 3; ++c) {
      double a = metric.length[fe[c]];
      double b = metric.length[fe[(c + 1) % 3]];
      double d = metric.length[fe[(c + 2) % 3]];
      if (b + d <= a * (1.0 + 1e-12))
        throw Error("degenerate face " + std::to_string(f) + ": triangle inequality violated");
    }
  }
  return metric;
}

double face_area(const TriangleMesh& mesh, int face) {
  const auto& fv = mesh.faces()[face];
  const auto& p = mesh.positions();
  return 0.5 * (p[fv[1]] - p[fv[0]]).cross(p[fv[2]] - p[fv[0]]).norm();
}

double total_area(const TriangleMesh& mesh) {
  double sum = 0.0;
  for (int f = 0; f < mesh.n_faces(); ++f) sum += face_area(mesh, f);
  return sum;
}

std::array<double, 3> triangle_angles(double l0, double l1, double l2) {
  const double s = 0.5 * (l0 + l1 + l2);
  const std::array<double, 3> l{l0, l1, l2};
  std::array<double, 3> ang;
  for (int k = 0; k < 3; ++k) {
    double opp = l[k], b = l[(k + 1) % 3], c = l[(k + 2) % 3];
    double num = (s - b) * (s - c);
    double den = s * (s - opp);
    ang[k] = 2.0 * std::atan2(std::sqrt(std::max(num, 0.0)), std::sqrt(std::max(den, 0.0)));
  }
  return ang;
}

double triangle_area_from_lengths(double a, double b, double c) {
  // Kahan: sort a >= b >= c, then evaluate the exact-cancellation-free form.
  if (a < b) std::swap(a, b);
  if (b < c) std::swap(b, c);
  if (a < b) std::swap(a, b);
  double t = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
  return 0.25 * std::sqrt(std::max(t, 0.0));
}

Eigen::Vector3d barycentric_point(const TriangleMesh& mesh, const SurfacePoint& sp) {
  const auto& fv = mesh.faces()[sp.face];
  const auto& p = mesh.positions();
  return sp.bary[0] * p[fv[0]] + sp.bary[1] * p[fv[1]] + sp.bary[2] * p[fv[2]];
}

SurfacePoint locate_barycentric(const TriangleMesh& mesh, int face, const Eigen::Vector3d& p) {
  const auto& fv = mesh.faces()[face];
  const auto& pos = mesh.positions();
  Eigen::Vector3d e1 = pos[fv[1]] - pos[fv[0]];
  Eigen::Vector3d e2 = pos[fv[2]] - pos[fv[0]];
  Eigen::Vector3d d = p - pos[fv[0]];
  double a11 = e1.dot(e1), a12 = e1.dot(e2), a22 = e2.dot(e2);
  double det = a11 * a22 - a12 * a12;
  if (!(det > 0.0)) throw Error("locate_barycentric: degenerate face");
  double r1 = e1.dot(d), r2 = e2.dot(d);
  double s = (a22 * r1 - a12 * r2) / det;
  double t = (a11 * r2 - a12 * r1) / det;

  double diameter = std::sqrt(std::max({a11, a22, (e2 - e1).squaredNorm()}));
  double off_plane = (d - s * e1 - t * e2).norm();
  if (off_plane > 1e-9 * diameter)
    throw Error("locate_barycentric: point is off the face plane");

  SurfacePoint sp;
  sp.face = face;
  sp.bary = {1.0 - s - t, s, t};
  double sum = 0.0;
  for (double& v : sp.bary) {
    if (v < 0.0) {
      if (v < -1e-9) throw Error("locate_barycentric: point outside the face");
      v = 0.0;
    }
    sum += v;
  }
  for (double& v : sp.bary) v /= sum;
  return sp;
}

}  // namespace cgm
