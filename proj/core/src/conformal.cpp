#include "cgm/conformal.hpp"

#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "cgm/errors.hpp"
#include "cgm/special_functions.hpp"

namespace cgm {

namespace {

DiscreteMetric scaled_metric(const TriangleMesh& mesh, const DiscreteMetric& metric,
                             const Eigen::VectorXd& u) {
  DiscreteMetric out;
  out.length.resize(mesh.n_edges());
  for (int e = 0; e < mesh.n_edges(); ++e) {
    const auto& [a, b] = mesh.edges()[e];
    out.length[e] = metric.length[e] * std::exp(0.5 * (u[a] + u[b]));
  }
  return out;
}

// A face whose longest length reaches the sum of the other two gets the
// clamped angles (pi, 0, 0); its energy term stays C1 but its Hessian
// contribution is zero, so Newton assembly skips it.
bool face_violates_triangle_inequality(const DiscreteMetric& m, const std::array<int, 3>& fe) {
  double l0 = m.length[fe[0]], l1 = m.length[fe[1]], l2 = m.length[fe[2]];
  return l0 >= l1 + l2 || l1 >= l0 + l2 || l2 >= l0 + l1;
}

}  // namespace

DiscreteMetric apply_log_factors(const TriangleMesh& mesh, const DiscreteMetric& metric,
                                 const std::vector<double>& u) {
  Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
  return scaled_metric(mesh, metric, uv);
}

std::pair<std::vector<double>, DiscreteMetric> normalize_neighborhood(
    const TriangleMesh& mesh, const DiscreteMetric& metric, int pivot) {
  if (mesh.vertex_degree(pivot) < 3)
    throw Error("normalize_neighborhood: pivot degree < 3");

  double mean_log = 0.0;
  for (int e : mesh.vertex_edges(pivot)) mean_log += std::log(metric.length[e]);
  mean_log /= mesh.vertex_degree(pivot);

  std::vector<double> u(mesh.n_vertices(), 0.0);
  for (int e : mesh.vertex_edges(pivot)) {
    const auto& [a, b] = mesh.edges()[e];
    int j = (a == pivot) ? b : a;
    u[j] = 2.0 * (mean_log - std::log(metric.length[e]));
  }

  DiscreteMetric scaled = apply_log_factors(mesh, metric, u);
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fv = mesh.faces()[f];
    if (fv[0] == pivot || fv[1] == pivot || fv[2] == pivot) continue;  // removed by puncture
    if (face_violates_triangle_inequality(scaled, mesh.face_edges(f)))
      throw Error("normalize_neighborhood: face " + std::to_string(f) +
                  " violates the triangle inequality after rescaling");
  }
  return {std::move(u), std::move(scaled)};
}

PuncturedDisk puncture(const TriangleMesh& mesh, int pivot) {
  PuncturedDisk disk;
  disk.parent_to_vertex.assign(mesh.n_vertices(), -1);
  std::vector<Eigen::Vector3d> positions;
  positions.reserve(mesh.n_vertices() - 1);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (v == pivot) continue;
    disk.parent_to_vertex[v] = static_cast<int>(positions.size());
    disk.vertex_to_parent.push_back(v);
    positions.push_back(mesh.positions()[v]);
  }
  std::vector<std::array<int, 3>> faces;
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fv = mesh.faces()[f];
    if (fv[0] == pivot || fv[1] == pivot || fv[2] == pivot) continue;
    faces.push_back({disk.parent_to_vertex[fv[0]], disk.parent_to_vertex[fv[1]],
                     disk.parent_to_vertex[fv[2]]});
    disk.face_to_parent.push_back(f);
  }
  disk.mesh = TriangleMesh::build(std::move(positions), std::move(faces));
  if (euler_characteristic(disk.mesh) != 1 || !disk.mesh.has_boundary())
    throw Error("puncture: result is not a topological disk");
  return disk;
}

double flatten_energy(const TriangleMesh& mesh, const DiscreteMetric& metric,
                      const Eigen::VectorXd& u) {
  DiscreteMetric cur = scaled_metric(mesh, metric, u);
  double energy = 0.0;
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fe = mesh.face_edges(f);
    const auto& fv = mesh.faces()[f];
    auto ang = triangle_angles(cur.length[fe[0]], cur.length[fe[1]], cur.length[fe[2]]);
    for (int c = 0; c < 3; ++c) {
      double lambda = 2.0 * std::log(cur.length[fe[c]]);
      energy += 0.5 * ang[c] * lambda + lobachevsky(ang[c]);
    }
    energy -= 0.5 * M_PI * (u[fv[0]] + u[fv[1]] + u[fv[2]]);
  }
  energy += M_PI * u.sum();
  return energy;
}

Eigen::VectorXd angle_defects(const TriangleMesh& mesh, const DiscreteMetric& metric) {
  Eigen::VectorXd defect = Eigen::VectorXd::Constant(mesh.n_vertices(), 2.0 * M_PI);
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fe = mesh.face_edges(f);
    const auto& fv = mesh.faces()[f];
    auto ang = triangle_angles(metric.length[fe[0]], metric.length[fe[1]], metric.length[fe[2]]);
    for (int c = 0; c < 3; ++c) defect[fv[c]] -= ang[c];
  }
  return defect;
}

FlattenResult flatten_disk(const TriangleMesh& disk, const DiscreteMetric& metric,
                           const FlattenOptions& options) {
  const int nv = disk.n_vertices();
  std::vector<char> boundary(nv, 0);
  for (int e = 0; e < disk.n_edges(); ++e)
    if (disk.edge_is_boundary(e)) {
      boundary[disk.edges()[e][0]] = 1;
      boundary[disk.edges()[e][1]] = 1;
    }
  std::vector<int> interior;
  std::vector<int> to_interior(nv, -1);
  for (int v = 0; v < nv; ++v)
    if (!boundary[v]) {
      to_interior[v] = static_cast<int>(interior.size());
      interior.push_back(v);
    }
  const int ni = static_cast<int>(interior.size());

  Eigen::VectorXd u = Eigen::VectorXd::Zero(nv);
  FlattenResult result;

  for (int iter = 0;; ++iter) {
    DiscreteMetric cur = scaled_metric(disk, metric, u);
    Eigen::VectorXd defect = angle_defects(disk, cur);
    double max_defect = 0.0;
    for (int v : interior) max_defect = std::max(max_defect, std::abs(defect[v]));

    if (max_defect <= options.defect_tol || ni == 0) {
      result.iterations = iter;
      result.max_defect = max_defect;
      for (int f = 0; f < disk.n_faces(); ++f)
        if (face_violates_triangle_inequality(cur, disk.face_edges(f)))
          throw Error("flatten_disk: face " + std::to_string(f) +
                      " violates the triangle inequality at the solution");
      result.u.assign(u.data(), u.data() + nv);
      result.flat = std::move(cur);
      return result;
    }
    if (iter >= options.max_iterations)
      throw Error("flatten_disk: Newton did not converge in " +
                  std::to_string(options.max_iterations) + " iterations (defect " +
                  std::to_string(max_defect) + ")");

    // Newton system: the energy Hessian is half the cotan Laplacian of the
    // current metric and the gradient is half the defect, so solve L d = -defect
    // on the interior block. Faces with clamped angles contribute nothing.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(12 * disk.n_faces());
    for (int f = 0; f < disk.n_faces(); ++f) {
      const auto& fe = disk.face_edges(f);
      if (face_violates_triangle_inequality(cur, fe)) continue;
      const auto& fv = disk.faces()[f];
      auto ang = triangle_angles(cur.length[fe[0]], cur.length[fe[1]], cur.length[fe[2]]);
      for (int c = 0; c < 3; ++c) {
        double w = 0.5 / std::tan(ang[c]);
        int i = fv[(c + 1) % 3], j = fv[(c + 2) % 3];
        int ii = to_interior[i], jj = to_interior[j];
        if (ii >= 0) trips.emplace_back(ii, ii, w);
        if (jj >= 0) trips.emplace_back(jj, jj, w);
        if (ii >= 0 && jj >= 0) {
          trips.emplace_back(ii, jj, -w);
          trips.emplace_back(jj, ii, -w);
        }
      }
    }
    Eigen::SparseMatrix<double> L(ni, ni);
    L.setFromTriplets(trips.begin(), trips.end());

    Eigen::VectorXd rhs(ni);
    for (int k = 0; k < ni; ++k) rhs[k] = -defect[interior[k]];

    Eigen::VectorXd d;
    double reg = 0.0;
    while (true) {
      Eigen::SparseMatrix<double> sys = L;
      if (reg > 0.0) {
        for (int k = 0; k < ni; ++k) sys.coeffRef(k, k) += reg;
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(sys);
      if (solver.info() == Eigen::Success) {
        d = solver.solve(rhs);
        if (solver.info() == Eigen::Success && d.allFinite()) break;
      }
      reg = reg == 0.0 ? 1e-12 : reg * 100.0;
      if (reg > 1e-3) throw Error("flatten_disk: Newton system factorization failed");
    }

    // Armijo backtracking on the energy. Once the predicted decrease falls
    // below the energy's floating-point resolution the comparison is
    // meaningless; at that point we are in the quadratic basin and the full
    // Newton step is safe.
    double e0 = flatten_energy(disk, metric, u);
    double slope = 0.0;
    for (int k = 0; k < ni; ++k) slope += 0.5 * defect[interior[k]] * d[k];
    Eigen::VectorXd du = Eigen::VectorXd::Zero(nv);
    for (int k = 0; k < ni; ++k) du[interior[k]] = d[k];
    double noise = 1e-12 * std::max(1.0, std::abs(e0));
    double step = 1.0;
    while (-1e-4 * step * slope > noise) {
      double e1 = flatten_energy(disk, metric, u + step * du);
      if (e1 <= e0 + 1e-4 * step * slope) break;
      step *= 0.5;
      if (step < 1e-12) throw Error("flatten_disk: line search failed");
    }
    u += step * du;
  }
}

std::vector<Eigen::Vector2d> layout_plane(const TriangleMesh& disk, const DiscreteMetric& flat) {
  const int nv = disk.n_vertices();
  const int nf = disk.n_faces();
  if (nf == 0) throw Error("layout_plane: empty disk");
  std::vector<Eigen::Vector2d> pos(nv, Eigen::Vector2d::Zero());
  std::vector<char> placed(nv, 0), visited(nf, 0);

  // Third corner of a triangle over placed base (a at A, b at B), on the
  // counterclockwise side.
  auto place_apex = [](const Eigen::Vector2d& A, const Eigen::Vector2d& B, double l_ar,
                       double l_br) {
    Eigen::Vector2d ex = B - A;
    double d = ex.norm();
    ex /= d;
    Eigen::Vector2d ey(-ex.y(), ex.x());
    double x = (l_ar * l_ar + d * d - l_br * l_br) / (2.0 * d);
    double y = std::sqrt(std::max(l_ar * l_ar - x * x, 0.0));
    return Eigen::Vector2d(A + x * ex + y * ey);
  };

  {
    const auto& fv = disk.faces()[0];
    const auto& fe = disk.face_edges(0);
    double l01 = flat.length[fe[2]];  // edge opposite corner 2 = (v0, v1)
    pos[fv[0]] = {0.0, 0.0};
    pos[fv[1]] = {l01, 0.0};
    placed[fv[0]] = placed[fv[1]] = 1;
    pos[fv[2]] = place_apex(pos[fv[0]], pos[fv[1]], flat.length[fe[1]], flat.length[fe[0]]);
    placed[fv[2]] = 1;
  }

  std::queue<int> queue;
  queue.push(0);
  visited[0] = 1;
  while (!queue.empty()) {
    int f = queue.front();
    queue.pop();
    const auto& fv = disk.faces()[f];
    const auto& fe = disk.face_edges(f);
    for (int c = 0; c < 3; ++c) {
      int e = fe[c];
      const auto& inc = disk.edge_faces(e);
      int g = inc[0] == f ? inc[1] : inc[0];
      if (g < 0 || visited[g]) continue;
      const auto& gv = disk.faces()[g];
      const auto& ge = disk.face_edges(g);
      int apex = -1;
      for (int k = 0; k < 3; ++k)
        if (ge[k] == e) apex = k;
      int r = gv[apex];
      if (!placed[r]) {
        int a = gv[(apex + 1) % 3], b = gv[(apex + 2) % 3];
        pos[r] = place_apex(pos[a], pos[b], flat.length[ge[(apex + 2) % 3]],
                            flat.length[ge[(apex + 1) % 3]]);
        placed[r] = 1;
      }
      visited[g] = 1;
      queue.push(g);
    }
  }
  for (int v = 0; v < nv; ++v)
    if (!placed[v]) throw Error("layout_plane: disk is not edge-connected");

  for (int e = 0; e < disk.n_edges(); ++e) {
    double measured = (pos[disk.edges()[e][0]] - pos[disk.edges()[e][1]]).norm();
    double want = flat.length[e];
    if (std::abs(measured - want) > 1e-8 * want)
      throw Error("layout_plane: edge " + std::to_string(e) +
                  " length error exceeds tolerance (input metric not flat?)");
  }
  for (int f = 0; f < nf; ++f) {
    const auto& fv = disk.faces()[f];
    Eigen::Vector2d ab = pos[fv[1]] - pos[fv[0]], ac = pos[fv[2]] - pos[fv[0]];
    if (ab.x() * ac.y() - ab.y() * ac.x() <= 0.0)
      throw Error("layout_plane: face " + std::to_string(f) + " came out flipped");
  }
  return pos;
}

std::pair<std::vector<Eigen::Vector3d>, std::vector<double>> stereographic_to_sphere(
    const std::vector<Eigen::Vector2d>& planar) {
  std::vector<Eigen::Vector3d> sphere(planar.size());
  std::vector<double> u(planar.size());
  for (size_t i = 0; i < planar.size(); ++i) {
    double n2 = planar[i].squaredNorm();
    sphere[i] =
        Eigen::Vector3d(2.0 * planar[i].x(), 2.0 * planar[i].y(), n2 - 1.0) / (n2 + 1.0);
    u[i] = -std::log(0.5 * (n2 + 1.0));
  }
  return {std::move(sphere), std::move(u)};
}

Eigen::Vector3d mobius_transform(const Eigen::Vector3d& x, const Eigen::Vector3d& c) {
  double denom = (x + c).squaredNorm();
  return ((1.0 - c.squaredNorm()) * x + 2.0 * (1.0 + c.dot(x)) * c) / denom;
}

double mobius_log_factor(const Eigen::Vector3d& x, const Eigen::Vector3d& c) {
  return std::log((1.0 - c.squaredNorm()) / (x + c).squaredNorm());
}

MobiusResult mobius_center(std::vector<Eigen::Vector3d> positions,
                           const Eigen::VectorXd& weights, double tol, int max_iterations) {
  const int n = static_cast<int>(positions.size());
  if (weights.size() != n) throw Error("mobius_center: weight count mismatch");
  double wsum = weights.sum();
  if (!(wsum > 0.0) || weights.minCoeff() < 0.0)
    throw Error("mobius_center: weights must be nonnegative with positive sum");

  auto center_of = [&](const std::vector<Eigen::Vector3d>& pts) {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) m += weights[i] * pts[i];
    return Eigen::Vector3d(m / wsum);
  };

  MobiusResult result;
  result.u_increment.assign(n, 0.0);
  Eigen::Vector3d m = center_of(positions);
  double step = 1.0;
  int iter = 0;
  while (m.norm() > tol) {
    if (iter >= max_iterations)
      throw Error("mobius_center: no convergence after " + std::to_string(max_iterations) +
                  " iterations (center norm " + std::to_string(m.norm()) + ")");
    Eigen::Vector3d c = -step * m;
    if (c.norm() > 0.8) c *= 0.8 / c.norm();

    std::vector<Eigen::Vector3d> trial(n);
    for (int i = 0; i < n; ++i) trial[i] = mobius_transform(positions[i], c).normalized();
    Eigen::Vector3d m_trial = center_of(trial);

    if (m_trial.norm() < m.norm()) {
      for (int i = 0; i < n; ++i) result.u_increment[i] += mobius_log_factor(positions[i], c);
      positions = std::move(trial);
      m = m_trial;
      step = std::min(1.0, step * 1.25);
      ++iter;
    } else {
      step *= 0.5;
      if (step < 1e-10) throw Error("mobius_center: damping underflow");
    }
  }
  result.positions = std::move(positions);
  result.iterations = iter;
  result.center_norm = m.norm();
  return result;
}

SphericalParameterization spherical_parameterize(const TriangleMesh& mesh,
                                                 const ParameterizeOptions& options) {
  if (!is_topological_sphere(mesh))
    throw InputError("spherical_parameterize: input is not a topological sphere");

  int pivot = options.removed_vertex;
  if (pivot < 0) {
    pivot = 0;
    for (int v = 1; v < mesh.n_vertices(); ++v)
      if (mesh.vertex_degree(v) > mesh.vertex_degree(pivot)) pivot = v;
  } else if (pivot >= mesh.n_vertices()) {
    throw InputError("spherical_parameterize: removed vertex id out of range");
  }

  DiscreteMetric metric0 = discrete_metric(mesh);
  auto [u_ring, metric1] = normalize_neighborhood(mesh, metric0, pivot);

  PuncturedDisk disk = puncture(mesh, pivot);
  DiscreteMetric disk_metric;
  disk_metric.length.resize(disk.mesh.n_edges());
  for (int e = 0; e < disk.mesh.n_edges(); ++e) {
    const auto& [a, b] = disk.mesh.edges()[e];
    int pe = mesh.edge_id(disk.vertex_to_parent[a], disk.vertex_to_parent[b]);
    disk_metric.length[e] = metric1.length[pe];
  }
  for (int f = 0; f < disk.mesh.n_faces(); ++f)
    if (face_violates_triangle_inequality(disk_metric, disk.mesh.face_edges(f)))
      throw Error("spherical_parameterize: face " + std::to_string(disk.face_to_parent[f]) +
                  " violates the triangle inequality after 1-ring normalization");

  FlattenResult flat = flatten_disk(disk.mesh, disk_metric, options.flatten);
  std::vector<Eigen::Vector2d> plane = layout_plane(disk.mesh, flat.flat);

  // The fixed projection formula sends counterclockwise planar faces to
  // inward-facing spherical ones; mirror across the x-axis (an isometry, no
  // conformal increment) so the final embedding is outward-oriented. Then
  // recenter and scale to RMS radius 1 for projection conditioning; the
  // scale is a global conformal change tracked as +log s.
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (auto& p : plane) {
    p.y() = -p.y();
    centroid += p;
  }
  centroid /= static_cast<double>(plane.size());
  double rms = 0.0;
  for (auto& p : plane) {
    p -= centroid;
    rms += p.squaredNorm();
  }
  rms = std::sqrt(rms / static_cast<double>(plane.size()));
  double log_scale = -std::log(rms);
  for (auto& p : plane) p /= rms;

  auto [sphere_disk, u_stereo] = stereographic_to_sphere(plane);

  SphericalParameterization param;
  param.removed_vertex = pivot;
  param.positions.assign(mesh.n_vertices(), Eigen::Vector3d(0.0, 0.0, 1.0));
  param.log_factor.assign(mesh.n_vertices(), 0.0);
  for (int v = 0; v < disk.mesh.n_vertices(); ++v) {
    int pv = disk.vertex_to_parent[v];
    param.positions[pv] = sphere_disk[v];
    param.log_factor[pv] = u_ring[pv] + flat.u[v] + log_scale + u_stereo[v];
  }
  param.report.newton_iterations = flat.iterations;
  param.report.max_angle_defect = flat.max_defect;

  // Reinsert the pivot at the north pole: its factor is the mean over
  // incident edges of the value that zeroes each edge's residual.
  {
    double mean = 0.0;
    std::vector<double> wants;
    for (int e : mesh.vertex_edges(pivot)) {
      const auto& [a, b] = mesh.edges()[e];
      int j = (a == pivot) ? b : a;
      double chord = (param.positions[j] - Eigen::Vector3d(0.0, 0.0, 1.0)).norm();
      double want = 2.0 * (std::log(chord) - std::log(metric0.length[e])) - param.log_factor[j];
      wants.push_back(want);
      mean += want;
    }
    mean /= static_cast<double>(wants.size());
    param.log_factor[pivot] = mean;
    double worst = 0.0;
    for (double w : wants) worst = std::max(worst, 0.5 * std::abs(w - mean));
    param.report.reinsert_residual = worst;
  }

  Eigen::VectorXd weights = Eigen::VectorXd::Zero(mesh.n_vertices());
  for (int f = 0; f < mesh.n_faces(); ++f) {
    double third = face_area(mesh, f) / 3.0;
    for (int v : mesh.faces()[f]) weights[v] += third;
  }
  MobiusResult centered = mobius_center(std::move(param.positions), weights,
                                        options.center_tol, options.center_max_iterations);
  param.positions = std::move(centered.positions);
  for (int v = 0; v < mesh.n_vertices(); ++v) param.log_factor[v] += centered.u_increment[v];
  param.report.mobius_iterations = centered.iterations;
  param.report.center_norm = centered.center_norm;

  for (const auto& p : param.positions)
    if (std::abs(p.norm() - 1.0) > 1e-9)
      throw Error("spherical_parameterize: vertex left the unit sphere");
  for (const auto& fv : mesh.faces()) {
    double det = param.positions[fv[0]].cross(param.positions[fv[1]]).dot(param.positions[fv[2]]);
    if (det <= 0.0) throw Error("spherical_parameterize: inconsistent face orientation");
  }
  param.report.max_edge_residual = max_conformal_residual(mesh, param);
  if (param.report.max_edge_residual > 1e-6)
    throw Error("spherical_parameterize: conformal residual above tolerance");
  return param;
}

double max_conformal_residual(const TriangleMesh& mesh, const SphericalParameterization& param) {
  DiscreteMetric metric = discrete_metric(mesh);
  double worst = 0.0;
  for (int e = 0; e < mesh.n_edges(); ++e) {
    const auto& [a, b] = mesh.edges()[e];
    double chord = (param.positions[a] - param.positions[b]).norm();
    double residual = std::log(chord) -
                      0.5 * (param.log_factor[a] + param.log_factor[b]) -
                      std::log(metric.length[e]);
    worst = std::max(worst, std::abs(residual));
  }
  return worst;
}

}  // namespace cgm
