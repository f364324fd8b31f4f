#include "cgm/laplacian.hpp"

#include <cmath>
#include <vector>

namespace cgm {

Eigen::SparseMatrix<double> cotan_laplacian(const TriangleMesh& mesh,
                                            const DiscreteMetric& metric) {
  const int nv = mesh.n_vertices();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(12 * mesh.n_faces());
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fv = mesh.faces()[f];
    const auto& fe = mesh.face_edges(f);
    auto ang = triangle_angles(metric.length[fe[0]], metric.length[fe[1]], metric.length[fe[2]]);
    for (int c = 0; c < 3; ++c) {
      // Angle at corner c sits opposite edge (c+1, c+2).
      int i = fv[(c + 1) % 3], j = fv[(c + 2) % 3];
      double w = 0.5 / std::tan(ang[c]);
      trips.emplace_back(i, j, -w);
      trips.emplace_back(j, i, -w);
      trips.emplace_back(i, i, w);
      trips.emplace_back(j, j, w);
    }
  }
  Eigen::SparseMatrix<double> L(nv, nv);
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

}  // namespace cgm
