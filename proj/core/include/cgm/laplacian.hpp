#pragma once

#include <Eigen/SparseCore>

#include "cgm/mesh.hpp"

namespace cgm {

// Cotangent Laplacian built intrinsically from edge lengths (law of cosines),
// so it applies unchanged to conformally rescaled metrics with no embedding.
// Off-diagonal (i, j) = -(cot a + cot b)/2 over the angles opposite edge
// (i, j); diagonal = negative row sum. Symmetric positive semidefinite with
// constants in the kernel on a connected mesh.
Eigen::SparseMatrix<double> cotan_laplacian(const TriangleMesh& mesh,
                                            const DiscreteMetric& metric);

}  // namespace cgm
