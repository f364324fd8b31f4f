#pragma once

#include <Eigen/Core>
#include <vector>

namespace cgm {

// Real rotation matrices d^l(beta) of the z-y-z Euler factorization for all
// degrees l <= lmax. result[l] has size (2l+1) x (2l+1); entry (i, j) holds
// d^l_{m'm} with m' = i - l, m = j - l (Varshalovich sign conventions, so
// d^1_{1,0} = -sin(beta)/sqrt(2) and d^l_{00} = P_l(cos beta)).
std::vector<Eigen::MatrixXd> wigner_d_matrices(int lmax, double beta);

}  // namespace cgm
