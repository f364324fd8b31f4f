#pragma once

namespace cgm {

// Clausen integral Cl2(x) = -int_0^x log|2 sin(t/2)| dt.
// Odd, 2pi-periodic, maximum Cl2(pi/3); Cl2(0) = Cl2(pi) = 0.
double clausen2(double x);

// Milnor's Lobachevsky function, the per-angle term of the flattening
// energy: L(x) = Cl2(2x) / 2.
double lobachevsky(double x);

}  // namespace cgm
