#pragma once

// Exact ensemble average of the double-passage coincidence rate for a
// circular Gaussian screen, by Wick pairing of the four screen factors.
//
// Momenta in units of k theta0 and angles in units of theta0; the pair
// correlator is exp(-p^2) and x = k L theta0^2. Each of the 24 pairings is a
// complex Gaussian integral over three free momenta (the fourth is fixed by
// momentum conservation), evaluated in closed form.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <complex>
#include <numbers>

namespace cbs::oracle {

inline std::complex<double> wick_gamma(double alpha, double beta, double x) {
  using C = std::complex<double>;
  const double s = alpha + beta;
  const double Cm[4][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {-1, -1, -1}};
  const double D[4] = {0, 0, 0, s};
  std::array<int, 4> perm{0, 1, 2, 3};
  C total = 0.0;
  do {
    Eigen::Matrix3cd A = Eigen::Matrix3cd::Zero();
    Eigen::Vector3cd B = Eigen::Vector3cd::Zero();
    C c0 = 0.0;
    // Adds coef * (cvec . p + d)^2 to the exponent -p^T A p + B.p + c0.
    auto add = [&](const Eigen::Vector3d& cv, double d, C coef) {
      A -= coef * (cv * cv.transpose()).cast<C>();
      B += coef * 2.0 * d * cv.cast<C>();
      c0 += coef * d * d;
    };
    auto row = [&](int i) { return Eigen::Vector3d(Cm[i][0], Cm[i][1], Cm[i][2]); };
    const C ix(0.0, x);
    for (int i = 0; i < 4; ++i) add(row(i), D[i], -1.0);
    add(-row(0), beta - D[0], -ix);
    add(row(3), D[3] - alpha, -ix);
    add(-row(perm[0]), beta - D[perm[0]], ix);
    add(row(perm[3]), D[perm[3]] - alpha, ix);
    const C det = A.determinant();
    const Eigen::Vector3cd sol = A.partialPivLu().solve(B);
    total += std::pow(std::numbers::pi, 1.5) / std::sqrt(det) *
             std::exp(0.25 * (B.transpose() * sol)(0) + c0);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total;
}

}  // namespace cbs::oracle
