#pragma once

// Dielectric cylinder, field along the axis. Boundary conditions solved as a
// 2x2 linear system per order; sigma and <cos> integrated from the angular
// far-field pattern rather than summed over orders.

#include <boost/math/special_functions/bessel.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>

namespace oracle {

inline std::pair<double, double> cylinder_far_field(double diameter, double n, double k,
                                                    int orders = 40, int angles = 4096) {
  using boost::math::cyl_bessel_j;
  using boost::math::cyl_neumann;
  using C = std::complex<double>;
  const double x = k * diameter / 2, nx = n * x;
  auto J = [](int m, double z) { return cyl_bessel_j(m, z); };
  auto Y = [](int m, double z) { return cyl_neumann(m, z); };
  auto dJ = [&](int m, double z) { return 0.5 * (J(m - 1, z) - J(m + 1, z)); };
  auto dY = [&](int m, double z) { return 0.5 * (Y(m - 1, z) - Y(m + 1, z)); };

  std::vector<C> b(2 * orders + 1);
  for (int m = -orders; m <= orders; ++m) {
    const C H(J(m, x), Y(m, x)), dH(dJ(m, x), dY(m, x));
    // unknowns (b, c):  b H - c J(nx) = -J(x);  b H' - c n J'(nx) = -J'(x)
    Eigen::Matrix2cd A;
    A << H, -J(m, nx), dH, -n * dJ(m, nx);
    Eigen::Vector2cd rhs(-J(m, x), -dJ(m, x));
    b[static_cast<std::size_t>(m + orders)] = A.partialPivLu().solve(rhs)(0);
  }
  double s = 0, sc = 0;
  const double dphi = 2 * std::numbers::pi / angles;
  for (int i = 0; i < angles; ++i) {
    const double phi = i * dphi;
    C f = 0;
    for (int m = -orders; m <= orders; ++m)
      f += b[static_cast<std::size_t>(m + orders)] * std::polar(1.0, m * phi);
    const double d = 2 / (std::numbers::pi * k) * std::norm(f);
    s += d * dphi;
    sc += d * std::cos(phi) * dphi;
  }
  return {s, sc / s};
}

}  // namespace oracle
