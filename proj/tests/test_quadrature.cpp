#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eitlab/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace eitlab;
using Eigen::Vector3d;
using Tet = std::array<Vector3d, 4>;

namespace {

const Tet kRef = {Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(0, 1, 0), Vector3d(0, 0, 1)};

// Six Kuhn tetrahedra of the unit cube, one per coordinate ordering.
std::vector<Tet> kuhn_cube() {
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<Tet> out;
  for (const auto& p : perms) {
    Tet t;
    Vector3d x = Vector3d::Zero();
    t[0] = x;
    for (int k = 0; k < 3; ++k) {
      x[p[k]] = 1.0;
      t[k + 1] = x;
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("Gauss-Legendre rules integrate polynomials of degree 2n-1 exactly") {
  for (int n = 1; n <= 12; ++n) {
    const auto& g = gauss_legendre(n);
    REQUIRE(g.nodes.size() == static_cast<std::size_t>(n));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += g.weights[i] * std::pow(g.nodes[i], p);
      const double exact = p % 2 == 1 ? 0.0 : 2.0 / (p + 1);
      CHECK(s == doctest::Approx(exact).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(gauss_legendre(0), std::invalid_argument);
  CHECK(integrate_interval([](double x) { return std::exp(x); }, 0, 1, 10) ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
}

TEST_CASE("tetrahedral rule integrates monomials over the reference element") {
  const auto q = tet_rule(kRef, 4);
  double vol = 0, m = 0;
  for (const auto& p : q) {
    vol += p.w;
    m += p.w * p.x.x() * p.x.x() * p.x.y() * p.x.z();
  }
  CHECK(vol == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  // 2! 1! 1! / (4 + 3)! = 2 / 5040
  CHECK(m == doctest::Approx(2.0 / 5040.0).epsilon(1e-12));
}

TEST_CASE("subdivision preserves volume and shrinks the diameter") {
  const Tet t = {Vector3d(0.1, 0.2, 0), Vector3d(1.3, 0, 0.2), Vector3d(0.2, 0.9, 0.1), Vector3d(0.3, 0.4, 1.1)};
  double sum = 0, dmax = 0;
  for (const auto& c : subdivide_tet(t)) {
    CHECK(std::abs(tet_volume(c)) == doctest::Approx(tet_volume(t) / 8.0).epsilon(1e-12));
    sum += std::abs(tet_volume(c));
    dmax = std::max(dmax, tet_diameter(c));
  }
  CHECK(sum == doctest::Approx(tet_volume(t)).epsilon(1e-13));
  CHECK(dmax < tet_diameter(t));
}

TEST_CASE("adaptive integration of 1/|x| over the unit cube") {
  // Integral over the cube of 1/|x| equals 3/2 of the integral of (1+u^2+v^2)^{-1/2}
  // over the unit square (by symmetry and radial integration in each pyramid).
  const double ref = 1.5 * integrate_interval(
                               [](double u) {
                                 return integrate_interval(
                                     [u](double v) { return 1.0 / std::sqrt(1 + u * u + v * v); }, 0, 1, 20);
                               },
                               0, 1, 20);
  double sum = 0;
  const std::function<Eigen::Matrix<double, 1, 1>(const Vector3d&)> f = [](const Vector3d& x) {
    return Eigen::Matrix<double, 1, 1>(1.0 / x.norm());
  };
  for (const auto& t : kuhn_cube()) sum += integrate_tet_adaptive<1>(f, t, Vector3d::Zero(), 4, 0.5, 8)(0);
  CHECK(sum == doctest::Approx(ref).epsilon(1e-4));
}

TEST_CASE("shell integration reproduces volumes and radial moments") {
  const Vector3d c(0.3, -0.2, 0.5);
  const double ri = 0.1, ro = 0.7;
  const double vol = integrate_shell([](const Vector3d&) { return 1.0; }, c, ri, ro);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * std::numbers::pi * (ro * ro * ro - ri * ri * ri)).epsilon(1e-12));
  const double r2 = integrate_shell([&](const Vector3d& x) { return 1.0 / (x - c).squaredNorm(); }, c, ri, ro);
  CHECK(r2 == doctest::Approx(4.0 * std::numbers::pi * (ro - ri)).epsilon(1e-12));
}

TEST_CASE("plane split integrates a spherical cap exactly") {
  // Ball of radius 1 cut at height 0.4 above the centre: cap volume pi h^2 (3 - h)/3, h = 0.6.
  // Spheres with r < 0.4 miss the cap, so the shell starts there.
  ShellOptions opt;
  opt.plane_z = 0.4;
  const double cap = integrate_shell([](const Vector3d& x) { return x.z() > 0.4 ? 1.0 : 0.0; },
                                     Vector3d::Zero(), 0.4, 1.0, opt);
  const double h = 0.6;
  CHECK(cap == doctest::Approx(std::numbers::pi * h * h * (3 - h) / 3).epsilon(1e-12));
}
