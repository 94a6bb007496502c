#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eitlab/kernels.hpp"
#include "eitlab/quadrature.hpp"

#include <cmath>
#include <numbers>

using namespace eitlab;
using V3 = VecN<3>;
using M3 = MatN<3>;

namespace {

// Outward flux of sigma grad H(., eta) through spheres about eta, averaged over the
// shell r_in < r < r_out. Equals -1 for a fundamental solution.
template <class Grad>
double shell_flux(const Grad& sigma_grad, const V3& eta, double r_in, double r_out) {
  ShellOptions opt;
  opt.plane_z = 0.0;
  const double s = integrate_shell(
      [&](const Eigen::Vector3d& x) { return sigma_grad(x).dot((x - eta).normalized()); }, eta, r_in,
      r_out, opt);
  return s / (r_out - r_in);
}

}  // namespace

TEST_CASE("Laplace fundamental solution values and gradient") {
  const LaplaceKernel<3> g;
  CHECK(gamma_eval(g, V3(1, 0, 0), V3(V3::Zero())) == doctest::Approx(1.0 / (4 * std::numbers::pi)));
  CHECK(gamma_eval(g, V3(0, 2, 0), V3(V3::Zero())) == doctest::Approx(1.0 / (8 * std::numbers::pi)));
  CHECK(unit_sphere_area(3) == doctest::Approx(4 * std::numbers::pi));
  const V3 x(0.3, -0.2, 0.7), y(-0.1, 0.4, 0.2);
  const V3 gr = gamma_grad(g, x, y);
  CHECK(gr.dot(y - x) > 0.0);
  CHECK(gr.normalized().isApprox((y - x).normalized()));
  V3 fd;
  for (int a = 0; a < 3; ++a) {
    V3 e = V3::Zero();
    e[a] = 1e-6;
    fd[a] = (g.eval(x + e, y) - g.eval(x - e, y)) / 2e-6;
  }
  CHECK((fd - gr).norm() < 1e-7);
  CHECK_THROWS_AS(g.eval(x, x), KernelError);
  CHECK_THROWS_AS(g.grad(x, x), KernelError);
  const LaplaceKernel<4> g4;
  CHECK(g4.eval(VecN<4>(1, 0, 0, 0), VecN<4>::Zero()) == doctest::Approx(1.0 / (2 * 2 * std::numbers::pi * std::numbers::pi)));
}

TEST_CASE("mirror flips the last coordinate") {
  CHECK(mirror<3>(V3(1, 2, 3)) == V3(1, 2, -3));
  CHECK(mirror<3>(mirror<3>(V3(1, 2, 3))) == V3(1, 2, 3));
}

TEST_CASE("two-phase kernel with contrast one is the Laplace kernel") {
  const TwoPhaseKernel<3> h(1.0);
  const LaplaceKernel<3> g;
  for (const V3& xi : {V3(0.1, 0.2, 0.3), V3(0.1, 0.2, -0.3), V3(0.5, 0, 0)}) {
    const V3 eta(-0.2, 0.1, 0.25);
    CHECK(h.eval(xi, eta) == g.eval(xi, eta));
  }
  CHECK_THROWS_AS(TwoPhaseKernel<3>(0.0), KernelError);
}

TEST_CASE("two-phase kernel satisfies the transmission conditions") {
  const double k = 3.0;
  const TwoPhaseKernel<3> h(k);
  for (const V3& eta : {V3(0.1, -0.2, 0.4), V3(0.1, -0.2, -0.4)}) {
    const V3 on(0.3, 0.5, 0.0);
    const V3 up(0.3, 0.5, 1e-12);
    // Points on the plane belong to the lower half-space; the value is continuous.
    CHECK(two_phase_eval(h, on, eta) == doctest::Approx(two_phase_eval(h, up, eta)).epsilon(1e-10));
    const V3 gu = two_phase_grad(h, on, eta, Side::Upper);
    const V3 gl = two_phase_grad(h, on, eta, Side::Lower);
    CHECK(k * gu.z() == doctest::Approx(gl.z()).epsilon(1e-12));
    CHECK(gu.x() == doctest::Approx(gl.x()).epsilon(1e-12));
    CHECK_THROWS_AS(two_phase_grad(h, on, eta), KernelError);
    CHECK_FALSE(in_upper(on.z()));
  }
}

TEST_CASE("two-phase kernel is a fundamental solution in the weak sense") {
  const double k = 4.0;
  const TwoPhaseKernel<3> h(k);
  for (const V3& eta : {V3(0, 0, -0.15), V3(0, 0, 0.2)}) {
    auto sg = [&](const Eigen::Vector3d& x) -> V3 {
      return (x.z() > 0 ? k : 1.0) * h.grad(x, eta);
    };
    CHECK(shell_flux(sg, eta, 0.3, 0.5) == doctest::Approx(-1.0).epsilon(1e-8));
    // A sphere not crossing the interface sees the same flux.
    CHECK(shell_flux(sg, eta, 0.01, 0.1) == doctest::Approx(-1.0).epsilon(1e-8));
  }
}

TEST_CASE("change of basis for identity and diagonal matrices") {
  const auto id = build_change_of_basis<3>(M3::Identity());
  CHECK(id.L == M3::Identity());
  CHECK(id.R == M3::Identity());
  CHECK(id.detfactor == 1.0);
  CHECK(j_matrix<3>(M3::Identity()) == M3::Identity());

  const M3 d = V3(4, 1, 1).asDiagonal();
  const auto cb = build_change_of_basis<3>(d);
  CHECK(cb.L == M3(V3(0.5, 1, 1).asDiagonal()));
  CHECK(cb.detfactor == 0.5);
  CHECK(j_matrix<3>(d) == M3(V3(0.5, 1, 1).asDiagonal()));
}

TEST_CASE("change of basis maps A0 to the identity and preserves the interface") {
  M3 a;
  a << 2.0, 0.3, 0.4, 0.3, 1.5, -0.2, 0.4, -0.2, 1.2;
  const auto cb = build_change_of_basis<3>(a);
  CHECK((cb.L * a * cb.L.transpose() - M3::Identity()).norm() < 1e-13);
  CHECK((cb.R.transpose() * cb.R - M3::Identity()).norm() < 1e-14);
  CHECK(cb.R.determinant() == doctest::Approx(1.0));
  CHECK((cb.R * cb.v.normalized() - V3::Unit(2)).norm() < 1e-14);
  // (L xi)_n = xi_n / |v|, so the plane x_n = 0 is fixed.
  const V3 xi(0.3, -0.7, 0.2);
  CHECK((cb.L * xi).z() == doctest::Approx(xi.z() / cb.v.norm()).epsilon(1e-14));
  CHECK(cb.Lstar.row(2).isApprox(-cb.L.row(2)));
  CHECK(cb.detfactor == doctest::Approx(1.0 / std::sqrt(a.determinant())));
  const M3 j = j_matrix<3>(a);
  CHECK((j * j * a - M3::Identity()).norm() < 1e-13);
}

TEST_CASE("non-SPD matrices are rejected with a witness") {
  const M3 bad = V3(1, -1, 1).asDiagonal();
  try {
    (void)j_matrix<3>(bad);
    FAIL("expected KernelError");
  } catch (const KernelError& e) {
    CHECK(std::string(e.what()).find("not positive definite") != std::string::npos);
  }
  M3 ns = M3::Identity();
  ns(0, 1) = 0.5;
  CHECK_THROWS_AS(build_change_of_basis<3>(ns), KernelError);
}

TEST_CASE("anisotropic kernel across the interface has the closed form") {
  M3 a;
  a << 2.0, 0.3, 0.4, 0.3, 1.5, -0.2, 0.4, -0.2, 1.2;
  const AnisoTwoPhaseKernel<3> kern(a, 2.5);
  const V3 xi(0.2, 0.1, 0.3), eta(-0.1, 0.2, -0.25);
  CHECK(aniso_two_phase_eval(kern, xi, eta) ==
        doctest::Approx(kern.eval_opposite_closed_form(xi, eta)).epsilon(1e-12));
  CHECK(kern.eval(eta, xi) == doctest::Approx(kern.eval(xi, eta)).epsilon(1e-12));
  CHECK_THROWS_AS(kern.eval(xi, xi), KernelError);
  CHECK_THROWS_AS(kern.grad(V3(0.1, 0.1, 0.0), eta), KernelError);

  const AnisoTwoPhaseKernel<3> iso(M3::Identity(), 2.5);
  const TwoPhaseKernel<3> h(2.5);
  CHECK(iso.eval(xi, eta) == h.eval(xi, eta));
}

TEST_CASE("anisotropic kernel is a fundamental solution in the weak sense") {
  M3 a;
  a << 2.0, 0.3, 0.4, 0.3, 1.5, -0.2, 0.4, -0.2, 1.2;
  const double k = 3.0;
  const AnisoTwoPhaseKernel<3> kern(a, k);
  const V3 eta(0.05, -0.05, -0.15);
  auto sg = [&](const Eigen::Vector3d& x) -> V3 {
    return (x.z() > 0 ? k : 1.0) * (a * kern.grad(x, eta));
  };
  CHECK(shell_flux(sg, eta, 0.3, 0.5) == doctest::Approx(-1.0).epsilon(1e-7));
}
