#pragma once

// Closed-form fundamental solutions for the Laplacian and for the two-phase
// operator div((1 + (k-1) chi_+) A0 grad) with a flat interface x_n = 0.
// Convention: div(a grad H(., eta)) = -delta_eta. Points with x_n = 0 belong to
// the closed lower half-space.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace eitlab {

class KernelError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

template <int Dim>
using VecN = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using MatN = Eigen::Matrix<double, Dim, Dim>;

/// Surface area of the unit sphere in R^n.
inline double unit_sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

template <int Dim>
struct LaplaceKernel {
  static_assert(Dim >= 3, "kernels require n >= 3");
  static constexpr int n = Dim;
  double omega_n = unit_sphere_area(Dim);

  double eval(const VecN<Dim>& x, const VecN<Dim>& y) const {
    const double r = (x - y).norm();
    if (r == 0.0) throw KernelError("laplace kernel: x == y");
    return std::pow(r, 2.0 - n) / ((n - 2) * omega_n);
  }

  /// Gradient in x; points from x toward y.
  VecN<Dim> grad(const VecN<Dim>& x, const VecN<Dim>& y) const {
    const VecN<Dim> d = x - y;
    const double r = d.norm();
    if (r == 0.0) throw KernelError("laplace kernel gradient: x == y");
    return -d * (std::pow(r, -static_cast<double>(n)) / omega_n);
  }
};

template <int Dim>
double gamma_eval(const LaplaceKernel<Dim>& k, const VecN<Dim>& x, const VecN<Dim>& y) {
  return k.eval(x, y);
}

template <int Dim>
VecN<Dim> gamma_grad(const LaplaceKernel<Dim>& k, const VecN<Dim>& x, const VecN<Dim>& y) {
  return k.grad(x, y);
}

template <int Dim>
VecN<Dim> mirror(VecN<Dim> x) {
  x[Dim - 1] = -x[Dim - 1];
  return x;
}

/// Which one-sided limit to take when the gradient is requested on the interface.
enum class Side { Auto, Upper, Lower };

inline bool in_upper(double xn) { return xn > 0.0; }

template <int Dim>
struct TwoPhaseKernel {
  double k;
  LaplaceKernel<Dim> gamma{};

  explicit TwoPhaseKernel(double contrast) : k(contrast) {
    if (!(k > 0.0)) throw KernelError("two-phase kernel: contrast must be positive");
  }

  /// Coefficients (direct, image) for the branch of (xi, eta).
  std::pair<double, double> coefficients(bool xi_up, bool eta_up) const {
    if (xi_up && eta_up) return {1.0 / k, (k - 1.0) / (k * (k + 1.0))};
    if (xi_up != eta_up) return {2.0 / (k + 1.0), 0.0};
    return {1.0, (1.0 - k) / (k + 1.0)};
  }

  double eval(const VecN<Dim>& xi, const VecN<Dim>& eta) const {
    const bool xu = in_upper(xi[Dim - 1]), eu = in_upper(eta[Dim - 1]);
    const auto [a, b] = coefficients(xu, eu);
    double v = a * gamma.eval(xi, eta);
    if (b != 0.0) v += b * gamma.eval(xi, mirror<Dim>(eta));
    return v;
  }

  VecN<Dim> grad(const VecN<Dim>& xi, const VecN<Dim>& eta, Side side = Side::Auto) const {
    bool xu;
    if (side == Side::Auto) {
      if (xi[Dim - 1] == 0.0) {
        throw KernelError("two-phase gradient on the interface: request a side explicitly");
      }
      xu = in_upper(xi[Dim - 1]);
    } else {
      xu = side == Side::Upper;
    }
    const bool eu = in_upper(eta[Dim - 1]);
    const auto [a, b] = coefficients(xu, eu);
    VecN<Dim> g = a * gamma.grad(xi, eta);
    if (b != 0.0) g += b * gamma.grad(xi, mirror<Dim>(eta));
    return g;
  }
};

template <int Dim>
double two_phase_eval(const TwoPhaseKernel<Dim>& h, const VecN<Dim>& xi, const VecN<Dim>& eta) {
  return h.eval(xi, eta);
}

template <int Dim>
VecN<Dim> two_phase_grad(const TwoPhaseKernel<Dim>& h, const VecN<Dim>& xi, const VecN<Dim>& eta,
                         Side side = Side::Auto) {
  return h.grad(xi, eta, side);
}

namespace detail {

template <int Dim>
Eigen::SelfAdjointEigenSolver<MatN<Dim>> checked_spd(const MatN<Dim>& a, const char* who) {
  if ((a - a.transpose()).norm() > 1e-12 * std::max(1.0, a.norm())) {
    throw KernelError(std::string(who) + ": matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatN<Dim>> es(a);
  if (es.info() != Eigen::Success) throw KernelError(std::string(who) + ": eigen-solve failed");
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    std::ostringstream msg;
    msg << who << ": matrix is not positive definite (eigenvalue " << es.eigenvalues().minCoeff()
        << ")";
    throw KernelError(msg.str());
  }
  return es;
}

/// Eigenvectors and eigenvalues of an SPD matrix; diagonal input is returned
/// as is so that the square roots below are exact.
template <int Dim>
std::pair<MatN<Dim>, VecN<Dim>> spd_eigen(const MatN<Dim>& a, const char* who) {
  const auto es = checked_spd<Dim>(a, who);
  if (MatN<Dim>(a.diagonal().asDiagonal()) == a) return {MatN<Dim>::Identity(), a.diagonal()};
  return {es.eigenvectors(), es.eigenvalues()};
}

}  // namespace detail

/// J = principal square root of A0^{-1}.
template <int Dim>
MatN<Dim> j_matrix(const MatN<Dim>& a0) {
  const auto [Q, lam] = detail::spd_eigen<Dim>(a0, "j_matrix");
  return Q * lam.cwiseInverse().cwiseSqrt().asDiagonal() * Q.transpose();
}

/// L = R sqrt(A0^{-1}), where R is the planar rotation taking v/|v| (v = sqrt(A0) e_n)
/// to e_n and fixing the orthogonal complement of span{e_n, v}.
template <int Dim>
struct ChangeOfBasis {
  MatN<Dim> A0;
  MatN<Dim> L;
  MatN<Dim> Lstar;
  MatN<Dim> R;
  VecN<Dim> v;
  double detfactor;
};

template <int Dim>
ChangeOfBasis<Dim> build_change_of_basis(const MatN<Dim>& a0) {
  const auto [Q, lam] = detail::spd_eigen<Dim>(a0, "build_change_of_basis");
  const MatN<Dim> sqrt_a = Q * lam.cwiseSqrt().asDiagonal() * Q.transpose();
  const MatN<Dim> sqrt_inv = Q * lam.cwiseInverse().cwiseSqrt().asDiagonal() * Q.transpose();

  ChangeOfBasis<Dim> cb;
  cb.A0 = a0;
  const VecN<Dim> en = VecN<Dim>::Unit(Dim - 1);
  cb.v = sqrt_a * en;
  const VecN<Dim> u = cb.v.normalized();
  const double b = u[Dim - 1];
  VecN<Dim> w = u - b * en;
  const double a = w.norm();
  cb.R = MatN<Dim>::Identity();
  if (a > 1e-15) {
    w /= a;
    cb.R += (b - 1.0) * (w * w.transpose() + en * en.transpose()) +
            a * (en * w.transpose() - w * en.transpose());
  }
  cb.L = cb.R * sqrt_inv;
  cb.Lstar = cb.L;
  cb.Lstar.row(Dim - 1) *= -1.0;
  cb.detfactor = std::sqrt(lam.cwiseInverse().prod());
  return cb;
}

template <int Dim>
struct AnisoTwoPhaseKernel {
  ChangeOfBasis<Dim> basis;
  TwoPhaseKernel<Dim> h;

  AnisoTwoPhaseKernel(const MatN<Dim>& a0, double k) : basis(build_change_of_basis<Dim>(a0)), h(k) {}

  double eval(const VecN<Dim>& xi, const VecN<Dim>& eta) const {
    if (xi == eta) throw KernelError("anisotropic kernel: xi == eta");
    return basis.detfactor * h.eval(basis.L * xi, basis.L * eta);
  }

  /// sqrt(det A0^{-1}) (2/(k+1)) <A0^{-1}(xi-eta), xi-eta>^{(2-n)/2} / ((n-2) omega_n).
  double eval_opposite_closed_form(const VecN<Dim>& xi, const VecN<Dim>& eta) const {
    const VecN<Dim> d = xi - eta;
    const double q = d.dot(basis.A0.ldlt().solve(d));
    return basis.detfactor * (2.0 / (h.k + 1.0)) * std::pow(q, 0.5 * (2.0 - Dim)) /
           ((Dim - 2) * h.gamma.omega_n);
  }

  VecN<Dim> grad(const VecN<Dim>& xi, const VecN<Dim>& eta, Side side = Side::Auto) const {
    if (side == Side::Auto && xi[Dim - 1] == 0.0) {
      throw KernelError("anisotropic gradient on the interface: request a side explicitly");
    }
    Side s = side;
    if (s == Side::Auto) s = in_upper(xi[Dim - 1]) ? Side::Upper : Side::Lower;
    return basis.detfactor * (basis.L.transpose() * h.grad(basis.L * xi, basis.L * eta, s));
  }
};

template <int Dim>
double aniso_two_phase_eval(const AnisoTwoPhaseKernel<Dim>& kern, const VecN<Dim>& xi,
                            const VecN<Dim>& eta) {
  return kern.eval(xi, eta);
}

}  // namespace eitlab
