#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <vector>

namespace eitlab {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1,1] (Newton iteration on P_n).
const GaussRule& gauss_legendre(int n);

/// Integral of f over [a,b] with an n-point Gauss-Legendre rule.
double integrate_interval(const std::function<double(double)>& f, double a, double b, int n);

struct TetQuadPoint {
  Eigen::Vector3d x;
  double w;
};

/// Collapsed-coordinate (Duffy) product rule with m points per direction on the
/// tetrahedron with the given vertices. Weights sum to the volume.
std::vector<TetQuadPoint> tet_rule(const std::array<Eigen::Vector3d, 4>& v, int m);

/// Splits a tetrahedron into eight children of equal volume by edge midpoints,
/// cutting the inner octahedron along the 02-13 diagonal. Children may be
/// reoriented; tet_rule uses the absolute volume.
std::array<std::array<Eigen::Vector3d, 4>, 8> subdivide_tet(const std::array<Eigen::Vector3d, 4>& v);

double tet_volume(const std::array<Eigen::Vector3d, 4>& v);
double tet_diameter(const std::array<Eigen::Vector3d, 4>& v);

/// Integrates a vector-valued integrand over a tetrahedron, refining children whose
/// diameter exceeds `ratio` times their distance to `singular`. Refinement stops at
/// `max_depth`.
template <int K>
Eigen::Matrix<double, K, 1> integrate_tet_adaptive(
    const std::function<Eigen::Matrix<double, K, 1>(const Eigen::Vector3d&)>& f,
    const std::array<Eigen::Vector3d, 4>& v, const Eigen::Vector3d& singular, int m,
    double ratio = 0.5, int max_depth = 6) {
  const Eigen::Vector3d c = 0.25 * (v[0] + v[1] + v[2] + v[3]);
  const double diam = tet_diameter(v);
  double dist = (c - singular).norm() - diam;
  if (max_depth > 0 && (dist <= 0.0 || diam > ratio * dist)) {
    Eigen::Matrix<double, K, 1> sum = Eigen::Matrix<double, K, 1>::Zero();
    for (const auto& child : subdivide_tet(v)) {
      sum += integrate_tet_adaptive<K>(f, child, singular, m, ratio, max_depth - 1);
    }
    return sum;
  }
  Eigen::Matrix<double, K, 1> sum = Eigen::Matrix<double, K, 1>::Zero();
  for (const auto& q : tet_rule(v, m)) sum += q.w * f(q.x);
  return sum;
}

/// Options for integrating over a spherical shell r_in < |x - c| < r_out.
struct ShellOptions {
  int radial_panels = 24;     // geometric panels in log r
  int radial_points = 6;      // Gauss points per panel
  int polar_points = 24;      // Gauss points per polar segment (in cos theta)
  int azimuth_points = 32;    // uniform points in phi (periodic trapezoid)
  std::optional<double> plane_z;  // split the polar integral where x_3 = plane_z
};

/// Integral of f over the shell in spherical coordinates about c. The polar
/// integral is split where the sphere crosses the optional horizontal plane.
double integrate_shell(const std::function<double(const Eigen::Vector3d&)>& f,
                       const Eigen::Vector3d& c, double r_in, double r_out,
                       const ShellOptions& opt = {});

}  // namespace eitlab
