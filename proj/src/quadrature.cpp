#include "eitlab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace eitlab {

namespace {

// Legendre P_n and P_{n-1} at x by the three-term recurrence.
std::pair<double, double> legendre_pair(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, p0};
}

GaussRule compute_gauss_legendre(int n) {
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      const auto [pn, pm] = legendre_pair(n, x);
      dp = n * (x * pn - pm) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const auto [pn, pm] = legendre_pair(n, x);
    dp = n * (x * pn - pm) / (x * x - 1.0);
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
  if (n < 1 || n > 256) throw std::invalid_argument("gauss_legendre: n must be in [1,256]");
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
  return it->second;
}

double integrate_interval(const std::function<double(double)>& f, double a, double b, int n) {
  const GaussRule& g = gauss_legendre(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += g.weights[i] * f(mid + half * g.nodes[i]);
  return s * half;
}

double tet_volume(const std::array<Eigen::Vector3d, 4>& v) {
  Eigen::Matrix3d m;
  m.col(0) = v[1] - v[0];
  m.col(1) = v[2] - v[0];
  m.col(2) = v[3] - v[0];
  return m.determinant() / 6.0;
}

double tet_diameter(const std::array<Eigen::Vector3d, 4>& v) {
  double d = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) d = std::max(d, (v[i] - v[j]).norm());
  return d;
}

std::vector<TetQuadPoint> tet_rule(const std::array<Eigen::Vector3d, 4>& v, int m) {
  const GaussRule& g = gauss_legendre(m);
  const double vol6 = std::abs(6.0 * tet_volume(v));
  const Eigen::Vector3d e1 = v[1] - v[0], e2 = v[2] - v[0], e3 = v[3] - v[0];
  std::vector<TetQuadPoint> pts;
  pts.reserve(static_cast<std::size_t>(m) * m * m);
  for (int i = 0; i < m; ++i) {
    const double u = 0.5 * (g.nodes[i] + 1.0);
    for (int j = 0; j < m; ++j) {
      const double s = 0.5 * (g.nodes[j] + 1.0);
      for (int k = 0; k < m; ++k) {
        const double t = 0.5 * (g.nodes[k] + 1.0);
        const double a = u, b = (1.0 - u) * s, c = (1.0 - u) * (1.0 - s) * t;
        const double w = g.weights[i] * g.weights[j] * g.weights[k] / 8.0 * (1.0 - u) * (1.0 - u) *
                         (1.0 - s) * vol6;
        pts.push_back({v[0] + a * e1 + b * e2 + c * e3, w});
      }
    }
  }
  return pts;
}

std::array<std::array<Eigen::Vector3d, 4>, 8> subdivide_tet(const std::array<Eigen::Vector3d, 4>& v) {
  auto mid = [&](int a, int b) -> Eigen::Vector3d { return 0.5 * (v[a] + v[b]); };
  const Eigen::Vector3d x01 = mid(0, 1), x02 = mid(0, 2), x03 = mid(0, 3), x12 = mid(1, 2),
                        x13 = mid(1, 3), x23 = mid(2, 3);
  return {{{v[0], x01, x02, x03},
           {x01, v[1], x12, x13},
           {x02, x12, v[2], x23},
           {x03, x13, x23, v[3]},
           {x01, x02, x03, x13},
           {x01, x02, x12, x13},
           {x02, x03, x13, x23},
           {x02, x12, x13, x23}}};
}

double integrate_shell(const std::function<double(const Eigen::Vector3d&)>& f,
                       const Eigen::Vector3d& c, double r_in, double r_out,
                       const ShellOptions& opt) {
  if (!(r_out > r_in) || r_in < 0.0) throw std::invalid_argument("integrate_shell: bad radii");
  const GaussRule& gr = gauss_legendre(opt.radial_points);
  const GaussRule& gp = gauss_legendre(opt.polar_points);
  const int nphi = opt.azimuth_points;
  std::vector<double> cphi(nphi), sphi(nphi);
  for (int k = 0; k < nphi; ++k) {
    const double phi = 2.0 * std::numbers::pi * (k + 0.5) / nphi;
    cphi[k] = std::cos(phi);
    sphi[k] = std::sin(phi);
  }
  const double dphi = 2.0 * std::numbers::pi / nphi;

  auto sphere = [&](double r) {
    std::vector<std::pair<double, double>> segments;
    double split = 2.0;
    if (opt.plane_z) {
      const double mu = (*opt.plane_z - c.z()) / r;
      if (mu > -1.0 && mu < 1.0) split = mu;
    }
    if (split < 2.0) {
      segments = {{-1.0, split}, {split, 1.0}};
    } else {
      segments = {{-1.0, 1.0}};
    }
    double s = 0.0;
    for (const auto& [lo, hi] : segments) {
      const double half = 0.5 * (hi - lo), midp = 0.5 * (hi + lo);
      for (int i = 0; i < opt.polar_points; ++i) {
        const double ct = midp + half * gp.nodes[i];
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        double ring = 0.0;
        for (int k = 0; k < nphi; ++k) {
          const Eigen::Vector3d x = c + r * Eigen::Vector3d(st * cphi[k], st * sphi[k], ct);
          ring += f(x);
        }
        s += gp.weights[i] * half * ring * dphi;
      }
    }
    return s * r * r;
  };

  double total = 0.0;
  const int np = opt.radial_panels;
  for (int p = 0; p < np; ++p) {
    double a, b;
    if (r_in > 0.0) {
      const double q = std::log(r_out / r_in) / np;
      a = r_in * std::exp(q * p);
      b = r_in * std::exp(q * (p + 1));
    } else {
      a = r_out * p / np;
      b = r_out * (p + 1) / np;
    }
    const double half = 0.5 * (b - a), midp = 0.5 * (a + b);
    for (int i = 0; i < opt.radial_points; ++i) {
      total += gr.weights[i] * half * sphere(midp + half * gr.nodes[i]);
    }
  }
  return total;
}

}  // namespace eitlab
