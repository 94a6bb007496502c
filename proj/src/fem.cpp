#include "eitlab/fem.hpp"

#include "eitlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace eitlab {

std::array<Vec3, 4> hat_gradients(const std::array<Vec3, 4>& v) {
  Mat3 m;
  m.col(0) = v[1] - v[0];
  m.col(1) = v[2] - v[0];
  m.col(2) = v[3] - v[0];
  const Mat3 inv = m.inverse();
  std::array<Vec3, 4> g;
  for (int i = 0; i < 3; ++i) g[i + 1] = inv.row(i).transpose();
  g[0] = -(g[1] + g[2] + g[3]);
  return g;
}

Eigen::Matrix4d element_stiffness(const std::array<Vec3, 4>& v, const Mat3& sigma) {
  const double vol = std::abs(tet_volume(v));
  const auto g = hat_gradients(v);
  Eigen::Matrix4d k;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) k(a, b) = vol * g[a].dot(sigma * g[b]);
  return k;
}

double AssembledSystem::distance_to_boundary(const Vec3& x) const {
  return std::min((x - box_lo).minCoeff(), (box_hi - x).minCoeff());
}

AssembledSystem assemble(std::shared_ptr<const SimplicialMesh> mesh, const ConductivityView& cond) {
  if (!mesh) throw FemError("assemble: null mesh");
  AssembledSystem sys;
  sys.mesh = mesh;
  sys.cond = cond;
  const std::size_t ne = mesh->elements.size(), nv = mesh->vertices.size();
  sys.sigma.resize(ne);
  sys.grads.resize(ne);
  sys.volumes.resize(ne);
  std::vector<CsrMatrix::Triplet> trip;
  trip.reserve(16 * ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto v = mesh->element_vertices(static_cast<int>(e));
    const double vol = tet_volume(v);
    if (!(vol > 0.0)) throw FemError("assemble: degenerate element " + std::to_string(e));
    const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    const Mat3 s = cond(mesh->labels[e], bc);
    if (!s.allFinite()) throw FemError("assemble: non-finite conductivity on element " + std::to_string(e));
    const auto g = hat_gradients(v);
    sys.sigma[e] = s;
    sys.grads[e] = g;
    sys.volumes[e] = vol;
    const auto& el = mesh->elements[e];
    for (int a = 0; a < 4; ++a) {
      const Vec3 sg = s * g[a];
      for (int b = 0; b < 4; ++b) trip.push_back({el[a], el[b], vol * sg.dot(g[b])});
    }
  }
  const int n = static_cast<int>(nv);
  sys.K = CsrMatrix::from_triplets(n, n, std::move(trip));
  const auto mask = mesh->boundary_vertex_mask();
  sys.free_index.assign(nv, -1);
  sys.fixed_index.assign(nv, -1);
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      sys.fixed_index[i] = static_cast<int>(sys.fixed_dofs.size());
      sys.fixed_dofs.push_back(i);
    } else {
      sys.free_index[i] = static_cast<int>(sys.free_dofs.size());
      sys.free_dofs.push_back(i);
    }
  }
  sys.K_ff = sys.K.extract(sys.free_dofs, sys.free_dofs);
  sys.box_lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  sys.box_hi = -sys.box_lo;
  for (const auto& p : mesh->vertices) {
    sys.box_lo = sys.box_lo.cwiseMin(p);
    sys.box_hi = sys.box_hi.cwiseMax(p);
  }
  return sys;
}

AssembledSystem assemble(std::shared_ptr<const SimplicialMesh> mesh, const ClassCConductivity& cond) {
  return assemble(std::move(mesh), view(cond));
}

AssembledSystem assemble(std::shared_ptr<const SimplicialMesh> mesh,
                         const ExtendedConductivity& cond) {
  return assemble(std::move(mesh), view(cond));
}

double DiscreteField::eval(const Vec3& x) const {
  const int e = mesh->locate(x);
  if (e < 0) throw FemError("field evaluation outside the mesh");
  const Eigen::Vector4d l = mesh->barycentric(e, x);
  const auto& el = mesh->elements[e];
  double s = 0.0;
  for (int a = 0; a < 4; ++a) s += l[a] * values[el[a]];
  return s;
}

Vec3 DiscreteField::gradient(int e, const AssembledSystem& sys) const {
  const auto& el = mesh->elements[e];
  Vec3 g = Vec3::Zero();
  for (int a = 0; a < 4; ++a) g += values[el[a]] * sys.grads[e][a];
  return g;
}

void write_field_csv(std::ostream& os, const DiscreteField& f) {
  os << "vertex_index,x1,x2,x3,value\n";
  os.precision(17);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const Vec3& p = f.mesh->vertices[i];
    os << i << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << f.values[i] << '\n';
  }
}

std::vector<double> boundary_data(const AssembledSystem& sys,
                                  const std::function<double(const Vec3&)>& f) {
  std::vector<double> g(sys.fixed_dofs.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = f(sys.mesh->vertices[sys.fixed_dofs[i]]);
  return g;
}

DirichletSolution solve_system(const AssembledSystem& sys, std::span<const double> g_fixed,
                               std::span<const double> b_free, double tol) {
  if (g_fixed.size() != sys.fixed_dofs.size()) throw FemError("solve: boundary data size mismatch");
  if (!b_free.empty() && b_free.size() != sys.free_dofs.size()) {
    throw FemError("solve: load vector size mismatch");
  }
  for (double v : g_fixed)
    if (!std::isfinite(v)) throw FemError("solve: non-finite boundary data");
  const std::size_t nv = sys.mesh->vertices.size(), nf = sys.free_dofs.size();
  std::vector<double> u(nv, 0.0), ku(nv);
  for (std::size_t i = 0; i < g_fixed.size(); ++i) u[sys.fixed_dofs[i]] = g_fixed[i];
  sys.K.multiply(u, ku);
  std::vector<double> rhs(nf), x(nf, 0.0);
  for (std::size_t i = 0; i < nf; ++i) {
    rhs[i] = (b_free.empty() ? 0.0 : b_free[i]) - ku[sys.free_dofs[i]];
  }
  const CgResult cg = pcg(sys.K_ff, rhs, x, tol);
  for (std::size_t i = 0; i < nf; ++i) u[sys.free_dofs[i]] = x[i];
  return {DiscreteField{sys.mesh, std::move(u)}, {cg.iterations, cg.final_residual, "pcg-jacobi"}};
}

DirichletSolution solve_dirichlet(const AssembledSystem& sys, std::span<const double> g_fixed,
                                  double tol) {
  return solve_system(sys, g_fixed, {}, tol);
}

double dirichlet_energy(const AssembledSystem& sys, const DiscreteField& u) {
  std::vector<double> ku(u.values.size());
  sys.K.multiply(u.values, ku);
  return dot(u.values, ku);
}

std::string to_string(GreenMethod m) {
  switch (m) {
    case GreenMethod::Split: return "SPLIT";
    case GreenMethod::Mollified: return "MOLLIFIED";
    case GreenMethod::Galerkin: return "GALERKIN";
  }
  return "?";
}

GreenMethod green_method_from_string(const std::string& s) {
  if (s == "SPLIT" || s == "split") return GreenMethod::Split;
  if (s == "MOLLIFIED" || s == "mollified") return GreenMethod::Mollified;
  if (s == "GALERKIN" || s == "galerkin") return GreenMethod::Galerkin;
  throw FemError("unknown Green method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Split Green's function

double SplitPart::cutoff(double r) const {
  if (r <= rho) return 1.0;
  if (r >= 2.0 * rho) return 0.0;
  const double s = (r - rho) / rho;
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

Vec3 SplitPart::cutoff_grad(const Vec3& d) const {
  const double r = d.norm();
  if (r <= rho || r >= 2.0 * rho) return Vec3::Zero();
  const double s = (r - rho) / rho;
  const double dr = -30.0 * s * s * (1.0 - s) * (1.0 - s) / rho;
  return dr * d / r;
}

double SplitPart::H0(const Vec3& x) const {
  return kernel.eval(x - Vec3(0, 0, plane_z), eta) / gamma_low;
}

Vec3 SplitPart::grad_H0(const Vec3& x, Side side) const {
  return kernel.grad(x - Vec3(0, 0, plane_z), eta, side) / gamma_low;
}

Side SplitPart::side_of(const Vec3& x) const {
  return x.z() > plane_z ? Side::Upper : Side::Lower;
}

double GreenApprox::value(const Vec3& x) const {
  double v = w.eval(x);
  if (singular) {
    const double r = (x - y).norm();
    if (r == 0.0) throw FemError("Green's function evaluated at its source");
    if (r < 2.0 * singular->rho) v += singular->cutoff(r) * singular->H0(x);
  }
  return v;
}

Vec3 GreenApprox::gradient(const Vec3& x, int e) const {
  if (e < 0) e = w.mesh->locate(x);
  if (e < 0) throw FemError("Green's gradient outside the mesh");
  Vec3 g = w.gradient(e, *system);
  if (singular) {
    const Vec3 d = x - y;
    const double r = d.norm();
    if (r == 0.0) throw FemError("Green's gradient evaluated at its source");
    if (r < 2.0 * singular->rho) {
      Side side = singular->side_of(x);
      if (x.z() == singular->plane_z) side = singular->side_of(w.mesh->barycenter(e));
      g += singular->cutoff(r) * singular->grad_H0(x, side) +
           singular->H0(x) * singular->cutoff_grad(d);
    }
  }
  return g;
}

namespace {

struct Plane {
  const InterfaceGraph* graph = nullptr;  // null: the flat top face z = 1
  int lower;
  int upper;
  double height(const Vec2& p) const { return graph ? (*graph)(p) : 1.0; }
};

Eigen::Vector4d barycentric_from_grads(const std::array<Vec3, 4>& g, const Vec3& v0, const Vec3& x) {
  Eigen::Vector4d l;
  for (int a = 1; a < 4; ++a) l[a] = g[a].dot(x - v0);
  l[0] = 1.0 - l[1] - l[2] - l[3];
  return l;
}

SplitPart build_split(const AssembledSystem& sys, const Vec3& y, int label_y,
                      const GreenOptions& opt) {
  const auto& cond = sys.cond;
  const double h = sys.mesh->h;
  const double dist = sys.distance_to_boundary(y);
  double r1 = 0.25 * 0.75 / 3.0;
  if (cond.partition) {
    const auto& d = cond.partition->data();
    r1 = d.r0 / 3.0 * std::min(0.5 * std::pow(8.0 * d.M, -1.0 / d.alpha), 0.25);
  }
  const double rho = opt.cutoff_rho ? *opt.cutoff_rho : std::min(std::max(r1 / 4.0, 4.0 * h), dist / 3.0);
  if (!(rho > 0.0) || 2.0 * rho >= dist) {
    throw FemError("solve_green: cutoff support reaches the boundary; move the source inward");
  }

  std::vector<Plane> planes;
  if (cond.partition) {
    const auto& ifs = cond.partition->interfaces();
    for (std::size_t i = 0; i < ifs.size(); ++i) {
      planes.push_back({&ifs[i], static_cast<int>(i) + 1, static_cast<int>(i) + 2});
    }
    if (cond.gamma_by_label.size() > 0 && std::isfinite(cond.gamma_by_label[0]) && sys.box_hi.z() > 1.0) {
      planes.push_back({nullptr, cond.partition->N(), 0});
    }
  }
  const Vec2 yp = y.head<2>();
  const Plane* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& p : planes) {
    const double d = std::abs(p.height(yp) - y.z());
    if (d < best_d) {
      best_d = d;
      best = &p;
    }
  }

  double plane_z, g_low, g_up;
  Mat3 a0;
  if (best) {
    plane_z = best->height(yp);
    constexpr int n = 9;
    const double R = 2.0 * rho;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Vec2 q = yp + R * Vec2(-1.0 + 2.0 * i / (n - 1), -1.0 + 2.0 * j / (n - 1));
        if ((q - yp).norm() > R || q.minCoeff() < 0.0 || q.maxCoeff() > 1.0) continue;
        if (std::abs(best->height(q) - plane_z) > 1e-12) {
          throw FemError("solve_green: SPLIT needs a flat interface near the source; use MOLLIFIED");
        }
      }
    g_low = cond.gamma(best->lower);
    g_up = cond.gamma(best->upper);
    a0 = cond.A(Vec3(y.x(), y.y(), plane_z));
  } else {
    plane_z = y.z() - 1e6;
    g_low = g_up = cond.gamma(label_y);
    a0 = cond.A(y);
  }
  return SplitPart{AnisoTwoPhaseKernel<3>(a0, g_up / g_low), plane_z, g_low, g_up, rho,
                   y - Vec3(0, 0, plane_z)};
}

std::vector<double> split_load(const AssembledSystem& sys, const SplitPart& sp, const Vec3& y) {
  const auto& mesh = *sys.mesh;
  const auto& cond = sys.cond;
  const Mat3 a0 = sp.kernel.basis.A0;
  std::vector<double> b(mesh.vertices.size(), 0.0);
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto v = mesh.element_vertices(static_cast<int>(e));
    const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    double maxd = 0.0;
    for (const auto& p : v) maxd = std::max(maxd, (p - bc).norm());
    const double dc = (bc - y).norm();
    if (dc - maxd >= 2.0 * sp.rho) continue;
    const bool upper = bc.z() > sp.plane_z;
    const Side side = upper ? Side::Upper : Side::Lower;
    const double g0 = upper ? sp.gamma_up : sp.gamma_low;
    const Mat3 s0 = g0 * a0;
    const int label = mesh.labels[e];
    const bool same = cond.A_constant && cond.gamma(label) == g0;
    const bool touches_annulus = dc + maxd > sp.rho;
    if (same && !touches_annulus) continue;
    const auto& g = sys.grads[e];
    auto f = [&](const Vec3& x) -> Eigen::Vector4d {
      const Vec3 d = x - y;
      const double r = d.norm();
      Eigen::Vector4d out = Eigen::Vector4d::Zero();
      if (r < 1e-300 || r >= 2.0 * sp.rho) return out;
      const double chi = sp.cutoff(r);
      const Vec3 gchi = sp.cutoff_grad(d);
      const double H = sp.H0(x);
      const Vec3 gH = sp.grad_H0(x, side);
      const Eigen::Vector4d lam = barycentric_from_grads(g, v[0], x);
      const Vec3 s0gchi = s0 * gchi;
      const double t1 = s0gchi.dot(gH);
      for (int a = 0; a < 4; ++a) out[a] = lam[a] * t1 - H * s0gchi.dot(g[a]);
      if (!same) {
        const Vec3 flux = (cond(label, x) - s0) * (chi * gH + H * gchi);
        for (int a = 0; a < 4; ++a) out[a] -= flux.dot(g[a]);
      }
      return out;
    };
    Eigen::Vector4d I = Eigen::Vector4d::Zero();
    if (!same && dc - maxd < 2.0 * maxd) {
      I = integrate_tet_adaptive<4>(f, v, y, 3, 1.0, 6);
    } else {
      for (const auto& child : subdivide_tet(v))
        for (const auto& q : tet_rule(child, 3)) I += q.w * f(q.x);
    }
    const auto& el = mesh.elements[e];
    for (int a = 0; a < 4; ++a) b[el[a]] += I[a];
  }
  return b;
}

std::vector<double> mollified_load(const AssembledSystem& sys, const Vec3& y) {
  const auto& mesh = *sys.mesh;
  const double R = 2.0 * mesh.h;
  std::vector<double> b(mesh.vertices.size(), 0.0);
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto v = mesh.element_vertices(static_cast<int>(e));
    const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    double maxd = 0.0;
    for (const auto& p : v) maxd = std::max(maxd, (p - bc).norm());
    if ((bc - y).norm() - maxd >= R) continue;
    const auto& g = sys.grads[e];
    Eigen::Vector4d I = Eigen::Vector4d::Zero();
    for (const auto& child : subdivide_tet(v))
      for (const auto& q : tet_rule(child, 4)) {
        const double psi = std::max(0.0, 1.0 - (q.x - y).norm() / R);
        if (psi > 0.0) I += q.w * psi * barycentric_from_grads(g, v[0], q.x);
      }
    const auto& el = mesh.elements[e];
    for (int a = 0; a < 4; ++a) b[el[a]] += I[a];
  }
  double total = 0.0;
  for (double x : b) total += x;
  if (!(total > 0.0)) throw FemError("solve_green: mollifier misses the mesh");
  for (double& x : b) x /= total;
  return b;
}

}  // namespace

GreenApprox solve_green(const AssembledSystem& sys, const Vec3& y, GreenMethod method,
                        const GreenOptions& opt) {
  const auto& mesh = *sys.mesh;
  const double h = mesh.h;
  if (sys.distance_to_boundary(y) < 2.0 * h) {
    std::ostringstream msg;
    msg << "solve_green: source (" << y.x() << ", " << y.y() << ", " << y.z()
        << ") closer than 2h to the boundary";
    throw FemError(msg.str());
  }
  const int ey = mesh.locate(y);
  if (ey < 0) throw FemError("solve_green: source outside the mesh");

  GreenApprox g{y, method, std::nullopt, {}, 4.0 * h, {}, &sys};
  std::vector<double> b_full;
  std::vector<double> g_fixed(sys.fixed_dofs.size(), 0.0);
  switch (method) {
    case GreenMethod::Split: {
      g.singular = build_split(sys, y, mesh.labels[ey], opt);
      g.r_min = h / 8.0;
      b_full = split_load(sys, *g.singular, y);
      for (std::size_t i = 0; i < g_fixed.size(); ++i) {
        const Vec3& p = mesh.vertices[sys.fixed_dofs[i]];
        const double r = (p - y).norm();
        if (r < 2.0 * g.singular->rho) g_fixed[i] = -g.singular->cutoff(r) * g.singular->H0(p);
      }
      break;
    }
    case GreenMethod::Mollified:
      b_full = mollified_load(sys, y);
      break;
    case GreenMethod::Galerkin: {
      b_full.assign(mesh.vertices.size(), 0.0);
      const Eigen::Vector4d l = mesh.barycentric(ey, y);
      for (int a = 0; a < 4; ++a) b_full[mesh.elements[ey][a]] += l[a];
      break;
    }
  }
  std::vector<double> b_free(sys.free_dofs.size());
  for (std::size_t i = 0; i < b_free.size(); ++i) b_free[i] = b_full[sys.free_dofs[i]];
  auto sol = solve_system(sys, g_fixed, b_free, opt.tol);
  g.w = std::move(sol.u);
  g.diagnostics = sol.diagnostics;
  g.diagnostics.method = to_string(method);
  return g;
}

double integrate_outside_ball(const std::function<double(const Vec3&)>& f,
                              const std::array<Vec3, 4>& v, const Vec3& c, double r, int m,
                              int depth) {
  bool all_inside = true;
  for (const auto& p : v) all_inside = all_inside && (p - c).norm() <= r;
  if (all_inside) return 0.0;
  const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
  double maxd = 0.0;
  for (const auto& p : v) maxd = std::max(maxd, (p - bc).norm());
  const bool all_outside = (bc - c).norm() - maxd >= r;
  if (all_outside || depth == 0) {
    double s = 0.0;
    for (const auto& q : tet_rule(v, m))
      if (all_outside || (q.x - c).norm() > r) s += q.w * f(q.x);
    return s;
  }
  double s = 0.0;
  for (const auto& child : subdivide_tet(v)) s += integrate_outside_ball(f, child, c, r, m, depth - 1);
  return s;
}

double annulus_energy(const GreenApprox& g, double r) {
  if (!(r >= g.r_min)) {
    std::ostringstream msg;
    msg << "annulus_energy: radius " << r << " below the resolution guard " << g.r_min;
    throw FemError(msg.str());
  }
  const AssembledSystem& sys = *g.system;
  const auto& mesh = *sys.mesh;
  double total = 0.0;
  if (!g.singular) {
    auto one = [](const Vec3&) { return 1.0; };
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
      const Vec3 gr = g.w.gradient(static_cast<int>(e), sys);
      const auto v = mesh.element_vertices(static_cast<int>(e));
      total += gr.squaredNorm() * integrate_outside_ball(one, v, g.y, r, 1, 5);
    }
    return total;
  }
  const SplitPart& sp = *g.singular;
  const double R = std::max(r, sp.rho);
  if (r < sp.rho) {
    auto f = [&](const Vec3& x) {
      const int e = mesh.locate(x);
      Side side = sp.side_of(x);
      const Vec3 grad = sp.grad_H0(x, side) + g.w.gradient(e, sys);
      return grad.squaredNorm();
    };
    ShellOptions opt;
    opt.radial_panels = std::max(4, static_cast<int>(std::ceil(3.0 * std::log2(sp.rho / r))));
    opt.radial_points = 4;
    opt.polar_points = 16;
    opt.azimuth_points = 24;
    opt.plane_z = sp.plane_z;
    total += integrate_shell(f, g.y, r, sp.rho, opt);
  }
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const int ei = static_cast<int>(e);
    const auto v = mesh.element_vertices(ei);
    const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    double maxd = 0.0;
    for (const auto& p : v) maxd = std::max(maxd, (p - bc).norm());
    const double dc = (bc - g.y).norm();
    if (dc - maxd >= std::max(2.0 * sp.rho, R)) {
      total += g.w.gradient(ei, sys).squaredNorm() * sys.volumes[e];
      continue;
    }
    auto f = [&](const Vec3& x) { return g.gradient(x, ei).squaredNorm(); };
    total += integrate_outside_ball(f, v, g.y, R, 3, 4);
  }
  return total;
}

}  // namespace eitlab
