#include "eitlab/dnmap.hpp"

#include "eitlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace eitlab {

TraceSpace build_trace_space(std::shared_ptr<const SimplicialMesh> mesh) {
  auto nodes = mesh->sigma_interior_vertices();
  return build_trace_space(std::move(mesh), std::move(nodes));
}

TraceSpace build_trace_space(std::shared_ptr<const SimplicialMesh> mesh, std::vector<int> nodes) {
  if (nodes.empty()) throw DtnError("trace space: no SIGMA-interior nodes");
  std::sort(nodes.begin(), nodes.end());
  std::map<int, int> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i]] = static_cast<int>(i);
  const int n = static_cast<int>(nodes.size());
  TraceSpace ts;
  ts.M = Eigen::MatrixXd::Zero(n, n);
  ts.K = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t f = 0; f < mesh->facets.size(); ++f) {
    if (mesh->facet_labels[f] != FacetLabel::Sigma) continue;
    const auto& t = mesh->facets[f];
    const Vec3 p0 = mesh->vertices[t[0]], p1 = mesh->vertices[t[1]], p2 = mesh->vertices[t[2]];
    const std::array<Vec3, 3> edge = {p2 - p1, p0 - p2, p1 - p0};
    const double area = 0.5 * (p1 - p0).cross(p2 - p0).norm();
    for (int a = 0; a < 3; ++a) {
      const auto ia = pos.find(t[a]);
      if (ia == pos.end()) continue;
      for (int b = 0; b < 3; ++b) {
        const auto ib = pos.find(t[b]);
        if (ib == pos.end()) continue;
        ts.M(ia->second, ib->second) += area / 12.0 * (a == b ? 2.0 : 1.0);
        ts.K(ia->second, ib->second) += edge[a].dot(edge[b]) / (4.0 * area);
      }
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(ts.K, ts.M);
  if (es.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(ts.M);
    std::ostringstream msg;
    msg << "trace space: generalized eigen-solve failed; mass matrix condition number "
        << em.eigenvalues().maxCoeff() / em.eigenvalues().minCoeff();
    throw DtnError(msg.str());
  }
  ts.mu = es.eigenvalues().cwiseMax(0.0);
  ts.V = es.eigenvectors();
  ts.nodes = std::move(nodes);
  ts.mesh = std::move(mesh);
  return ts;
}

Eigen::MatrixXd h_half_gram(const TraceSpace& ts, double s) {
  const Eigen::VectorXd w = (Eigen::VectorXd::Ones(ts.mu.size()) + ts.mu).array().pow(s).matrix();
  const Eigen::MatrixXd MV = ts.M * ts.V;
  Eigen::MatrixXd N = MV * w.asDiagonal() * MV.transpose();
  return 0.5 * (N + N.transpose());
}

LocalDtN assemble_dtn(const AssembledSystem& sys, const TraceSpace& ts, std::string id, double tol) {
  const int n = static_cast<int>(ts.nodes.size());
  LocalDtN d;
  d.Lambda = Eigen::MatrixXd::Zero(n, n);
  d.nodes = ts.nodes;
  d.conductivity_id = std::move(id);
  std::vector<double> g(sys.fixed_dofs.size(), 0.0), ku(sys.mesh->vertices.size());
  for (int j = 0; j < n; ++j) {
    const int fj = sys.fixed_index[ts.nodes[j]];
    if (fj < 0) throw DtnError("assemble_dtn: trace node is not a boundary vertex");
    std::fill(g.begin(), g.end(), 0.0);
    g[fj] = 1.0;
    DirichletSolution sol;
    try {
      sol = solve_dirichlet(sys, g, tol);
    } catch (const SolverError& e) {
      throw DtnError(std::string("assemble_dtn: ") + e.what(), e.history());
    }
    d.total_iterations += sol.diagnostics.iterations;
    sys.K.multiply(sol.u.values, ku);
    for (int i = 0; i < n; ++i) d.Lambda(i, j) = ku[ts.nodes[i]];
  }
  return d;
}

OpNormResult op_norm_star_detail(const Eigen::MatrixXd& d, const Eigen::MatrixXd& N, double tol,
                                 int max_iter) {
  if (d.rows() != N.rows() || d.cols() != N.cols() || d.rows() != d.cols()) {
    throw DtnError("op_norm_star: dimension mismatch");
  }
  if ((d - d.transpose()).norm() > 1e-9 * std::max(1.0, d.norm())) {
    throw DtnError("op_norm_star: operator difference is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(N);
  if (llt.info() != Eigen::Success) throw DtnError("op_norm_star: Gram matrix is not SPD");
  const Eigen::MatrixXd Linv =
      llt.matrixL().solve(Eigen::MatrixXd::Identity(N.rows(), N.cols()));
  Eigen::MatrixXd C = Linv * d * Linv.transpose();
  C = 0.5 * (C + C.transpose());
  const double s = C.norm();
  OpNormResult out{0.0, 0.0, 0};
  if (s == 0.0) return out;

  // Block power iteration with Rayleigh-Ritz extraction; the block absorbs clusters
  // of nearly equal extremal eigenvalues that stall a single-vector iteration.
  const Eigen::Index n = C.rows();
  const Eigen::Index p = std::min<Eigen::Index>(n, 8);
  Eigen::MatrixXd Z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) Z(i, j) = std::sin(1.0 + i + 0.37 * j * (i + 1));
  }
  std::vector<double> history;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::MatrixXd Q = Z.householderQr().householderQ() * Eigen::MatrixXd::Identity(n, p);
    const Eigen::MatrixXd CQ = C * Q;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q.transpose() * CQ);
    Eigen::Index k = 0;
    es.eigenvalues().cwiseAbs().maxCoeff(&k);
    const double theta = es.eigenvalues()[k];
    const Eigen::VectorXd x = Q * es.eigenvectors().col(k);
    const double res = (CQ * es.eigenvectors().col(k) - theta * x).norm();
    history.push_back(std::abs(theta));
    out.iterations = it;
    if (res <= tol * s) {
      out.value = std::abs(theta);
      out.theta = theta;
      return out;
    }
    Z = CQ * es.eigenvectors();
  }
  throw DtnError("op_norm_star: block power iteration did not converge", history);
}

double op_norm_star(const Eigen::MatrixXd& d, const Eigen::MatrixXd& N, double tol) {
  return op_norm_star_detail(d, N, tol).value;
}

double op_norm_star(const LocalDtN& a, const LocalDtN& b, const TraceSpace& ts) {
  if (a.nodes != b.nodes || a.nodes != ts.nodes) throw DtnError("op_norm_star: trace spaces differ");
  return op_norm_star(a.Lambda - b.Lambda, h_half_gram(ts));
}

void write_dtn(std::ostream& os, const LocalDtN& d) {
  os << d.Lambda.rows() << ' ' << d.Lambda.cols() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < d.Lambda.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.Lambda.cols(); ++j) os << (j ? " " : "") << d.Lambda(i, j);
    os << '\n';
  }
}

nlohmann::json dtn_sidecar(const LocalDtN& d, const SimplicialMesh& mesh) {
  std::ostringstream h;
  h << std::hex << std::setw(16) << std::setfill('0') << mesh.hash();
  return {{"mesh_hash", h.str()}, {"conductivity_id", d.conductivity_id}, {"sigma_nodes", d.nodes}};
}

double distance_to_labels(const SimplicialMesh& mesh, const std::vector<int>& U, const Vec3& x) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    if (std::find(U.begin(), U.end(), mesh.labels[e]) == U.end()) continue;
    for (int v : mesh.elements[e]) best = std::min(best, (mesh.vertices[v] - x).norm());
  }
  return best;
}

namespace {

void check_source(const GreenApprox& g, const std::vector<int>& U, const char* name) {
  const auto& mesh = *g.w.mesh;
  const int e = mesh.locate(g.y);
  if (e >= 0 && std::find(U.begin(), U.end(), mesh.labels[e]) != U.end()) {
    throw DtnError(std::string("s_u_integral: source ") + name + " lies inside U");
  }
  const double d = distance_to_labels(mesh, U, g.y);
  if (d < g.r_min) {
    std::ostringstream msg;
    msg << "s_u_integral: source " << name << " at distance " << d << " from U, below the guard "
        << g.r_min;
    throw DtnError(msg.str());
  }
}

double integrate_pair(const std::function<double(const Vec3&)>& f, const std::array<Vec3, 4>& v,
                      const Vec3& y, const Vec3& z, int depth) {
  const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
  const double diam = tet_diameter(v);
  const double dist = std::min((bc - y).norm(), (bc - z).norm()) - diam;
  if (depth > 0 && diam > 0.5 * dist) {
    double s = 0.0;
    for (const auto& c : subdivide_tet(v)) s += integrate_pair(f, c, y, z, depth - 1);
    return s;
  }
  double s = 0.0;
  for (const auto& q : tet_rule(v, 3)) s += q.w * f(q.x);
  return s;
}

}  // namespace

double s_u_integral(const AssembledSystem& sys1, const AssembledSystem& sys2,
                    const GreenApprox& g1, const GreenApprox& g2, const std::vector<int>& U) {
  if (sys1.mesh != sys2.mesh) throw DtnError("s_u_integral: systems on different meshes");
  check_source(g1, U, "y");
  check_source(g2, U, "z");
  const auto& mesh = *sys1.mesh;
  double total = 0.0;
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const int label = mesh.labels[e];
    if (std::find(U.begin(), U.end(), label) == U.end()) continue;
    const double dg = sys1.cond.gamma(label) - sys2.cond.gamma(label);
    if (dg == 0.0) continue;
    const int ei = static_cast<int>(e);
    const auto v = mesh.element_vertices(ei);
    const Vec3 bc = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    const double diam = tet_diameter(v);
    auto near = [&](const GreenApprox& g) {
      return g.singular && (bc - g.y).norm() - diam < 2.0 * g.singular->rho;
    };
    if (!near(g1) && !near(g2) && sys1.cond.A_constant) {
      const Vec3 a = g1.w.gradient(ei, sys1), b = g2.w.gradient(ei, sys2);
      total += sys1.volumes[e] * dg * a.dot(sys1.cond.A(bc) * b);
      continue;
    }
    auto f = [&](const Vec3& x) {
      return dg * g1.gradient(x, ei).dot(sys1.cond.A(x) * g2.gradient(x, ei));
    };
    total += integrate_pair(f, v, g1.y, g2.y, near(g1) || near(g2) ? 6 : 0);
  }
  return total;
}

WeakResidual su_weak_residual(const AssembledSystem& sys1, const AssembledSystem& sys2,
                              const GreenApprox& g2, const std::vector<int>& U,
                              const std::vector<int>& test_nodes, double tol) {
  const auto& mesh = *sys1.mesh;
  std::vector<char> in_u(mesh.vertices.size(), 0);
  std::vector<int> u_elems;
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    if (std::find(U.begin(), U.end(), mesh.labels[e]) == U.end()) continue;
    u_elems.push_back(static_cast<int>(e));
    for (int v : mesh.elements[e]) in_u[v] = 1;
  }
  // Per-element U contributions of grad G2 weighted by (sigma1 - sigma2), reused for
  // every nodal source.
  std::vector<Vec3> flux(u_elems.size());
  for (std::size_t k = 0; k < u_elems.size(); ++k) {
    const int e = u_elems[k];
    const double dg = sys1.cond.gamma(mesh.labels[e]) - sys2.cond.gamma(mesh.labels[e]);
    const auto v = mesh.element_vertices(e);
    Vec3 acc = Vec3::Zero();
    for (const auto& q : tet_rule(v, 2)) acc += q.w * dg * (sys1.cond.A(q.x) * g2.gradient(q.x, e));
    flux[k] = acc;
  }
  std::map<int, double> S;
  auto s_of = [&](int j) {
    auto it = S.find(j);
    if (it != S.end()) return it->second;
    double val = 0.0;
    if (sys1.free_index[j] >= 0) {
      std::vector<double> b(sys1.free_dofs.size(), 0.0);
      b[sys1.free_index[j]] = 1.0;
      std::vector<double> g(sys1.fixed_dofs.size(), 0.0);
      const auto sol = solve_system(sys1, g, b, tol);
      for (std::size_t k = 0; k < u_elems.size(); ++k) {
        val += sol.u.gradient(u_elems[k], sys1).dot(flux[k]);
      }
    }
    S.emplace(j, val);
    return val;
  };
  WeakResidual out;
  const auto& rp = sys1.K.row_ptr();
  const auto& ci = sys1.K.col_index();
  const auto& vals = sys1.K.values();
  for (int i : test_nodes) {
    if (sys1.free_index[i] < 0 || in_u[i]) throw DtnError("su_weak_residual: test node must be a free vertex away from U");
    for (int k = rp[i]; k < rp[i + 1]; ++k) {
      if (in_u[ci[k]]) throw DtnError("su_weak_residual: test node stencil touches U");
    }
    double r = 0.0, scale = 0.0;
    for (int k = rp[i]; k < rp[i + 1]; ++k) {
      const double t = vals[k] * s_of(ci[k]);
      r += t;
      scale += std::abs(t);
    }
    const double rel = scale > 0.0 ? std::abs(r) / scale : 0.0;
    out.nodes.push_back(i);
    out.relative.push_back(rel);
    out.max_relative = std::max(out.max_relative, rel);
  }
  return out;
}

}  // namespace eitlab
