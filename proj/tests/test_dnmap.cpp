#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eitlab/dnmap.hpp"

#include <cmath>
#include <sstream>

using namespace eitlab;

namespace {

struct Fixture {
  std::shared_ptr<const PartitionChain> partition;
  std::shared_ptr<const SimplicialMesh> mesh;
  TraceSpace ts;

  explicit Fixture(int res) {
    std::vector<InterfaceGraph> ifs = {InterfaceGraph::flat(0.5)};
    mesh = std::make_shared<const SimplicialMesh>(gen_layered_box_mesh(2, ifs, res));
    partition = std::make_shared<const PartitionChain>(PartitionChain::layered_box(ifs, AprioriData{}));
    ts = build_trace_space(mesh);
  }

  ClassCConductivity cond(std::vector<double> g) const {
    return ClassCConductivity(std::move(g), std::make_shared<const MatrixField>(MatrixField::identity()), 0.25,
                              partition);
  }
};

double max_abs_eig(const Eigen::MatrixXd& d, const Eigen::MatrixXd& n) {
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(d, n);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("trace space invariants") {
  const Fixture f(4);
  CHECK(f.ts.nodes == f.mesh->sigma_interior_vertices());
  const auto n = static_cast<Eigen::Index>(f.ts.nodes.size());
  CHECK(n == 9);
  CHECK((f.ts.M - f.ts.M.transpose()).norm() == 0.0);
  CHECK((f.ts.V.transpose() * f.ts.M * f.ts.V - Eigen::MatrixXd::Identity(n, n)).norm() < 1e-12);
  CHECK((f.ts.K * f.ts.V - f.ts.M * f.ts.V * f.ts.mu.asDiagonal()).norm() < 1e-12);
  CHECK(f.ts.mu.minCoeff() >= 0.0);
  // Gram with exponent 1 is M + K.
  CHECK((h_half_gram(f.ts, 1.0) - (f.ts.M + f.ts.K)).norm() < 1e-12);
  CHECK((h_half_gram(f.ts, 0.0) - f.ts.M).norm() < 1e-12);
  const auto g = h_half_gram(f.ts);
  CHECK((g - g.transpose()).norm() == 0.0);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(g).info() == Eigen::Success);
}

TEST_CASE("local DtN map is symmetric, linear in sigma and matches the energy") {
  const Fixture f(4);
  const auto sys = assemble(f.mesh, f.cond({1.0, 2.0}));
  const auto d = assemble_dtn(sys, f.ts, "base");
  CHECK(d.conductivity_id == "base");
  CHECK(d.nodes == f.ts.nodes);
  CHECK((d.Lambda - d.Lambda.transpose()).norm() <= 1e-9 * d.Lambda.norm());
  const auto d2 = assemble_dtn(assemble(f.mesh, f.cond({2.0, 4.0})), f.ts);
  CHECK((d2.Lambda - 2.0 * d.Lambda).norm() <= 1e-9 * d.Lambda.norm());

  Eigen::VectorXd g(f.ts.nodes.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = std::sin(1.0 + i);
  std::vector<double> bc(sys.fixed_dofs.size(), 0.0);
  for (std::size_t i = 0; i < f.ts.nodes.size(); ++i) bc[sys.fixed_index[f.ts.nodes[i]]] = g[static_cast<Eigen::Index>(i)];
  const auto u = solve_dirichlet(sys, bc, 1e-13);
  CHECK(dirichlet_energy(sys, u.u) == doctest::Approx(g.dot(d.Lambda * g)).epsilon(1e-10));
}

TEST_CASE("flux of a linear field equals the surface mass of the hat functions") {
  const Fixture f(4);
  const auto sys = assemble(f.mesh, f.cond({1.0, 1.0}));
  const auto bc = boundary_data(sys, [](const Vec3& x) { return x.z(); });
  const auto u = solve_dirichlet(sys, bc, 1e-13);
  std::vector<double> ku(u.u.values.size());
  sys.K.multiply(u.u.values, ku);
  // Unit outward flux on SIGMA: (K u)_i = int_SIGMA phi_i = 6 * h^2/2 / 3 at interior nodes.
  const double h = 0.25;
  for (int v : f.ts.nodes) CHECK(ku[v] == doctest::Approx(h * h).epsilon(1e-9));
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(f.ts.nodes.size()));
  const Eigen::VectorXd m1 = f.ts.M * ones;
  CHECK(m1.sum() <= 1.0);
}

TEST_CASE("operator norm in the dual trace norm") {
  const Fixture f(4);
  const auto N = h_half_gram(f.ts);
  const auto n = N.rows();
  CHECK(op_norm_star(Eigen::MatrixXd::Zero(n, n), N) == 0.0);
  CHECK(op_norm_star(N, N) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(op_norm_star(-3.0 * N, N) == doctest::Approx(3.0).epsilon(1e-8));
  const auto a = assemble_dtn(assemble(f.mesh, f.cond({1.0, 2.0})), f.ts);
  const auto b = assemble_dtn(assemble(f.mesh, f.cond({1.3, 2.0})), f.ts);
  const Eigen::MatrixXd d = a.Lambda - b.Lambda;
  const Eigen::MatrixXd ds = 0.5 * (d + d.transpose());
  const auto r = op_norm_star_detail(ds, N);
  CHECK(r.value == doctest::Approx(max_abs_eig(ds, N)).epsilon(1e-6));
  CHECK(std::abs(r.theta) == r.value);
  CHECK(op_norm_star(a, b, f.ts) == doctest::Approx(r.value).epsilon(1e-6));
  CHECK_THROWS_AS(op_norm_star(Eigen::MatrixXd::Zero(n + 1, n + 1), N), DtnError);
  Eigen::MatrixXd ns = Eigen::MatrixXd::Zero(n, n);
  ns(0, 1) = 1.0;
  CHECK_THROWS_AS(op_norm_star(ns, N), DtnError);
  CHECK_THROWS_AS(op_norm_star(N, -N), DtnError);
}

TEST_CASE("nested trace spaces restrict the DtN map") {
  const Fixture f(4);
  const auto sys = assemble(f.mesh, f.cond({1.0, 2.0}));
  const auto full = assemble_dtn(sys, f.ts);
  std::vector<int> sub = {f.ts.nodes[0], f.ts.nodes[4], f.ts.nodes[8]};
  const auto ts_sub = build_trace_space(f.mesh, sub);
  const auto part = assemble_dtn(sys, ts_sub);
  const std::vector<Eigen::Index> idx = {0, 4, 8};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(part.Lambda(i, j) == doctest::Approx(full.Lambda(idx[i], idx[j])).epsilon(1e-9));
  // The restricted difference is no larger in the restricted norm.
  const auto b = assemble_dtn(assemble(f.mesh, f.cond({1.5, 2.0})), f.ts);
  const auto b_sub = assemble_dtn(assemble(f.mesh, f.cond({1.5, 2.0})), ts_sub);
  CHECK(op_norm_star(part, b_sub, ts_sub) <= op_norm_star(full, b, f.ts) * (1 + 1e-8));
  CHECK_THROWS_AS(build_trace_space(f.mesh, std::vector<int>{}), DtnError);
}

TEST_CASE("DtN serialization") {
  const Fixture f(4);
  const auto d = assemble_dtn(assemble(f.mesh, f.cond({1.0, 2.0})), f.ts, "c1");
  std::ostringstream os;
  write_dtn(os, d);
  std::istringstream is(os.str());
  int rows = 0, cols = 0;
  is >> rows >> cols;
  CHECK(rows == 9);
  CHECK(cols == 9);
  double first = 0;
  is >> first;
  CHECK(first == d.Lambda(0, 0));
  const auto side = dtn_sidecar(d, *f.mesh);
  CHECK(side["conductivity_id"] == "c1");
  CHECK(side["mesh_hash"].get<std::string>().size() == 16);
  CHECK(side["sigma_nodes"].size() == 9);
}

TEST_CASE("S_U integral and its weak residual") {
  std::vector<InterfaceGraph> ifs = {InterfaceGraph::flat(0.5)};
  auto partition = std::make_shared<const PartitionChain>(PartitionChain::layered_box(ifs, AprioriData{}));
  auto mesh = std::make_shared<const SimplicialMesh>(gen_augmented_box_mesh(2, ifs, 8, 0.5));
  auto A = std::make_shared<const MatrixField>(MatrixField::identity());
  const ClassCConductivity c1({1.0, 1.5}, A, 0.25, partition), c2({1.4, 1.5}, A, 0.25, partition);
  const D0Box d0{1.0, 1.5};
  const auto s1 = assemble(mesh, extend_to_augmented(c1, d0));
  const auto s2 = assemble(mesh, extend_to_augmented(c2, d0));
  const std::vector<int> U = {1};
  const Vec3 y(0.5, 0.5, 0.75), z(0.5, 0.5, 0.875);
  CHECK(distance_to_labels(*mesh, U, y) == doctest::Approx(0.25));
  const auto g1 = solve_green(s1, y, GreenMethod::Split);
  const auto g2 = solve_green(s2, z, GreenMethod::Split);
  CHECK(s_u_integral(s1, s1, g1, g1, U) == 0.0);
  const double S = s_u_integral(s1, s2, g1, g2, U);
  CHECK(std::isfinite(S));
  CHECK(S != 0.0);

  const auto inside = solve_green(s1, Vec3(0.5, 0.5, 0.3125), GreenMethod::Split);
  CHECK_THROWS_AS(s_u_integral(s1, s2, inside, g2, U), DtnError);

  std::vector<int> nodes;
  for (int v : s1.free_dofs) {
    const Vec3& p = mesh->vertices[v];
    if (p.x() == 0.5 && p.y() == 0.5 && p.z() >= 0.75 && p.z() <= 0.875) nodes.push_back(v);
  }
  REQUIRE(nodes.size() == 2);
  const auto wr = su_weak_residual(s1, s2, g2, U, nodes);
  CHECK(wr.nodes == nodes);
  CHECK(wr.max_relative <= 1e-6);
  std::vector<int> bad = {s1.free_dofs.front()};
  for (int v : s1.free_dofs)
    if (mesh->vertices[v].z() < 0.4) bad = {v};
  CHECK_THROWS_AS(su_weak_residual(s1, s2, g2, U, bad), DtnError);
}
