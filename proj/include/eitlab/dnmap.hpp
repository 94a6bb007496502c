#pragma once

#include "eitlab/fem.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace eitlab {

class DtnError : public std::runtime_error {
public:
  DtnError(const std::string& what, std::vector<double> history = {})
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

private:
  std::vector<double> history_;
};

/// P1 traces on SIGMA vanishing on its rim, with surface mass and stiffness matrices
/// and the generalized eigenpairs K v = mu M v (V^T M V = I).
struct TraceSpace {
  std::shared_ptr<const SimplicialMesh> mesh;
  std::vector<int> nodes;
  Eigen::MatrixXd M;
  Eigen::MatrixXd K;
  Eigen::VectorXd mu;
  Eigen::MatrixXd V;
};

TraceSpace build_trace_space(std::shared_ptr<const SimplicialMesh> mesh);
/// Trace space on a subset of the SIGMA-interior nodes; the matrices are those of
/// the full SIGMA restricted to the subset.
TraceSpace build_trace_space(std::shared_ptr<const SimplicialMesh> mesh, std::vector<int> nodes);

/// N_s = M V diag((1 + mu)^s) V^T M; s = 1/2 gives the H^{1/2} Gram.
Eigen::MatrixXd h_half_gram(const TraceSpace& ts, double exponent = 0.5);

struct LocalDtN {
  Eigen::MatrixXd Lambda;
  std::vector<int> nodes;
  std::string conductivity_id;
  int total_iterations = 0;
};

/// Schur complement of the stiffness matrix onto the trace-space nodes, with zero
/// data on the remaining boundary.
LocalDtN assemble_dtn(const AssembledSystem& sys, const TraceSpace& ts, std::string id = {},
                      double tol = 1e-12);

struct OpNormResult {
  double value;
  double theta;  // signed eigenvalue attaining the maximum modulus
  int iterations;
};

/// max |theta| over d v = theta N v, by block power iteration with Rayleigh-Ritz
/// extraction on the Cholesky-transformed pencil. Converged when the Ritz residual
/// is below tol * |C|_F. Throws DtnError carrying the Rayleigh history on
/// non-convergence.
OpNormResult op_norm_star_detail(const Eigen::MatrixXd& d, const Eigen::MatrixXd& N,
                                 double tol = 1e-8, int max_iter = 20000);
double op_norm_star(const Eigen::MatrixXd& d, const Eigen::MatrixXd& N, double tol = 1e-8);
double op_norm_star(const LocalDtN& a, const LocalDtN& b, const TraceSpace& ts);

/// Row-major text matrix with 17 significant digits.
void write_dtn(std::ostream& os, const LocalDtN& d);
nlohmann::json dtn_sidecar(const LocalDtN& d, const SimplicialMesh& mesh);

/// Distance from x to the vertices of the elements carrying a label in U.
double distance_to_labels(const SimplicialMesh& mesh, const std::vector<int>& U, const Vec3& x);

/// S_U(y, z) = int_U (sigma1 - sigma2) grad G1(., y) . grad G2(., z).
double s_u_integral(const AssembledSystem& sys1, const AssembledSystem& sys2,
                    const GreenApprox& g1, const GreenApprox& g2, const std::vector<int>& U);

struct WeakResidual {
  double max_relative = 0.0;
  std::vector<int> nodes;
  std::vector<double> relative;
};

/// Discrete weak residual of div(sigma1 grad S_U(., z)) at the given free vertices,
/// using nodal point sources for G1.
WeakResidual su_weak_residual(const AssembledSystem& sys1, const AssembledSystem& sys2,
                              const GreenApprox& g2, const std::vector<int>& U,
                              const std::vector<int>& test_nodes, double tol = 1e-12);

}  // namespace eitlab
