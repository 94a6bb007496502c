#pragma once

#include "eitlab/conductivity.hpp"
#include "eitlab/geometry.hpp"
#include "eitlab/kernels.hpp"
#include "eitlab/linalg.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eitlab {

class FemError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Gradients of the barycentric coordinates of a tetrahedron.
std::array<Vec3, 4> hat_gradients(const std::array<Vec3, 4>& v);

/// P1 element matrix |T| grad(l_a)^T sigma grad(l_b).
Eigen::Matrix4d element_stiffness(const std::array<Vec3, 4>& v, const Mat3& sigma);

struct AssembledSystem {
  std::shared_ptr<const SimplicialMesh> mesh;
  ConductivityView cond;
  CsrMatrix K;
  std::vector<int> free_dofs;   // interior vertices
  std::vector<int> fixed_dofs;  // boundary vertices
  std::vector<int> free_index;  // vertex -> index in free_dofs or -1
  std::vector<int> fixed_index; // vertex -> index in fixed_dofs or -1
  CsrMatrix K_ff;
  std::vector<Mat3> sigma;               // per element, at the barycenter
  std::vector<std::array<Vec3, 4>> grads;  // per element hat gradients
  std::vector<double> volumes;
  Vec3 box_lo;
  Vec3 box_hi;

  /// Distance from x to the bounding box of the mesh.
  double distance_to_boundary(const Vec3& x) const;
};

AssembledSystem assemble(std::shared_ptr<const SimplicialMesh> mesh, const ConductivityView& cond);
AssembledSystem assemble(std::shared_ptr<const SimplicialMesh> mesh, const ClassCConductivity& cond);
AssembledSystem assemble(std::shared_ptr<const SimplicialMesh> mesh, const ExtendedConductivity& cond);

struct SolveDiagnostics {
  int iterations = 0;
  double final_residual = 0.0;
  std::string method;
};

struct DiscreteField {
  std::shared_ptr<const SimplicialMesh> mesh;
  std::vector<double> values;

  double eval(const Vec3& x) const;
  Vec3 gradient(int element, const AssembledSystem& sys) const;
};

/// CSV "vertex_index,x1,x2,x3,value".
void write_field_csv(std::ostream& os, const DiscreteField& f);

struct DirichletSolution {
  DiscreteField u;
  SolveDiagnostics diagnostics;
};

/// Values of f at the fixed (boundary) dofs, in fixed_dofs order.
std::vector<double> boundary_data(const AssembledSystem& sys, const std::function<double(const Vec3&)>& f);

/// Solves K u = b on free dofs with u = g on fixed dofs. `b_free` may be empty (zero load).
DirichletSolution solve_system(const AssembledSystem& sys, std::span<const double> g_fixed,
                               std::span<const double> b_free, double tol = 1e-10);

DirichletSolution solve_dirichlet(const AssembledSystem& sys, std::span<const double> g_fixed,
                                  double tol = 1e-10);

/// u^T K u.
double dirichlet_energy(const AssembledSystem& sys, const DiscreteField& u);

enum class GreenMethod { Split, Mollified, Galerkin };
std::string to_string(GreenMethod m);
GreenMethod green_method_from_string(const std::string& s);

struct GreenOptions {
  double tol = 1e-10;
  std::optional<double> cutoff_rho;
};

/// Singular part chi * H_{A0}^{(k)} / gamma_low about a flat plane x_3 = plane_z.
struct SplitPart {
  AnisoTwoPhaseKernel<3> kernel;
  double plane_z;
  double gamma_low;
  double gamma_up;
  double rho;
  Vec3 eta;  // source in plane coordinates

  double cutoff(double r) const;
  Vec3 cutoff_grad(const Vec3& d) const;  // d = x - y
  double H0(const Vec3& x) const;
  Vec3 grad_H0(const Vec3& x, Side side) const;
  Side side_of(const Vec3& x) const;
};

struct GreenApprox {
  Vec3 y;
  GreenMethod method;
  std::optional<SplitPart> singular;
  DiscreteField w;
  double r_min;
  SolveDiagnostics diagnostics;
  const AssembledSystem* system = nullptr;

  /// G(x, y); requires |x - y| > 0.
  double value(const Vec3& x) const;
  /// grad_x G(x, y) inside element e (located when e < 0).
  Vec3 gradient(const Vec3& x, int e = -1) const;
};

/// Green's function of div(sigma grad .) with a unit point source at y and zero
/// Dirichlet data. The returned object refers to `sys`, which must outlive it.
GreenApprox solve_green(const AssembledSystem& sys, const Vec3& y, GreenMethod method,
                        const GreenOptions& opt = {});

/// Integral of |grad G|^2 over the part of the domain outside B_r(y).
double annulus_energy(const GreenApprox& g, double r);

/// Integral of f over the part of the tetrahedron outside B_r(c), by recursive
/// subdivision of cells cut by the sphere.
double integrate_outside_ball(const std::function<double(const Vec3&)>& f,
                              const std::array<Vec3, 4>& v, const Vec3& c, double r, int m,
                              int depth);

}  // namespace eitlab
