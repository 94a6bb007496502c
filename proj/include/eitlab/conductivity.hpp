#pragma once

#include "eitlab/geometry.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace eitlab {

class ConductivityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Compiles an arithmetic expression in x1, x2, x3 (aliases x, y, z).
/// Supports + - * / ^, parentheses, pi, e and sin cos tan exp log sqrt abs tanh.
std::function<double(const Vec3&)> compile_expression(const std::string& text);

/// Symmetric matrix-valued field A(x).
class MatrixField {
public:
  using Fn = std::function<Mat3(const Vec3&)>;
  enum class Kind { Identity, Constant, Affine, Expr };

  MatrixField(Kind kind, Fn fn, std::string description);

  static MatrixField identity();
  static MatrixField constant(const Mat3& a);
  /// A(x) = c + sum_i x_i lin[i].
  static MatrixField affine(const Mat3& c, const std::array<Mat3, 3>& lin);
  /// Entries in the order xx, yy, zz, xy, xz, yz.
  static MatrixField expr(const std::array<std::string, 6>& entries);

  /// Builds from {"A": kind, "A_params": {...}}.
  static MatrixField from_json(const nlohmann::json& j);

  Mat3 operator()(const Vec3& x) const { return fn_(x); }
  Kind kind() const { return kind_; }
  bool is_constant() const { return kind_ == Kind::Identity || kind_ == Kind::Constant; }
  const std::string& description() const { return description_; }

private:
  Kind kind_;
  Fn fn_;
  std::string description_;
};

/// Spectral norm of a symmetric 3 x 3 matrix.
double spectral_norm_sym(const Mat3& a);

/// sigma(x) = gamma_j A(x) on D_j.
struct ClassCConductivity {
  std::vector<double> gamma;
  std::shared_ptr<const MatrixField> A;
  double gamma_bar = 0.5;
  std::shared_ptr<const PartitionChain> partition;

  ClassCConductivity(std::vector<double> g, std::shared_ptr<const MatrixField> a, double gbar,
                     std::shared_ptr<const PartitionChain> p);

  /// Value on the layer with the given label (1..N).
  Mat3 value(int label, const Vec3& x) const;
  ClassCConductivity scaled(double c) const;
  ClassCConductivity with_gamma(std::vector<double> g) const;
};

Mat3 sigma_eval(const ClassCConductivity& cond, const Vec3& x);

struct Violation {
  std::string invariant;
  std::string witness;
  double value;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Sampled check of the class constraints against the partition's a-priori data:
/// gamma bounds, symmetry, ellipticity, sup norm and Lipschitz quotients of A.
ValidationReport validate_class(const ClassCConductivity& cond, int samples_per_axis = 9);

/// Pad [0,1]^2 x (z_lo, z_hi) attached on top of the unit box (z_lo = 1).
struct D0Box {
  double z_lo = 1.0;
  double z_hi = 1.5;
  double pad() const { return z_hi - z_lo; }
};

/// gamma = 1 on D0, A extended by the nearest point of the closed unit box.
struct ExtendedConductivity {
  ClassCConductivity base;
  D0Box d0;

  double gamma_tilde(int label) const;
  Mat3 A_tilde(const Vec3& x) const;
  Mat3 value(int label, const Vec3& x) const;
};

ExtendedConductivity extend_to_augmented(const ClassCConductivity& cond, const D0Box& d0);

Mat3 sigma_eval(const ExtendedConductivity& cond, const Vec3& x);

/// label -> gamma, plus the shared matrix field; the form the solvers consume.
struct ConductivityView {
  std::vector<double> gamma_by_label;  // index = label; NaN where undefined
  std::function<Mat3(const Vec3&)> A;
  bool A_constant = false;
  std::shared_ptr<const PartitionChain> partition;

  double gamma(int label) const;
  Mat3 operator()(int label, const Vec3& x) const { return gamma(label) * A(x); }
};

ConductivityView view(const ClassCConductivity& cond);
ConductivityView view(const ExtendedConductivity& cond);

/// max over sample points of |sigma1 - sigma2|_2; samples are element barycenters
/// and vertices of `samples` (a mesh of the same partition).
double linf_distance(const ClassCConductivity& c1, const ClassCConductivity& c2,
                     const SimplicialMesh& samples);
/// Same, sampling on a layered mesh of resolution 16.
double linf_distance(const ClassCConductivity& c1, const ClassCConductivity& c2);

}  // namespace eitlab
