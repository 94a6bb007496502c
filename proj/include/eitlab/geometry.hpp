#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace eitlab {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class GeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Q_r(x) = B'_r(x') x (x_n - r, x_n + r).
struct Cylinder {
  Vec3 center;
  double radius;

  Cylinder(Vec3 c, double r);
  bool contains(const Vec3& x) const;
};

/// A scalar graph x_3 = phi(x') together with the regularity data (r0, M, alpha).
/// Used both as a global height function for layered meshes and, once localized
/// at an anchor point, as the local interface chart for the flattening map.
class InterfaceGraph {
public:
  using Fn = std::function<double(const Vec2&)>;
  using GradFn = std::function<Vec2(const Vec2&)>;

  InterfaceGraph(Fn phi, double r0, double M, double alpha, GradFn grad = {});

  static InterfaceGraph flat(double height, double r0 = 0.75, double M = 1.0, double alpha = 1.0);

  double operator()(const Vec2& x) const { return phi_(x); }
  /// Analytic gradient when provided, otherwise central differences.
  Vec2 gradient(const Vec2& x) const;

  double r0() const { return r0_; }
  double M() const { return M_; }
  double alpha() const { return alpha_; }

  /// Recentred chart phi(a + z') - phi(a); requires a vanishing gradient at a.
  InterfaceGraph localized(const Vec2& anchor) const;

  struct LocalCheck {
    double value_at_origin;
    double gradient_at_origin;
    double normalized_norm;  // |phi|_inf + r0 |grad|_inf + r0^{1+a} [grad]_a on B'_{r0}
    bool ok;
    std::string message;
  };
  /// Samples the local-chart invariants on the fixed 33 x 33 grid over B'_{r0}.
  LocalCheck validate_local(double tol = 1e-9) const;

private:
  Fn phi_;
  GradFn grad_;
  double r0_, M_, alpha_;
};

/// Smooth cutoff: 1 on [-1,1], 0 outside (-2,2), |tau'| <= 2.
double tau(double s);
double tau_prime(double s);

/// x -> (x', x_n - phi(x') tau(|x'|/r1) tau(x_n/r1)), in the local chart of phi.
class FlatteningMap {
public:
  explicit FlatteningMap(InterfaceGraph phi);

  double r1() const { return r1_; }
  const InterfaceGraph& graph() const { return phi_; }

  Vec3 eval(const Vec3& x) const;
  Mat3 jacobian(const Vec3& x) const;
  Vec3 invert(const Vec3& xi, double tol = 1e-12) const;

private:
  InterfaceGraph phi_;
  double r1_;
};

Vec3 flatten_eval(const FlatteningMap& map, const Vec3& x);
Mat3 flatten_jacobian(const FlatteningMap& map, const Vec3& x);
Vec3 flatten_invert(const FlatteningMap& map, const Vec3& xi, double tol);

enum class FacetLabel { Sigma, Other };

struct StructuredGrid {
  Vec3 lo;
  Vec3 hi;
  std::array<int, 3> cells;
};

struct SimplicialMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> elements;
  std::vector<int> labels;
  std::vector<std::array<int, 3>> facets;
  std::vector<FacetLabel> facet_labels;
  double h = 0.0;
  std::optional<StructuredGrid> grid;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_elements() const { return elements.size(); }

  std::array<Vec3, 4> element_vertices(int e) const;
  double element_volume(int e) const;  // signed
  Vec3 barycenter(int e) const;

  /// Element containing x (structured meshes only); -1 outside the box.
  int locate(const Vec3& x) const;
  /// Barycentric coordinates of x in element e.
  Eigen::Vector4d barycentric(int e, const Vec3& x) const;

  /// Vertices on the boundary.
  std::vector<bool> boundary_vertex_mask() const;
  /// Vertices lying on SIGMA facets but on no OTHER facet.
  std::vector<int> sigma_interior_vertices() const;

  /// Stable 64-bit hash of the serialized mesh.
  std::uint64_t hash() const;
};

/// Structured box mesh (6 tetrahedra per cell); labels default to 1 and all
/// boundary facets are OTHER.
SimplicialMesh gen_box_mesh(const Vec3& lo, const Vec3& hi, std::array<int, 3> cells);

/// Layered unit cube: label = 1 + number of interfaces below the barycenter,
/// SIGMA = top face x_3 = 1.
SimplicialMesh gen_layered_box_mesh(int N, const std::vector<InterfaceGraph>& interfaces,
                                    int resolution);

/// Layered unit cube augmented with the pad [0,1]^2 x (1, 1 + pad) labelled 0.
/// Every boundary facet is OTHER.
SimplicialMesh gen_augmented_box_mesh(int N, const std::vector<InterfaceGraph>& interfaces,
                                      int resolution, double pad);

void write_mesh(std::ostream& os, const SimplicialMesh& mesh);
SimplicialMesh read_mesh(std::istream& is);

/// A-priori constants for the class of conductivities.
struct AprioriData {
  int N = 2;
  double r0 = 0.75;
  double L = 1.0;
  double M = 1.0;
  double alpha = 1.0;
  double lambda = 1.0;
  double gamma_bar = 0.5;
  double A_bar = 1.0;
};

/// Layered partition of the unit box with a chain of subdomains starting from the
/// layer adjacent to SIGMA (the top face) and descending to the bottom layer.
class PartitionChain {
public:
  static PartitionChain layered_box(std::vector<InterfaceGraph> interfaces, AprioriData data,
                                    Vec2 anchor_xy = Vec2(0.5, 0.5));

  int N() const { return static_cast<int>(interfaces_.size()) + 1; }
  const std::vector<int>& chain() const { return chain_; }
  const std::vector<Vec3>& anchors() const { return anchors_; }
  const std::vector<Vec3>& normals() const { return normals_; }
  const std::vector<InterfaceGraph>& interfaces() const { return interfaces_; }
  const AprioriData& data() const { return data_; }

  /// Label of the layer containing x: 1..N inside the unit box, 0 in the pad above
  /// it, -1 elsewhere.
  int label_at(const Vec3& x, double pad = 0.0) const;
  /// Local chart of the interface crossed between chain entries k and k+1.
  InterfaceGraph local_graph(int k) const;

  bool same_geometry(const PartitionChain& other) const;

private:
  std::vector<InterfaceGraph> interfaces_;
  std::vector<int> chain_;
  std::vector<Vec3> anchors_;
  std::vector<Vec3> normals_;
  AprioriData data_;
};

}  // namespace eitlab
