#include "eitlab/geometry.hpp"

#include "eitlab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace eitlab {

Cylinder::Cylinder(Vec3 c, double r) : center(std::move(c)), radius(r) {
  if (!(r > 0.0)) throw GeometryError("cylinder radius must be positive");
}

bool Cylinder::contains(const Vec3& x) const {
  const Vec2 d = x.head<2>() - center.head<2>();
  return d.norm() < radius && std::abs(x.z() - center.z()) < radius;
}

// ---------------------------------------------------------------------------
// InterfaceGraph

InterfaceGraph::InterfaceGraph(Fn phi, double r0, double M, double alpha, GradFn grad)
    : phi_(std::move(phi)), grad_(std::move(grad)), r0_(r0), M_(M), alpha_(alpha) {
  if (!phi_) throw GeometryError("interface graph: empty function");
  if (!(r0 > 0.0) || !(M > 0.0) || !(alpha > 0.0 && alpha <= 1.0)) {
    throw GeometryError("interface graph: need r0 > 0, M > 0, alpha in (0,1]");
  }
}

InterfaceGraph InterfaceGraph::flat(double height, double r0, double M, double alpha) {
  return InterfaceGraph([height](const Vec2&) { return height; }, r0, M, alpha,
                        [](const Vec2&) { return Vec2::Zero().eval(); });
}

Vec2 InterfaceGraph::gradient(const Vec2& x) const {
  if (grad_) return grad_(x);
  constexpr double step = 1e-6;
  Vec2 g;
  for (int i = 0; i < 2; ++i) {
    Vec2 e = Vec2::Zero();
    e[i] = step;
    g[i] = (phi_(x + e) - phi_(x - e)) / (2.0 * step);
  }
  return g;
}

InterfaceGraph InterfaceGraph::localized(const Vec2& anchor) const {
  const Vec2 g = gradient(anchor);
  if (g.norm() > 1e-8) {
    std::ostringstream msg;
    msg << "interface graph: gradient " << g.norm() << " at anchor (" << anchor.x() << ", "
        << anchor.y() << ") does not vanish; a rotated chart is required";
    throw GeometryError(msg.str());
  }
  const double base = phi_(anchor);
  Fn f = [phi = phi_, anchor, base](const Vec2& z) { return phi(anchor + z) - base; };
  GradFn gf;
  if (grad_) gf = [grad = grad_, anchor](const Vec2& z) { return grad(anchor + z); };
  return InterfaceGraph(std::move(f), r0_, M_, alpha_, std::move(gf));
}

InterfaceGraph::LocalCheck InterfaceGraph::validate_local(double tol) const {
  LocalCheck out{};
  out.value_at_origin = std::abs(phi_(Vec2::Zero()));
  out.gradient_at_origin = gradient(Vec2::Zero()).norm();
  constexpr int n = 33;
  std::vector<Vec2> pts, grads;
  double sup_phi = 0.0, sup_grad = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec2 p(-r0_ + 2.0 * r0_ * i / (n - 1), -r0_ + 2.0 * r0_ * j / (n - 1));
      if (p.norm() > r0_) continue;
      pts.push_back(p);
      grads.push_back(gradient(p));
      sup_phi = std::max(sup_phi, std::abs(phi_(p)));
      sup_grad = std::max(sup_grad, grads.back().norm());
    }
  }
  double holder = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      const double d = (pts[a] - pts[b]).norm();
      holder = std::max(holder, (grads[a] - grads[b]).norm() / std::pow(d, alpha_));
    }
  }
  out.normalized_norm = sup_phi + r0_ * sup_grad + std::pow(r0_, 1.0 + alpha_) * holder;
  std::ostringstream msg;
  if (out.value_at_origin > tol) msg << "phi(0) = " << out.value_at_origin << "; ";
  if (out.gradient_at_origin > std::max(tol, 1e-7)) msg << "|grad phi(0)| = " << out.gradient_at_origin << "; ";
  if (out.normalized_norm > M_ * r0_ * (1.0 + 1e-12)) {
    msg << "C^{1,alpha} norm " << out.normalized_norm << " exceeds M r0 = " << M_ * r0_ << "; ";
  }
  out.message = msg.str();
  out.ok = out.message.empty();
  return out;
}

// ---------------------------------------------------------------------------
// Cutoff profile

namespace {

double bump(double s) {
  const double u = 2.0 * s - 3.0;
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - u * u));
}

double bump_integral(double a, double b) {
  constexpr int panels = 8;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + (b - a) * p / panels, hi = a + (b - a) * (p + 1) / panels;
    s += integrate_interval(bump, lo, hi, 24);
  }
  return s;
}

double bump_normalization() {
  static const double c = 1.0 / bump_integral(1.0, 2.0);
  return c;
}

}  // namespace

double tau(double s) {
  const double a = std::abs(s);
  if (a <= 1.0) return 1.0;
  if (a >= 2.0) return 0.0;
  return std::clamp(1.0 - bump_normalization() * bump_integral(1.0, a), 0.0, 1.0);
}

double tau_prime(double s) {
  const double a = std::abs(s);
  if (a <= 1.0 || a >= 2.0) return 0.0;
  return -(s > 0 ? 1.0 : -1.0) * bump_normalization() * bump(a);
}

// ---------------------------------------------------------------------------
// FlatteningMap

FlatteningMap::FlatteningMap(InterfaceGraph phi) : phi_(std::move(phi)) {
  const double a = phi_.alpha();
  r1_ = phi_.r0() / 3.0 * std::min(0.5 * std::pow(8.0 * phi_.M(), -1.0 / a), 0.25);
}

Vec3 FlatteningMap::eval(const Vec3& x) const {
  const Vec2 xp = x.head<2>();
  const double t1 = tau(xp.norm() / r1_);
  if (t1 == 0.0) return x;
  const double t2 = tau(x.z() / r1_);
  if (t2 == 0.0) return x;
  return Vec3(x.x(), x.y(), x.z() - phi_(xp) * t1 * t2);
}

Mat3 FlatteningMap::jacobian(const Vec3& x) const {
  Mat3 J = Mat3::Identity();
  const Vec2 xp = x.head<2>();
  const double rho = xp.norm();
  const double t1 = tau(rho / r1_), t2 = tau(x.z() / r1_);
  const double d1 = tau_prime(rho / r1_), d2 = tau_prime(x.z() / r1_);
  if (t1 == 0.0 && d1 == 0.0) return J;
  if (t2 == 0.0 && d2 == 0.0) return J;
  const double p = phi_(xp);
  const Vec2 g = phi_.gradient(xp);
  if (!std::isfinite(p) || !g.allFinite()) {
    std::ostringstream msg;
    msg << "flatten_jacobian: graph not differentiable at (" << x.x() << ", " << x.y() << ", "
        << x.z() << ")";
    throw GeometryError(msg.str());
  }
  for (int i = 0; i < 2; ++i) {
    double radial = 0.0;
    if (rho > 0.0) radial = p * d1 * (xp[i] / rho) / r1_ * t2;
    J(2, i) = -(g[i] * t1 * t2 + radial);
  }
  J(2, 2) = 1.0 - p * t1 * d2 / r1_;
  return J;
}

Vec3 FlatteningMap::invert(const Vec3& xi, double tol) const {
  if (!(tol > 0.0)) throw GeometryError("flatten_invert: tol must be positive");
  const Vec2 xp = xi.head<2>();
  const double t1 = tau(xp.norm() / r1_);
  if (t1 == 0.0) return xi;
  const double p = phi_(xp);
  auto g = [&](double xn) { return xi.z() + p * t1 * tau(xn / r1_); };
  double x = xi.z();
  double theta = 1.0;
  double res = std::abs(g(x) - x);
  for (int it = 0; it < 200 && res > tol; ++it) {
    const double cand = x + theta * (g(x) - x);
    const double cres = std::abs(g(cand) - cand);
    if (cres < res || theta < 1e-6) {
      x = cand;
      res = cres;
    } else {
      theta *= 0.5;
    }
  }
  if (res > tol) {
    std::ostringstream msg;
    msg << "flatten_invert: no convergence, residual " << res;
    throw GeometryError(msg.str());
  }
  return Vec3(xi.x(), xi.y(), x);
}

Vec3 flatten_eval(const FlatteningMap& map, const Vec3& x) { return map.eval(x); }
Mat3 flatten_jacobian(const FlatteningMap& map, const Vec3& x) { return map.jacobian(x); }
Vec3 flatten_invert(const FlatteningMap& map, const Vec3& xi, double tol) {
  return map.invert(xi, tol);
}

// ---------------------------------------------------------------------------
// SimplicialMesh

std::array<Vec3, 4> SimplicialMesh::element_vertices(int e) const {
  const auto& el = elements[e];
  return {vertices[el[0]], vertices[el[1]], vertices[el[2]], vertices[el[3]]};
}

double SimplicialMesh::element_volume(int e) const { return tet_volume(element_vertices(e)); }

Vec3 SimplicialMesh::barycenter(int e) const {
  const auto v = element_vertices(e);
  return 0.25 * (v[0] + v[1] + v[2] + v[3]);
}

namespace {

constexpr std::array<std::array<int, 3>, 6> kPerms = {
    {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
constexpr std::array<bool, 6> kOdd = {false, true, true, false, false, true};

}  // namespace

int SimplicialMesh::locate(const Vec3& x) const {
  if (!grid) throw GeometryError("locate: mesh carries no structured grid");
  const auto& g = *grid;
  std::array<int, 3> cell{};
  Vec3 s;
  for (int a = 0; a < 3; ++a) {
    const double d = (g.hi[a] - g.lo[a]) / g.cells[a];
    const double t = (x[a] - g.lo[a]) / d;
    if (t < -1e-9 || t > g.cells[a] + 1e-9) return -1;
    cell[a] = std::clamp(static_cast<int>(std::floor(t)), 0, g.cells[a] - 1);
    s[a] = std::clamp(t - cell[a], 0.0, 1.0);
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });
  int p = 0;
  while (kPerms[p] != order) ++p;
  const int c = cell[0] + g.cells[0] * (cell[1] + g.cells[1] * cell[2]);
  return 6 * c + p;
}

Eigen::Vector4d SimplicialMesh::barycentric(int e, const Vec3& x) const {
  const auto v = element_vertices(e);
  Mat3 m;
  m.col(0) = v[1] - v[0];
  m.col(1) = v[2] - v[0];
  m.col(2) = v[3] - v[0];
  const Vec3 l = m.partialPivLu().solve(x - v[0]);
  return Eigen::Vector4d(1.0 - l.sum(), l[0], l[1], l[2]);
}

std::vector<bool> SimplicialMesh::boundary_vertex_mask() const {
  std::vector<bool> mask(vertices.size(), false);
  for (const auto& f : facets)
    for (int v : f) mask[v] = true;
  return mask;
}

std::vector<int> SimplicialMesh::sigma_interior_vertices() const {
  std::vector<char> on_sigma(vertices.size(), 0), on_other(vertices.size(), 0);
  for (std::size_t i = 0; i < facets.size(); ++i) {
    auto& target = facet_labels[i] == FacetLabel::Sigma ? on_sigma : on_other;
    for (int v : facets[i]) target[v] = 1;
  }
  std::vector<int> out;
  for (std::size_t v = 0; v < vertices.size(); ++v)
    if (on_sigma[v] && !on_other[v]) out.push_back(static_cast<int>(v));
  return out;
}

std::uint64_t SimplicialMesh::hash() const {
  std::ostringstream os;
  write_mesh(os, *this);
  std::uint64_t hsh = 1469598103934665603ull;
  for (unsigned char c : os.str()) {
    hsh ^= c;
    hsh *= 1099511628211ull;
  }
  return hsh;
}

namespace {

double characteristic_size(const SimplicialMesh& m) {
  double h = 0.0;
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto v = m.element_vertices(static_cast<int>(e));
    double shortest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) shortest = std::min(shortest, (v[i] - v[j]).norm());
    h = std::max(h, shortest);
  }
  return h;
}

void check_volumes(const SimplicialMesh& m) {
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    if (!(m.element_volume(static_cast<int>(e)) > 0.0)) {
      throw GeometryError("degenerate element " + std::to_string(e));
    }
  }
}

void check_interfaces(const std::vector<InterfaceGraph>& interfaces, int samples) {
  for (int i = 0; i <= samples; ++i) {
    for (int j = 0; j <= samples; ++j) {
      const Vec2 p(static_cast<double>(i) / samples, static_cast<double>(j) / samples);
      for (std::size_t k = 0; k < interfaces.size(); ++k) {
        const double v = interfaces[k](p);
        if (!(v > 0.0 && v < 1.0)) {
          std::ostringstream msg;
          msg << "interface " << k << " leaves the unit box at (" << p.x() << ", " << p.y() << ")";
          throw GeometryError(msg.str());
        }
        if (k + 1 < interfaces.size() && !(v < interfaces[k + 1](p))) {
          std::ostringstream msg;
          msg << "interfaces " << k << " and " << k + 1 << " cross at (" << p.x() << ", " << p.y()
              << ")";
          throw GeometryError(msg.str());
        }
      }
    }
  }
}

int layer_label(const std::vector<InterfaceGraph>& interfaces, const Vec3& x) {
  int label = 1;
  for (const auto& f : interfaces)
    if (f(x.head<2>()) < x.z()) ++label;
  return label;
}

}  // namespace

SimplicialMesh gen_box_mesh(const Vec3& lo, const Vec3& hi, std::array<int, 3> cells) {
  for (int a = 0; a < 3; ++a) {
    if (cells[a] < 1 || !(hi[a] > lo[a])) throw GeometryError("gen_box_mesh: bad box or cell count");
  }
  SimplicialMesh m;
  const int nx = cells[0], ny = cells[1], nz = cells[2];
  auto vid = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
  m.vertices.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        m.vertices.emplace_back(lo.x() + (hi.x() - lo.x()) * i / nx,
                                lo.y() + (hi.y() - lo.y()) * j / ny,
                                lo.z() + (hi.z() - lo.z()) * k / nz);
      }
  m.elements.reserve(static_cast<std::size_t>(6) * nx * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        for (int p = 0; p < 6; ++p) {
          std::array<int, 3> off = {0, 0, 0};
          std::array<int, 4> el{};
          el[0] = vid(i, j, k);
          for (int s = 0; s < 3; ++s) {
            off[kPerms[p][s]] = 1;
            el[s + 1] = vid(i + off[0], j + off[1], k + off[2]);
          }
          if (kOdd[p]) std::swap(el[2], el[3]);
          m.elements.push_back(el);
        }
      }
  m.labels.assign(m.elements.size(), 1);
  constexpr std::array<std::array<int, 3>, 4> faces = {{{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};
  for (const auto& el : m.elements) {
    for (const auto& f : faces) {
      const std::array<int, 3> tri = {el[f[0]], el[f[1]], el[f[2]]};
      bool on_boundary = false;
      for (int a = 0; a < 3 && !on_boundary; ++a) {
        for (double side : {lo[a], hi[a]}) {
          if (std::all_of(tri.begin(), tri.end(),
                          [&](int v) { return m.vertices[v][a] == side; })) {
            on_boundary = true;
            break;
          }
        }
      }
      if (on_boundary) {
        m.facets.push_back(tri);
        m.facet_labels.push_back(FacetLabel::Other);
      }
    }
  }
  m.grid = StructuredGrid{lo, hi, cells};
  check_volumes(m);
  m.h = characteristic_size(m);
  return m;
}

SimplicialMesh gen_layered_box_mesh(int N, const std::vector<InterfaceGraph>& interfaces,
                                    int resolution) {
  if (N < 1) throw GeometryError("gen_layered_box_mesh: N must be at least 1");
  if (resolution < 2) throw GeometryError("gen_layered_box_mesh: resolution must be at least 2");
  if (static_cast<int>(interfaces.size()) != N - 1) {
    throw GeometryError("gen_layered_box_mesh: need N - 1 interfaces");
  }
  check_interfaces(interfaces, std::max(64, 4 * resolution));
  SimplicialMesh m =
      gen_box_mesh(Vec3::Zero(), Vec3::Ones(), {resolution, resolution, resolution});
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    m.labels[e] = layer_label(interfaces, m.barycenter(static_cast<int>(e)));
  }
  for (std::size_t f = 0; f < m.facets.size(); ++f) {
    const auto& tri = m.facets[f];
    if (std::all_of(tri.begin(), tri.end(), [&](int v) { return m.vertices[v].z() == 1.0; })) {
      m.facet_labels[f] = FacetLabel::Sigma;
    }
  }
  return m;
}

SimplicialMesh gen_augmented_box_mesh(int N, const std::vector<InterfaceGraph>& interfaces,
                                      int resolution, double pad) {
  if (N < 1 || resolution < 2) throw GeometryError("gen_augmented_box_mesh: bad N or resolution");
  if (static_cast<int>(interfaces.size()) != N - 1) {
    throw GeometryError("gen_augmented_box_mesh: need N - 1 interfaces");
  }
  const double layers = pad * resolution;
  if (!(pad > 0.0) || std::abs(layers - std::round(layers)) > 1e-9) {
    throw GeometryError("gen_augmented_box_mesh: pad must be a positive multiple of 1/resolution");
  }
  check_interfaces(interfaces, std::max(64, 4 * resolution));
  const int nz = resolution + static_cast<int>(std::round(layers));
  SimplicialMesh m =
      gen_box_mesh(Vec3::Zero(), Vec3(1.0, 1.0, 1.0 + pad), {resolution, resolution, nz});
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const Vec3 b = m.barycenter(static_cast<int>(e));
    m.labels[e] = b.z() > 1.0 ? 0 : layer_label(interfaces, b);
  }
  return m;
}

void write_mesh(std::ostream& os, const SimplicialMesh& m) {
  os << "3 " << m.vertices.size() << ' ' << m.elements.size() << ' ' << m.facets.size() << '\n';
  os << std::setprecision(17);
  for (const auto& v : m.vertices) os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto& el = m.elements[e];
    os << el[0] << ' ' << el[1] << ' ' << el[2] << ' ' << el[3] << ' ' << m.labels[e] << '\n';
  }
  for (std::size_t f = 0; f < m.facets.size(); ++f) {
    const auto& t = m.facets[f];
    os << t[0] << ' ' << t[1] << ' ' << t[2] << ' '
       << (m.facet_labels[f] == FacetLabel::Sigma ? "SIGMA" : "OTHER") << '\n';
  }
}

SimplicialMesh read_mesh(std::istream& is) {
  SimplicialMesh m;
  int dim = 0;
  std::size_t nv = 0, ne = 0, nf = 0;
  if (!(is >> dim >> nv >> ne >> nf) || dim != 3) throw GeometryError("read_mesh: bad header");
  m.vertices.resize(nv);
  for (auto& v : m.vertices) {
    if (!(is >> v.x() >> v.y() >> v.z())) throw GeometryError("read_mesh: truncated vertices");
  }
  m.elements.resize(ne);
  m.labels.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    auto& el = m.elements[e];
    if (!(is >> el[0] >> el[1] >> el[2] >> el[3] >> m.labels[e])) {
      throw GeometryError("read_mesh: truncated elements");
    }
    for (int v : el)
      if (v < 0 || static_cast<std::size_t>(v) >= nv) throw GeometryError("read_mesh: bad index");
  }
  m.facets.resize(nf);
  m.facet_labels.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    std::string label;
    auto& t = m.facets[f];
    if (!(is >> t[0] >> t[1] >> t[2] >> label)) throw GeometryError("read_mesh: truncated facets");
    if (label == "SIGMA") {
      m.facet_labels[f] = FacetLabel::Sigma;
    } else if (label == "OTHER") {
      m.facet_labels[f] = FacetLabel::Other;
    } else {
      throw GeometryError("read_mesh: unknown facet label " + label);
    }
  }
  check_volumes(m);
  m.h = characteristic_size(m);
  return m;
}

// ---------------------------------------------------------------------------
// PartitionChain

PartitionChain PartitionChain::layered_box(std::vector<InterfaceGraph> interfaces,
                                           AprioriData data, Vec2 anchor_xy) {
  PartitionChain pc;
  pc.interfaces_ = std::move(interfaces);
  data.N = static_cast<int>(pc.interfaces_.size()) + 1;
  if (!(data.r0 > 0 && data.L > 0 && data.M > 0 && data.alpha > 0 && data.alpha <= 1 &&
        data.lambda >= 1 && data.gamma_bar > 0 && data.gamma_bar <= 1 && data.A_bar > 0)) {
    throw GeometryError("partition: a-priori constants out of range");
  }
  pc.data_ = data;
  check_interfaces(pc.interfaces_, 64);
  for (int label = data.N; label >= 1; --label) pc.chain_.push_back(label);
  for (std::size_t k = 0; k + 1 < pc.chain_.size(); ++k) {
    const auto& f = pc.interfaces_[pc.chain_[k] - 2];
    const Vec2 g = f.gradient(anchor_xy);
    pc.anchors_.emplace_back(anchor_xy.x(), anchor_xy.y(), f(anchor_xy));
    pc.normals_.push_back(Vec3(g.x(), g.y(), -1.0).normalized());
  }
  return pc;
}

int PartitionChain::label_at(const Vec3& x, double pad) const {
  constexpr double eps = 1e-12;
  const bool in_xy = x.x() >= -eps && x.x() <= 1 + eps && x.y() >= -eps && x.y() <= 1 + eps;
  if (!in_xy || x.z() < -eps) return -1;
  if (x.z() <= 1.0 + eps) return layer_label(interfaces_, x);
  if (pad > 0.0 && x.z() <= 1.0 + pad + eps) return 0;
  return -1;
}

InterfaceGraph PartitionChain::local_graph(int k) const {
  if (k < 0 || k + 1 >= static_cast<int>(chain_.size())) {
    throw GeometryError("partition: chain index out of range");
  }
  return interfaces_[chain_[k] - 2].localized(anchors_[k].head<2>());
}

bool PartitionChain::same_geometry(const PartitionChain& other) const {
  if (this == &other) return true;
  if (interfaces_.size() != other.interfaces_.size()) return false;
  for (std::size_t k = 0; k < interfaces_.size(); ++k) {
    for (int i = 0; i <= 8; ++i)
      for (int j = 0; j <= 8; ++j) {
        const Vec2 p(i / 8.0, j / 8.0);
        if (interfaces_[k](p) != other.interfaces_[k](p)) return false;
      }
  }
  return true;
}

}  // namespace eitlab
