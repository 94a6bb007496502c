#include "eitlab/conductivity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace eitlab {

// ---------------------------------------------------------------------------
// Expression compiler

namespace {

using Expr = std::function<double(const Vec3&)>;

class Parser {
public:
  explicit Parser(std::string text) : s_(std::move(text)) {}

  Expr parse() {
    Expr e = expression();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

private:
  std::string s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "expression \"" << s_ << "\": " << what << " at offset " << pos_;
    throw ConductivityError(msg.str());
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expression() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = [a = lhs, b = term()](const Vec3& x) { return a(x) + b(x); };
      } else if (accept('-')) {
        lhs = [a = lhs, b = term()](const Vec3& x) { return a(x) - b(x); };
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = [a = lhs, b = factor()](const Vec3& x) { return a(x) * b(x); };
      } else if (accept('/')) {
        lhs = [a = lhs, b = factor()](const Vec3& x) { return a(x) / b(x); };
      } else {
        return lhs;
      }
    }
  }

  Expr factor() {
    if (accept('-')) return [a = factor()](const Vec3& x) { return -a(x); };
    if (accept('+')) return factor();
    Expr base = primary();
    if (accept('^')) return [a = base, b = factor()](const Vec3& x) { return std::pow(a(x), b(x)); };
    return base;
  }

  Expr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    if (accept('(')) {
      Expr e = expression();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return [v](const Vec3&) { return v; };
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "x1" || id == "x") return [](const Vec3& x) { return x[0]; };
      if (id == "x2" || id == "y") return [](const Vec3& x) { return x[1]; };
      if (id == "x3" || id == "z") return [](const Vec3& x) { return x[2]; };
      if (id == "pi") return [](const Vec3&) { return std::numbers::pi; };
      if (id == "e") return [](const Vec3&) { return std::numbers::e; };
      double (*fn)(double) = nullptr;
      if (id == "sin") fn = [](double v) { return std::sin(v); };
      if (id == "cos") fn = [](double v) { return std::cos(v); };
      if (id == "tan") fn = [](double v) { return std::tan(v); };
      if (id == "exp") fn = [](double v) { return std::exp(v); };
      if (id == "log") fn = [](double v) { return std::log(v); };
      if (id == "sqrt") fn = [](double v) { return std::sqrt(v); };
      if (id == "abs") fn = [](double v) { return std::abs(v); };
      if (id == "tanh") fn = [](double v) { return std::tanh(v); };
      if (!fn) fail("unknown identifier '" + id + "'");
      if (!accept('(')) fail("expected '(' after " + id);
      Expr arg = expression();
      if (!accept(')')) fail("expected ')'");
      return [fn, arg](const Vec3& x) { return fn(arg(x)); };
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

Mat3 mat_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConductivityError("matrix must be a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw ConductivityError("matrix must be a 3x3 array");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

std::string describe_point(const Vec3& x) {
  std::ostringstream os;
  os << '(' << x.x() << ", " << x.y() << ", " << x.z() << ')';
  return os.str();
}

}  // namespace

std::function<double(const Vec3&)> compile_expression(const std::string& text) {
  return Parser(text).parse();
}

// ---------------------------------------------------------------------------
// MatrixField

MatrixField::MatrixField(Kind kind, Fn fn, std::string description)
    : kind_(kind), fn_(std::move(fn)), description_(std::move(description)) {
  if (!fn_) throw ConductivityError("matrix field: empty function");
}

MatrixField MatrixField::identity() {
  return MatrixField(Kind::Identity, [](const Vec3&) { return Mat3::Identity().eval(); },
                     "identity");
}

MatrixField MatrixField::constant(const Mat3& a) {
  std::ostringstream os;
  os << "constant " << a.format(Eigen::IOFormat(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "; "));
  return MatrixField(Kind::Constant, [a](const Vec3&) { return a; }, os.str());
}

MatrixField MatrixField::affine(const Mat3& c, const std::array<Mat3, 3>& lin) {
  return MatrixField(
      Kind::Affine,
      [c, lin](const Vec3& x) -> Mat3 { return c + x[0] * lin[0] + x[1] * lin[1] + x[2] * lin[2]; },
      "affine");
}

MatrixField MatrixField::expr(const std::array<std::string, 6>& e) {
  std::array<Expr, 6> f;
  for (int i = 0; i < 6; ++i) f[i] = compile_expression(e[i]);
  std::string desc = "expr [" + e[0] + ", " + e[1] + ", " + e[2] + ", " + e[3] + ", " + e[4] +
                     ", " + e[5] + "]";
  return MatrixField(
      Kind::Expr,
      [f](const Vec3& x) -> Mat3 {
        Mat3 m;
        m(0, 0) = f[0](x);
        m(1, 1) = f[1](x);
        m(2, 2) = f[2](x);
        m(0, 1) = m(1, 0) = f[3](x);
        m(0, 2) = m(2, 0) = f[4](x);
        m(1, 2) = m(2, 1) = f[5](x);
        return m;
      },
      desc);
}

MatrixField MatrixField::from_json(const nlohmann::json& j) {
  const std::string kind = j.value("A", std::string("identity"));
  const nlohmann::json params = j.value("A_params", nlohmann::json::object());
  if (kind == "identity") return identity();
  if (kind == "constant") return constant(mat_from_json(params.at("matrix")));
  if (kind == "affine") {
    const Mat3 c = params.contains("constant") ? mat_from_json(params.at("constant"))
                                               : Mat3::Identity().eval();
    std::array<Mat3, 3> lin = {Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
    if (params.contains("linear")) {
      const auto& l = params.at("linear");
      if (!l.is_array() || l.size() != 3) throw ConductivityError("affine: linear needs 3 matrices");
      for (int i = 0; i < 3; ++i) lin[i] = mat_from_json(l[i]);
    }
    return affine(c, lin);
  }
  if (kind == "expr") {
    const std::array<const char*, 6> keys = {"xx", "yy", "zz", "xy", "xz", "yz"};
    std::array<std::string, 6> e = {"1", "1", "1", "0", "0", "0"};
    const auto entries = params.value("entries", nlohmann::json::object());
    for (int i = 0; i < 6; ++i)
      if (entries.contains(keys[i])) e[i] = entries.at(keys[i]).get<std::string>();
    return expr(e);
  }
  throw ConductivityError("unknown matrix field kind '" + kind + "'");
}

double spectral_norm_sym(const Mat3& a) {
  Eigen::SelfAdjointEigenSolver<Mat3> es;
  es.computeDirect(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// ClassCConductivity

ClassCConductivity::ClassCConductivity(std::vector<double> g, std::shared_ptr<const MatrixField> a,
                                       double gbar, std::shared_ptr<const PartitionChain> p)
    : gamma(std::move(g)), A(std::move(a)), gamma_bar(gbar), partition(std::move(p)) {
  if (!A || !partition) throw ConductivityError("conductivity: missing field or partition");
  if (static_cast<int>(gamma.size()) != partition->N()) {
    std::ostringstream msg;
    msg << "conductivity: " << gamma.size() << " values for a partition of " << partition->N()
        << " subdomains";
    throw ConductivityError(msg.str());
  }
  if (!(gamma_bar > 0.0 && gamma_bar <= 1.0)) throw ConductivityError("gamma_bar must be in (0,1]");
}

Mat3 ClassCConductivity::value(int label, const Vec3& x) const {
  if (label < 1 || label > static_cast<int>(gamma.size())) {
    throw ConductivityError("conductivity: label " + std::to_string(label) + " out of range");
  }
  return gamma[label - 1] * (*A)(x);
}

ClassCConductivity ClassCConductivity::scaled(double c) const {
  std::vector<double> g = gamma;
  for (double& v : g) v *= c;
  return with_gamma(std::move(g));
}

ClassCConductivity ClassCConductivity::with_gamma(std::vector<double> g) const {
  return ClassCConductivity(std::move(g), A, gamma_bar, partition);
}

Mat3 sigma_eval(const ClassCConductivity& cond, const Vec3& x) {
  const int label = cond.partition->label_at(x);
  if (label < 1) throw ConductivityError("sigma_eval: point " + describe_point(x) + " lies outside every subdomain");
  return cond.value(label, x);
}

ValidationReport validate_class(const ClassCConductivity& cond, int n) {
  ValidationReport rep;
  const AprioriData& d = cond.partition->data();
  for (std::size_t j = 0; j < cond.gamma.size(); ++j) {
    const double g = cond.gamma[j];
    if (!(g >= cond.gamma_bar && g <= 1.0 / cond.gamma_bar)) {
      rep.violations.push_back({"gamma bound", "index " + std::to_string(j + 1), g});
    }
  }
  n = std::max(n, 2);
  std::vector<Vec3> pts;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        pts.emplace_back(static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1),
                         static_cast<double>(k) / (n - 1));
  std::vector<Mat3> vals(pts.size());
  double sup = 0.0;
  Vec3 sup_at = Vec3::Zero();
  for (std::size_t p = 0; p < pts.size(); ++p) {
    vals[p] = (*cond.A)(pts[p]);
    const Mat3& a = vals[p];
    const double asym = (a - a.transpose()).norm();
    if (asym > 0.0) {
      rep.violations.push_back({"symmetry", describe_point(pts[p]), asym});
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es;
    es.computeDirect(a, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    const double tol = 1e-12;
    if (lo < 1.0 / d.lambda - tol) rep.violations.push_back({"ellipticity (lower)", describe_point(pts[p]), lo});
    if (hi > d.lambda + tol) rep.violations.push_back({"ellipticity (upper)", describe_point(pts[p]), hi});
    const double nrm = std::max(std::abs(lo), std::abs(hi));
    if (nrm > sup) {
      sup = nrm;
      sup_at = pts[p];
    }
  }
  // Difference quotients between grid neighbours along axes and cell diagonals.
  double lip = 0.0;
  std::string lip_at;
  auto idx = [n](int i, int j, int k) { return static_cast<std::size_t>(i + n * (j + n * k)); };
  const std::array<std::array<int, 3>, 4> steps = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}}};
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& s : steps) {
          const int i2 = i + s[0], j2 = j + s[1], k2 = k + s[2];
          if (i2 >= n || j2 >= n || k2 >= n) continue;
          const std::size_t a = idx(i, j, k), b = idx(i2, j2, k2);
          const double q = spectral_norm_sym(vals[a] - vals[b]) / (pts[a] - pts[b]).norm();
          if (q > lip) {
            lip = q;
            lip_at = describe_point(pts[a]) + " - " + describe_point(pts[b]);
          }
        }
  const double c01 = sup + d.r0 * lip;
  if (c01 > d.A_bar * (1.0 + 1e-12)) {
    rep.violations.push_back({"C^{0,1} bound", "sup at " + describe_point(sup_at) +
                                                   ", Lipschitz quotient at " + lip_at,
                              c01});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Extension to the augmented domain

double ExtendedConductivity::gamma_tilde(int label) const {
  if (label == 0) return 1.0;
  if (label < 1 || label > static_cast<int>(base.gamma.size())) {
    throw ConductivityError("extended conductivity: label " + std::to_string(label) + " out of range");
  }
  return base.gamma[label - 1];
}

Mat3 ExtendedConductivity::A_tilde(const Vec3& x) const {
  const Vec3 p = x.cwiseMax(Vec3::Zero()).cwiseMin(Vec3::Ones());
  return (*base.A)(p);
}

Mat3 ExtendedConductivity::value(int label, const Vec3& x) const {
  return gamma_tilde(label) * A_tilde(x);
}

ExtendedConductivity extend_to_augmented(const ClassCConductivity& cond, const D0Box& d0) {
  if (d0.z_lo < 1.0) throw ConductivityError("extend_to_augmented: D0 overlaps the domain");
  if (d0.z_lo > 1.0) throw ConductivityError("extend_to_augmented: D0 must attach along the top face");
  if (!(d0.z_hi > d0.z_lo)) throw ConductivityError("extend_to_augmented: empty D0");
  return ExtendedConductivity{cond, d0};
}

Mat3 sigma_eval(const ExtendedConductivity& cond, const Vec3& x) {
  const int label = cond.base.partition->label_at(x, cond.d0.pad());
  if (label < 0) throw ConductivityError("sigma_eval: point " + describe_point(x) + " lies outside the augmented domain");
  return cond.value(label, x);
}

double ConductivityView::gamma(int label) const {
  if (label < 0 || label >= static_cast<int>(gamma_by_label.size()) ||
      !std::isfinite(gamma_by_label[label])) {
    throw ConductivityError("conductivity undefined on label " + std::to_string(label));
  }
  return gamma_by_label[label];
}

ConductivityView view(const ClassCConductivity& cond) {
  ConductivityView v;
  v.gamma_by_label.push_back(std::numeric_limits<double>::quiet_NaN());
  v.gamma_by_label.insert(v.gamma_by_label.end(), cond.gamma.begin(), cond.gamma.end());
  v.A = [a = cond.A](const Vec3& x) { return (*a)(x); };
  v.A_constant = cond.A->is_constant();
  v.partition = cond.partition;
  return v;
}

ConductivityView view(const ExtendedConductivity& cond) {
  ConductivityView v = view(cond.base);
  v.gamma_by_label[0] = 1.0;
  v.A = [c = cond](const Vec3& x) { return c.A_tilde(x); };
  return v;
}

double linf_distance(const ClassCConductivity& c1, const ClassCConductivity& c2,
                     const SimplicialMesh& samples) {
  if (!c1.partition->same_geometry(*c2.partition) || c1.gamma.size() != c2.gamma.size()) {
    throw ConductivityError("linf_distance: conductivities live on different partitions");
  }
  if (c1.A != c2.A) {
    for (int i = 0; i <= 4; ++i) {
      const Vec3 p = Vec3::Constant(i / 4.0);
      if (((*c1.A)(p) - (*c2.A)(p)).norm() != 0.0) {
        throw ConductivityError("linf_distance: conductivities use different matrix fields");
      }
    }
  }
  std::vector<double> dg(c1.gamma.size());
  for (std::size_t j = 0; j < dg.size(); ++j) dg[j] = std::abs(c1.gamma[j] - c2.gamma[j]);
  double best = 0.0;
  for (std::size_t e = 0; e < samples.elements.size(); ++e) {
    const int label = samples.labels[e];
    if (label < 1 || label > static_cast<int>(dg.size())) continue;
    if (dg[label - 1] == 0.0) continue;
    const auto v = samples.element_vertices(static_cast<int>(e));
    const Vec3 b = 0.25 * (v[0] + v[1] + v[2] + v[3]);
    double a = spectral_norm_sym((*c1.A)(b));
    for (const auto& p : v) a = std::max(a, spectral_norm_sym((*c1.A)(p)));
    best = std::max(best, dg[label - 1] * a);
  }
  return best;
}

double linf_distance(const ClassCConductivity& c1, const ClassCConductivity& c2) {
  const auto& pc = *c1.partition;
  const SimplicialMesh m = gen_layered_box_mesh(pc.N(), pc.interfaces(), 16);
  return linf_distance(c1, c2, m);
}

}  // namespace eitlab
