#include "eitlab/lab.hpp"

#include "eitlab/dnmap.hpp"
#include "eitlab/fem.hpp"
#include "eitlab/kernels.hpp"
#include "eitlab/quadrature.hpp"
#include "eitlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace eitlab {

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"asymptotics", "stability-sweep", "su-decay",
                                                 "kernel-checks", "budget", "mesh-gen"};
  return names;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& experiment) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end()) {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.experiment = experiment;
  if (j.contains("experiment") && j.at("experiment") != experiment) {
    throw ConfigError("config is for experiment '" + j.at("experiment").dump() + "', not '" +
                      experiment + "'");
  }
  c.resolution = get_or<int>(j, "resolution", c.resolution);
  if (c.resolution < 4) throw ConfigError("resolution must be >= 4");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.samples = get_or<int>(j, "samples", c.samples);
  if (c.samples < 1) throw ConfigError("samples must be positive");
  if (j.contains("interfaces")) {
    c.interfaces = j.at("interfaces");
    if (!c.interfaces.is_array()) throw ConfigError("interfaces must be an array");
    for (const auto& i : c.interfaces) {
      if (!i.is_number() && !i.is_string()) {
        throw ConfigError("interfaces entries must be heights or expressions in x1, x2");
      }
    }
  }
  if (j.contains("apriori")) {
    const auto& a = j.at("apriori");
    auto& d = c.apriori;
    d.N = get_or<int>(a, "N", d.N);
    d.r0 = get_or<double>(a, "r0", d.r0);
    d.L = get_or<double>(a, "L", d.L);
    d.M = get_or<double>(a, "M", d.M);
    d.alpha = get_or<double>(a, "alpha", d.alpha);
    d.lambda = get_or<double>(a, "lambda", d.lambda);
    d.gamma_bar = get_or<double>(a, "gamma_bar", d.gamma_bar);
    d.A_bar = get_or<double>(a, "A_bar", d.A_bar);
    if (!(d.gamma_bar > 0.0 && d.gamma_bar <= 1.0)) throw ConfigError("gamma_bar must lie in (0, 1]");
    if (!(d.r0 > 0.0) || !(d.L > 0.0)) throw ConfigError("r0 and L must be positive");
  }
  c.apriori.N = static_cast<int>(c.interfaces.size()) + 1;
  for (const char* key : {"conductivity", "tolerances", "params"}) {
    if (j.contains(key) && !j.at(key).is_object()) {
      throw ConfigError(std::string("config field '") + key + "' must be an object");
    }
  }
  c.conductivity = j.value("conductivity", nlohmann::json::object());
  c.tolerances = j.value("tolerances", nlohmann::json::object());
  for (const auto& [k, v] : c.tolerances.items()) {
    if (!v.is_number()) throw ConfigError("tolerance '" + k + "' must be a number");
  }
  c.params = j.value("params", nlohmann::json::object());
  c.out_dir = get_or<std::string>(j, "out", ".");
  // Fail early on malformed geometry.
  try {
    (void)c.interface_graphs();
    if (!c.conductivity.empty()) (void)MatrixField::from_json(c.conductivity);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path,
                                        const std::string& experiment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, experiment);
}

std::vector<InterfaceGraph> ExperimentConfig::interface_graphs() const {
  std::vector<InterfaceGraph> out;
  for (const auto& i : interfaces) {
    if (i.is_number()) {
      out.push_back(InterfaceGraph::flat(i.get<double>(), apriori.r0, apriori.M, apriori.alpha));
    } else {
      auto f = compile_expression(i.get<std::string>());
      out.emplace_back([f](const Vec2& p) { return f(Vec3(p.x(), p.y(), 0.0)); }, apriori.r0,
                       apriori.M, apriori.alpha);
    }
  }
  return out;
}

double ExperimentConfig::tolerance(const std::string& key, double fallback) const {
  return tolerances.contains(key) ? tolerances.at(key).get<double>() : fallback;
}

double ExperimentConfig::param(const std::string& key, double fallback) const {
  if (!params.contains(key)) return fallback;
  if (!params.at(key).is_number()) throw ConfigError("param '" + key + "' must be a number");
  return params.at(key).get<double>();
}

// ---------------------------------------------------------------------------
// Tables

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw std::logic_error("table row width mismatch");
  rows.push_back(std::move(row));
}

std::size_t Table::col(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double Table::num(std::size_t row, const std::string& name) const {
  const auto& c = rows.at(row).at(col(name));
  if (c.is_number()) return c.get<double>();
  throw std::out_of_range("column '" + name + "' is not numeric");
}

std::string Table::str(std::size_t row, const std::string& name) const {
  const auto& c = rows.at(row).at(col(name));
  if (c.is_string()) return c.get<std::string>();
  return c.dump();
}

namespace {

std::string format_cell(const Cell& c) {
  if (c.is_string()) return c.get<std::string>();
  if (c.is_number_integer()) return c.dump();
  if (c.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << c.get<double>();
    return os.str();
  }
  throw std::logic_error("unsupported CSV cell " + c.dump());
}

Cell parse_cell(const std::string& s) {
  if (s.empty()) return s;
  char* end = nullptr;
  const long long iv = std::strtoll(s.c_str(), &end, 10);
  if (*end == '\0') return iv;
  const double dv = std::strtod(s.c_str(), &end);
  if (*end == '\0') return dv;
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv(std::ostream& os, const Table& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_cell(r[i]);
    os << '\n';
  }
}

Table read_csv(std::istream& is) {
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV");
  t.columns = split_csv(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<Cell> row;
    for (const auto& s : split_csv(line)) row.push_back(parse_cell(s));
    t.add(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Statistics

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("loglog_slope: size mismatch");
  std::size_t lo = 0, hi = x.size();
  if (x.size() >= 4) {
    lo = 1;
    hi = x.size() - 1;
  }
  if (hi - lo < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double tol_of(const nlohmann::json& tol, const char* key, double fallback) {
  return tol.contains(key) ? tol.at(key).get<double>() : fallback;
}

nlohmann::json check(const std::string& name, double value, double lo, double hi) {
  const bool ok = std::isfinite(value) && value >= lo && value <= hi;
  return {{"check", name}, {"value", value}, {"min", lo}, {"max", hi}, {"pass", ok}};
}

nlohmann::json finalize(nlohmann::json summary) {
  bool ok = true;
  for (const auto& c : summary["checks"]) ok = ok && c.at("pass").get<bool>();
  summary["pass"] = ok;
  return summary;
}

const double kInf = std::numeric_limits<double>::infinity();

// Rows of a table whose "kind" column equals `kind`.
std::vector<std::size_t> rows_of(const Table& t, const std::string& kind) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.str(i, "kind") == kind) out.push_back(i);
  }
  return out;
}

std::shared_ptr<const MatrixField> matrix_field(const nlohmann::json& j) {
  return std::make_shared<const MatrixField>(MatrixField::from_json(j));
}

std::vector<double> gamma_list(const nlohmann::json& j, const char* key, int N) {
  if (!j.contains(key)) throw ConfigError(std::string("missing conductivity field '") + key + "'");
  std::vector<double> g;
  try {
    g = j.at(key).get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
  if (static_cast<int>(g.size()) != N) {
    throw ConfigError(std::string("field '") + key + "' needs one value per layer (" +
                      std::to_string(N) + ")");
  }
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// kernel-checks

namespace {

using V3 = VecN<3>;
using M3 = MatN<3>;

struct KernelRng {
  std::mt19937_64 gen;
  std::uniform_real_distribution<double> u{-1.0, 1.0};

  double uni() { return u(gen); }
  V3 point() { return V3(uni(), uni(), uni()); }
  V3 point_side(int sign) {
    V3 p = point();
    p[2] = sign * (0.05 + 0.95 * std::abs(p[2]));
    return p;
  }
  double contrast(double gbar) {
    std::uniform_real_distribution<double> d(std::log(gbar), -2.0 * std::log(gbar));
    return std::exp(d(gen));
  }
  M3 spd() {
    M3 B;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) B(i, j) = uni();
    }
    return B * B.transpose() + 0.2 * M3::Identity();
  }
};

struct KernelCheckRow {
  std::string suite;
  std::string name;
  int points;
  double residual;
  double tolerance;
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// int (1 + (k-1) chi_+) A0 grad H(., eta) . grad psi for a radial bump psi of radius R
// centred at eta with psi(eta) = 1.
double weak_delta_pairing(const AnisoTwoPhaseKernel<3>& kern, const V3& eta, double R) {
  const double k = kern.h.k;
  const M3 A0 = kern.basis.A0;
  auto integrand = [&](const Eigen::Vector3d& x) {
    const V3 d = x - eta;
    const double r = d.norm();
    const double s = r / R;
    if (s >= 1.0 || r == 0.0) return 0.0;
    const double q = 1.0 - s * s;
    const double psi = std::exp(1.0 - 1.0 / q);
    const V3 gpsi = psi * (-2.0 * s / (q * q)) * d / (r * R);
    const Side side = x[2] > 0.0 ? Side::Upper : Side::Lower;
    const double coef = side == Side::Upper ? k : 1.0;
    return coef * (A0 * kern.grad(x, eta, side)).dot(gpsi);
  };
  ShellOptions opt;
  opt.plane_z = 0.0;
  opt.radial_panels = 32;
  opt.polar_points = 32;
  opt.azimuth_points = 48;
  return integrate_shell(integrand, eta, 0.0, R, opt);
}

std::vector<KernelCheckRow> kernel_suite(std::uint64_t seed, double gbar, int n) {
  KernelRng rng{std::mt19937_64(seed)};
  LaplaceKernel<3> lap;
  std::vector<KernelCheckRow> rows;

  {  // k = 1 degeneration, every branch
    TwoPhaseKernel<3> h(1.0);
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
      for (auto [sx, se] : {std::pair{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}) {
        const V3 x = rng.point_side(sx), e = rng.point_side(se);
        res = std::max(res, std::abs(h.eval(x, e) - lap.eval(x, e)));
        res = std::max(res, (h.grad(x, e) - lap.grad(x, e)).cwiseAbs().maxCoeff());
      }
    }
    rows.push_back({"identity", "k1_degeneration", 4 * n, res, 0.0});
  }
  {  // A0 = I reduces the anisotropic kernel exactly
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = rng.contrast(gbar);
      AnisoTwoPhaseKernel<3> ha(M3::Identity(), k);
      TwoPhaseKernel<3> h(k);
      for (auto [sx, se] : {std::pair{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}) {
        const V3 x = rng.point_side(sx), e = rng.point_side(se);
        res = std::max(res, std::abs(ha.eval(x, e) - h.eval(x, e)));
        res = std::max(res, (ha.grad(x, e) - h.grad(x, e)).cwiseAbs().maxCoeff());
      }
    }
    rows.push_back({"change_of_basis", "identity_matrix_exact", 4 * n, res, 0.0});
  }
  {  // (1/k) + (k-1)/(k(k+1)) = 2/(k+1) and value continuity across the plane
    double sym = 0.0, num = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = rng.contrast(gbar);
      TwoPhaseKernel<3> h(k);
      sym = std::max(sym, rel(1.0 / k + (k - 1.0) / (k * (k + 1.0)), 2.0 / (k + 1.0)));
      for (int se : {1, -1}) {
        V3 x = rng.point();
        x[2] = 0.0;
        const V3 e = rng.point_side(se);
        const auto [au, bu] = h.coefficients(true, se > 0);
        const auto [al, bl] = h.coefficients(false, se > 0);
        const double g = lap.eval(x, e), gs = lap.eval(x, mirror<3>(e));
        num = std::max(num, rel(au * g + bu * gs, al * g + bl * gs));
      }
    }
    rows.push_back({"transmission", "continuity_identity", n, sym, 1e-12});
    rows.push_back({"transmission", "continuity_numeric", 2 * n, num, 1e-12});
  }
  {  // flux transmission and tangential continuity, isotropic and anisotropic
    double flux = 0.0, tang = 0.0, aflux = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = rng.contrast(gbar);
      TwoPhaseKernel<3> h(k);
      AnisoTwoPhaseKernel<3> ha(rng.spd(), k);
      for (int se : {1, -1}) {
        V3 x = rng.point();
        x[2] = 0.0;
        const V3 e = rng.point_side(se);
        const V3 gu = h.grad(x, e, Side::Upper), gl = h.grad(x, e, Side::Lower);
        flux = std::max(flux, std::abs(k * gu[2] - gl[2]) / std::max(std::abs(gl[2]), 1e-300));
        tang = std::max(tang, (gu.head<2>() - gl.head<2>()).norm() /
                                  std::max(gl.head<2>().norm(), 1e-300));
        const V3 au = ha.basis.A0 * ha.grad(x, e, Side::Upper);
        const V3 al = ha.basis.A0 * ha.grad(x, e, Side::Lower);
        aflux = std::max(aflux, std::abs(k * au[2] - al[2]) / std::max(std::abs(al[2]), 1e-300));
      }
    }
    rows.push_back({"transmission", "flux_transmission", 2 * n, flux, 1e-9});
    rows.push_back({"transmission", "tangential_continuity", 2 * n, tang, 1e-9});
    rows.push_back({"transmission", "anisotropic_flux_transmission", 2 * n, aflux, 1e-9});
  }
  {  // symmetry, finite-difference gradients, harmonicity, decay band
    double sym = 0.0, fd = 0.0, lapres = 0.0, band = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = rng.contrast(gbar);
      TwoPhaseKernel<3> h(k);
      for (auto [sx, se] : {std::pair{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}) {
        const V3 x = rng.point_side(sx), e = rng.point_side(se);
        const double hv = h.eval(x, e);
        sym = std::max(sym, rel(h.eval(e, x), hv));
        const double dist = std::min((x - e).norm(), std::abs(x[2]));
        const double st = 1e-3 * dist;
        V3 g;
        double lp = 0.0;
        for (int c = 0; c < 3; ++c) {
          V3 xp = x, xm = x;
          xp[c] += st;
          xm[c] -= st;
          const double fp = h.eval(xp, e), fm = h.eval(xm, e);
          g[c] = (fp - fm) / (2.0 * st);
          lp += (fp - 2.0 * hv + fm) / (st * st);
        }
        fd = std::max(fd, (g - h.grad(x, e)).norm() / h.grad(x, e).norm());
        lapres = std::max(lapres, std::abs(lp) * (x - e).squaredNorm() / hv);
        const double c = hv * (x - e).norm() * lap.omega_n;
        const double lo = std::min({1.0, 1.0 / k, 2.0 / (k + 1.0)});
        const double hi = std::max({1.0, 1.0 / k, 2.0 / (k + 1.0)});
        band = std::max({band, lo - c, c - hi});
      }
    }
    rows.push_back({"identity", "symmetry", 4 * n, sym, 1e-12});
    rows.push_back({"identity", "gradient_finite_difference", 4 * n, fd, 1e-5});
    rows.push_back({"identity", "harmonicity", 4 * n, lapres, 1e-4});
    rows.push_back({"identity", "decay_band", 4 * n, std::max(band, 0.0), 1e-12});
  }
  {  // change of basis
    double fac = 0.0, nc = 0.0, lstar = 0.0, jm = 0.0, closed = 0.0, jl = 0.0;
    for (int i = 0; i < n; ++i) {
      const M3 A = rng.spd();
      const auto cb = build_change_of_basis<3>(A);
      const M3 Li = cb.L.inverse();
      fac = std::max(fac, (A - Li * Li.transpose()).norm() / A.norm());
      const V3 xi = rng.point();
      nc = std::max(nc, std::abs((cb.L * xi)[2] - xi[2] / cb.v.norm()) / xi.norm());
      M3 ls = cb.L;
      ls.row(2) *= -1.0;
      lstar = std::max(lstar, (ls - cb.Lstar).cwiseAbs().maxCoeff());
      const M3 J = j_matrix<3>(A);
      jm = std::max({jm, (J * J * A - M3::Identity()).norm(), (J - J.transpose()).norm()});
      AnisoTwoPhaseKernel<3> ha(A, rng.contrast(gbar));
      const V3 x = rng.point_side(1), e = rng.point_side(-1);
      closed = std::max(closed, rel(ha.eval_opposite_closed_form(x, e), ha.eval(x, e)));
      const V3 d = x - e;
      jl = std::max(jl, rel(d.dot(A.inverse() * d), (J * d).squaredNorm()));
    }
    rows.push_back({"change_of_basis", "factorization", n, fac, 1e-12});
    rows.push_back({"change_of_basis", "normal_component", n, nc, 1e-12});
    rows.push_back({"change_of_basis", "lstar_rows", n, lstar, 0.0});
    rows.push_back({"change_of_basis", "j_matrix", n, jm, 1e-12});
    rows.push_back({"change_of_basis", "opposite_closed_form", n, closed, 1e-12});
    rows.push_back({"change_of_basis", "j_l_consistency", n, jl, 1e-12});
    const auto cb = build_change_of_basis<3>(V3(4.0, 1.0, 1.0).asDiagonal().toDenseMatrix());
    const double dres = (cb.L - V3(0.5, 1.0, 1.0).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff();
    rows.push_back({"change_of_basis", "diagonal_example", 1, dres, 0.0});
  }
  {  // weak delta: pairing with a normalized bump returns psi(eta) = 1
    const double R = 0.5;
    const V3 eta(0.0, 0.0, -0.3 * R);
    AnisoTwoPhaseKernel<3> iso(M3::Identity(), 3.0);
    rows.push_back({"weak_delta", "weak_delta_isotropic", 1,
                    std::abs(weak_delta_pairing(iso, eta, R) - 1.0), 0.01});
    AnisoTwoPhaseKernel<3> an(rng.spd(), rng.contrast(gbar));
    rows.push_back({"weak_delta", "weak_delta_anisotropic", 1,
                    std::abs(weak_delta_pairing(an, eta, R) - 1.0), 0.01});
  }
  return rows;
}

nlohmann::json summarize_kernel_checks(const Table& t, const nlohmann::json&) {
  nlohmann::json s;
  s["checks"] = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    s["checks"].push_back(check(t.str(i, "check"), t.num(i, "residual"), 0.0, t.num(i, "tolerance")));
  }
  s["count"] = t.rows.size();
  return finalize(s);
}

}  // namespace

ResultRecord run_kernel_checks(const ExperimentConfig& cfg) {
  const int n = static_cast<int>(cfg.param("points", 100));
  if (n < 1) throw ConfigError("points must be positive");
  ResultRecord r;
  r.name = "kernel-checks";
  r.rows.columns = {"suite", "check", "points", "residual", "tolerance", "pass"};
  for (const auto& k : kernel_suite(cfg.seed, cfg.apriori.gamma_bar, n)) {
    const double tol = cfg.tolerance(k.name, k.tolerance);
    r.rows.add({k.suite, k.name, k.points, k.residual, tol, k.residual <= tol ? 1 : 0});
  }
  r.summary = summarize(r.name, r.rows, cfg.tolerances);
  r.pass = r.summary["pass"];
  return r;
}

// ---------------------------------------------------------------------------
// asymptotics

namespace {

nlohmann::json default_asymptotic_cases() {
  return nlohmann::json::parse(R"([
    {"name": "isotropic", "gamma": [1, 3]},
    {"name": "anisotropic", "gamma": [1, 3], "A": "constant",
     "A_params": {"matrix": [[4, 0, 0], [0, 1, 0], [0, 0, 1]]}},
    {"name": "homogeneous", "gamma": [1, 1]}
  ])");
}

nlohmann::json summarize_asymptotics(const Table& t, const nlohmann::json& tol) {
  const double ctol = tol_of(tol, "coefficient", 0.10);
  const double emin = tol_of(tol, "residual_exponent_min", 0.1);
  std::vector<std::string> cases;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto c = t.str(i, "case");
    if (std::find(cases.begin(), cases.end(), c) == cases.end()) cases.push_back(c);
  }
  nlohmann::json s;
  s["checks"] = nlohmann::json::array();
  s["cases"] = nlohmann::json::object();
  for (const auto& c : cases) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (t.str(i, "case") == c) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return t.num(a, "dist") > t.num(b, "dist"); });
    std::vector<double> dist, res, gres;
    for (auto i : idx) {
      dist.push_back(t.num(i, "dist"));
      res.push_back(t.num(i, "norm_residual"));
      gres.push_back(t.num(i, "grad_norm_residual"));
    }
    const auto a = idx[idx.size() - 1], b = idx[idx.size() >= 2 ? idx.size() - 2 : 0];
    const double ra = t.num(a, "r"), rb = t.num(b, "r");
    const double ca = t.num(a, "coef"), cb = t.num(b, "coef");
    const double c0 = ra == rb ? ca : ca - ra * (cb - ca) / (rb - ra);
    const double expected = t.num(a, "expected_coef");
    const double slope = loglog_slope(dist, res);
    const double gslope = loglog_slope(dist, gres);
    s["cases"][c] = {{"extrapolated_coefficient", c0},
                     {"expected_coefficient", expected},
                     {"finest_coefficient", ca},
                     {"residual_exponent", slope},
                     {"gradient_residual_exponent", gslope}};
    s["checks"].push_back(check(c + ":coefficient", std::abs(c0 / expected - 1.0), 0.0, ctol));
    s["checks"].push_back(check(c + ":residual_exponent", slope, emin, kInf));
  }
  return finalize(s);
}

}  // namespace

ResultRecord run_asymptotics(const ExperimentConfig& cfg) {
  if (cfg.interfaces.size() != 1) throw ConfigError("asymptotics needs exactly one interface");
  const auto graphs = cfg.interface_graphs();
  const nlohmann::json cases = cfg.params.value("cases", default_asymptotic_cases());
  std::vector<double> ladder;
  if (cfg.params.contains("ladder")) {
    ladder = cfg.params.at("ladder").get<std::vector<double>>();
  } else {
    for (int i = 0; i < 7; ++i) ladder.push_back(0.25 * std::pow(0.5, i));
  }
  const GreenMethod method = green_method_from_string(cfg.params.value("method", std::string("split")));
  const Vec2 pxy(cfg.param("x1", 0.5), cfg.param("x2", 0.5));
  const Vec3 P(pxy.x(), pxy.y(), graphs[0](pxy));
  if (graphs[0].gradient(pxy).norm() > 1e-12) throw ConfigError("asymptotics needs a flat interface at P");

  auto mesh = std::make_shared<const SimplicialMesh>(
      gen_layered_box_mesh(2, graphs, cfg.resolution));
  const double r_min = method == GreenMethod::Split ? mesh->h / 8.0 : 4.0 * mesh->h;
  {
    std::vector<double> feasible;
    bool ok = true;
    for (double r : ladder) {
      const Vec3 y = P + r * Vec3::UnitZ(), x = P - r * Vec3::UnitZ();
      const double db = std::min({y.z(), 1.0 - y.z(), x.z(), 1.0 - x.z()});
      if (2.0 * r > r_min && db >= 2.0 * mesh->h) {
        feasible.push_back(r);
      } else {
        ok = false;
      }
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "ladder infeasible at resolution " << cfg.resolution << "; feasible r:";
      for (double r : feasible) msg << ' ' << r;
      throw ConfigError(msg.str());
    }
  }
  auto part = std::make_shared<const PartitionChain>(
      PartitionChain::layered_box(graphs, cfg.apriori, pxy));
  LaplaceKernel<3> lap;

  ResultRecord r;
  r.name = "asymptotics";
  r.rows.columns = {"case", "gamma_l", "gamma_u", "r", "dist", "G", "pred", "coef",
                    "expected_coef", "norm_residual", "grad_norm_residual", "iterations"};
  for (const auto& c : cases) {
    const std::string name = c.at("name");
    const auto gamma = gamma_list(c, "gamma", 2);
    auto A = matrix_field(c);
    ClassCConductivity cond(gamma, A, cfg.apriori.gamma_bar, part);
    const auto sys = assemble(mesh, cond);
    const Mat3 A0 = (*A)(P);
    const M3 J = j_matrix<3>(A0);
    const double detJ = J.determinant();
    const double expected = 2.0 / (gamma[0] + gamma[1]);
    for (double rr : ladder) {
      const Vec3 y = P + rr * Vec3::UnitZ(), x = P - rr * Vec3::UnitZ();
      const auto g = solve_green(sys, y, method);
      const double G = g.value(x);
      const double base = detJ * lap.eval(J * x, J * y);
      const double pred = expected * base;
      const Vec3 gpred = expected * detJ * (J.transpose() * lap.grad(J * x, J * y));
      const Vec3 gG = g.gradient(x);
      const double dist = (x - y).norm();
      r.rows.add({name, gamma[0], gamma[1], rr, dist, G, pred, G / base, expected,
                  std::abs(G - pred) * dist, (gG - gpred).norm() * dist * dist,
                  g.diagnostics.iterations});
    }
  }
  r.meta = {{"mesh_hash", mesh->hash()}, {"h", mesh->h}, {"method", to_string(method)},
            {"r_min", r_min}};
  r.summary = summarize(r.name, r.rows, cfg.tolerances);
  r.pass = r.summary["pass"];
  return r;
}

// ---------------------------------------------------------------------------
// stability-sweep

namespace {

nlohmann::json summarize_sweep(const Table& t, const nlohmann::json& tol) {
  const double min_samples = tol_of(tol, "min_samples", 50);
  const double spread = tol_of(tol, "family_spread", 3.0);
  const double scale_tol = tol_of(tol, "scale_invariance", 1e-10);
  std::vector<double> ratios, fam;
  int flagged = 0, nonfinite = 0;
  for (auto i : rows_of(t, "sample")) {
    if (t.num(i, "flagged") != 0) {
      ++flagged;
      continue;
    }
    const double q = t.num(i, "ratio");
    if (!std::isfinite(q)) ++nonfinite;
    ratios.push_back(q);
  }
  for (auto i : rows_of(t, "family")) {
    if (t.num(i, "flagged") == 0) fam.push_back(t.num(i, "ratio"));
  }
  nlohmann::json s;
  s["samples"] = rows_of(t, "sample").size();
  s["flagged"] = flagged;
  s["max_ratio"] = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
  s["median_ratio"] = ratios.empty() ? 0.0 : median(ratios);
  s["min_ratio"] = ratios.empty() ? 0.0 : *std::min_element(ratios.begin(), ratios.end());
  const double fm = median(fam);
  const double fspread = fam.empty() ? kInf
                                     : std::max(*std::max_element(fam.begin(), fam.end()) / fm,
                                                fm / *std::min_element(fam.begin(), fam.end()));
  s["family_median_ratio"] = fm;
  s["family_spread"] = fspread;
  {
    std::vector<double> eps;
    for (auto i : rows_of(t, "family")) eps.push_back(t.num(i, "eps"));
    s["family_eps_decades"] =
        eps.empty() ? 0.0
                    : std::log10(*std::max_element(eps.begin(), eps.end()) /
                                 *std::min_element(eps.begin(), eps.end()));
  }
  double ident = 1.0;
  for (auto i : rows_of(t, "identical")) ident = std::min(ident, t.num(i, "flagged"));
  double scale = kInf;
  const auto sc = rows_of(t, "scaled");
  const auto sm = rows_of(t, "sample");
  if (!sc.empty() && !sm.empty()) {
    scale = std::abs(t.num(sc[0], "ratio") / t.num(sm[0], "ratio") - 1.0);
  }
  s["empirical_lipschitz_constant"] = s["max_ratio"];
  s["checks"] = nlohmann::json::array({
      check("sample_count", static_cast<double>(ratios.size()), min_samples, kInf),
      check("nonfinite_ratios", nonfinite, 0, 0),
      check("family_spread", fspread, 1.0, spread),
      check("identical_pair_flagged", ident, 1, 1),
      check("scale_invariance", scale, 0.0, scale_tol),
  });
  return finalize(s);
}

}  // namespace

ResultRecord run_stability_sweep(const ExperimentConfig& cfg) {
  const auto graphs = cfg.interface_graphs();
  const int N = static_cast<int>(graphs.size()) + 1;
  auto part = std::make_shared<const PartitionChain>(PartitionChain::layered_box(graphs, cfg.apriori));
  auto mesh = std::make_shared<const SimplicialMesh>(gen_layered_box_mesh(N, graphs, cfg.resolution));
  auto A = matrix_field(cfg.conductivity);
  const double gbar = cfg.apriori.gamma_bar;
  const auto ts = build_trace_space(mesh);
  const Eigen::MatrixXd Ngram = h_half_gram(ts);
  const int family_points = static_cast<int>(cfg.param("family_points", 9));
  const double family_decades = cfg.param("family_decades", 4.0);
  const double scale_c = cfg.param("scale", 2.0);
  if (family_points < 2) throw ConfigError("family_points must be >= 2");

  auto cond_of = [&](const std::vector<double>& g) {
    ClassCConductivity c(g, A, gbar, part);
    return c;
  };
  auto dtn_of = [&](const ClassCConductivity& c) {
    const auto sys = assemble(mesh, c);
    return assemble_dtn(sys, ts);
  };
  ResultRecord r;
  r.name = "stability-sweep";
  r.rows.columns = {"kind", "index", "t"};
  for (const char* p : {"g1_", "g2_"}) {
    for (int j = 1; j <= N; ++j) r.rows.columns.push_back(p + std::to_string(j));
  }
  for (const char* c : {"E", "eps", "noise_floor", "ratio", "flagged"}) r.rows.columns.push_back(c);

  auto emit = [&](const std::string& kind, int index, double t, const std::vector<double>& g1,
                  const std::vector<double>& g2) {
    const auto c1 = cond_of(g1), c2 = cond_of(g2);
    const auto d1 = dtn_of(c1), d2 = dtn_of(c2);
    const double E = linf_distance(c1, c2, *mesh);
    const double eps = op_norm_star(d1.Lambda - d2.Lambda, Ngram);
    const double floor = 1e-9 * op_norm_star(d1.Lambda, Ngram);
    const bool flagged = !(eps > floor);
    std::vector<Cell> row = {kind, index, t};
    for (double v : g1) row.push_back(v);
    for (double v : g2) row.push_back(v);
    row.push_back(E);
    row.push_back(eps);
    row.push_back(floor);
    row.push_back(flagged ? 0.0 : E / eps);
    row.push_back(flagged ? 1 : 0);
    r.rows.add(std::move(row));
    return d1;
  };

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> lg(std::log(gbar), -std::log(gbar));
  auto sample = [&] {
    std::vector<double> g(N);
    for (auto& v : g) v = std::exp(lg(rng));
    return g;
  };
  std::vector<std::vector<double>> first;
  for (int s = 0; s < cfg.samples; ++s) {
    auto g1 = sample();
    auto g2 = sample();
    const auto d1 = emit("sample", s, 1.0, g1, g2);
    if (s == 0) {
      first = {g1, g2};
      std::ostringstream os;
      write_dtn(os, d1);
      r.artifacts.push_back({"stability-sweep.dtn.txt", os.str()});
      r.artifacts.push_back({"stability-sweep.dtn.json", dtn_sidecar(d1, *mesh).dump(2) + "\n"});
    }
  }
  for (int i = 0; i < family_points; ++i) {
    const double t = std::pow(10.0, -family_decades * i / (family_points - 1));
    std::vector<double> g2(N);
    for (int j = 0; j < N; ++j) g2[j] = first[0][j] + t * (first[1][j] - first[0][j]);
    emit("family", i, t, first[0], g2);
  }
  emit("identical", 0, 0.0, first[0], first[0]);
  {
    std::vector<double> a = first[0], b = first[1];
    for (auto& v : a) v *= scale_c;
    for (auto& v : b) v *= scale_c;
    emit("scaled", 0, scale_c, a, b);
  }
  r.meta = {{"mesh_hash", mesh->hash()}, {"sigma_nodes", ts.nodes.size()}, {"h", mesh->h}};
  r.summary = summarize(r.name, r.rows, cfg.tolerances);
  r.pass = r.summary["pass"];
  return r;
}

// ---------------------------------------------------------------------------
// su-decay

namespace {

nlohmann::json summarize_su(const Table& t, const nlohmann::json& tol) {
  const double target = tol_of(tol, "decay_exponent", -0.5);
  const double band = tol_of(tol, "decay_exponent_band", 0.125);
  const double wtol = tol_of(tol, "weak_residual", 1e-6);
  nlohmann::json s;
  auto series = [&](const std::string& kind, bool product) {
    std::vector<std::pair<double, double>> pts;
    for (auto i : rows_of(t, kind)) {
      const double x = product ? t.num(i, "dy") * t.num(i, "dz") : t.num(i, "dy");
      pts.emplace_back(x, std::abs(t.num(i, "S")));
    }
    std::sort(pts.begin(), pts.end(), [](auto a, auto b) { return a.first > b.first; });
    std::vector<double> x, y;
    for (auto [a, b] : pts) {
      x.push_back(a);
      y.push_back(b);
    }
    return std::pair{x, y};
  };
  const auto [dx, dyv] = series("diag", true);
  const double slope = loglog_slope(dx, dyv);
  const auto [fx, fy] = series("fixed_z", false);
  s["diagonal_exponent"] = slope;
  s["fixed_z_exponent"] = loglog_slope(fx, fy);
  double c_fit = 0.0, E = 0.0;
  for (auto i : rows_of(t, "diag")) {
    c_fit = std::max(c_fit, t.num(i, "ratio"));
    E = t.num(i, "E");
  }
  s["E"] = E;
  s["fitted_constant"] = c_fit;
  double ident = 0.0;
  for (auto i : rows_of(t, "identical")) ident = std::max(ident, std::abs(t.num(i, "S")));
  double weak = kInf;
  for (auto i : rows_of(t, "weak_residual")) weak = t.num(i, "S");
  s["weak_residual"] = weak;
  s["pruned"] = rows_of(t, "pruned").size();
  double smax = 0.0, r0 = 0.0;
  for (auto i : rows_of(t, "d0")) {
    smax = std::max(smax, std::abs(t.num(i, "S")));
    r0 = t.num(i, "bound");
  }
  // bound column of d0 rows carries r0; eps0 = r0^{n-2} max |S| in the gate.
  const double eps0 = r0 * smax;
  s["d0_max_abs"] = smax;
  s["eps0"] = eps0;
  nlohmann::json cas = nlohmann::json::array();
  for (auto i : rows_of(t, "cascade")) {
    cas.push_back({{"h", t.num(i, "index")},
                   {"d", t.num(i, "dy")},
                   {"abs_S", std::abs(t.num(i, "S"))},
                   {"remark_bound", c_fit * t.num(i, "bound")}});
  }
  s["cascade_comparison"] = cas;
  s["cascade_assertive"] = false;
  if (E > 0.0 && c_fit > 0.0) {
    BudgetInputs in;
    in.eps = eps0;
    in.E = E;
    in.C = std::max(1.0, c_fit);
    in.K = 2;
    s["budget"] = delta_recursion(in).to_json();
  }
  s["checks"] = nlohmann::json::array({
      check("identical_zero", ident, 0.0, 0.0),
      check("diagonal_exponent", slope, target - band, target + band),
      check("weak_residual", weak, 0.0, wtol),
  });
  return finalize(s);
}

}  // namespace

ResultRecord run_su_decay(const ExperimentConfig& cfg) {
  const auto graphs = cfg.interface_graphs();
  const int N = static_cast<int>(graphs.size()) + 1;
  if (N < 3) throw ConfigError("su-decay needs at least two interfaces");
  const double pad = cfg.param("pad", 0.5);
  std::vector<int> U = cfg.params.value("U", std::vector<int>{1});
  for (int u : U) {
    if (u < 1 || u >= N) throw ConfigError("U must list layers below the top layer");
  }
  const int utop = *std::max_element(U.begin(), U.end());
  auto part = std::make_shared<const PartitionChain>(PartitionChain::layered_box(graphs, cfg.apriori));
  auto A = matrix_field(cfg.conductivity);
  const auto g1 = gamma_list(cfg.conductivity, "gamma", N);
  const auto g2 = gamma_list(cfg.conductivity, "gamma2", N);
  for (int j = 1; j <= N; ++j) {
    if (std::find(U.begin(), U.end(), j) == U.end() && g1[j - 1] != g2[j - 1]) {
      throw ConfigError("gamma and gamma2 must agree outside U");
    }
  }
  const ClassCConductivity c1(g1, A, cfg.apriori.gamma_bar, part), c2(g2, A, cfg.apriori.gamma_bar, part);
  const D0Box d0{1.0, 1.0 + pad};
  const auto e1 = extend_to_augmented(c1, d0), e2 = extend_to_augmented(c2, d0);
  auto mesh = std::make_shared<const SimplicialMesh>(gen_augmented_box_mesh(N, graphs, cfg.resolution, pad));
  const auto sys1 = assemble(mesh, e1), sys2 = assemble(mesh, e2);
  const GreenMethod method = green_method_from_string(cfg.params.value("method", std::string("split")));
  const double E = linf_distance(c1, c2);
  const double r0 = cfg.apriori.r0;
  const Vec2 axy(0.5, 0.5);
  const double ztop = graphs[utop - 1](axy);

  std::vector<double> ladder;
  if (cfg.params.contains("d")) {
    ladder = cfg.params.at("d").get<std::vector<double>>();
  } else {
    for (int i = 3; i <= 7; ++i) ladder.push_back(std::pow(0.5, i));
  }

  ResultRecord r;
  r.name = "su-decay";
  r.rows.columns = {"kind", "index", "y1", "y2", "y3", "z1", "z2", "z3",
                    "dy", "dz", "S", "E", "bound", "ratio"};
  auto add = [&](const std::string& kind, int index, const Vec3& y, const Vec3& z, double dy,
                 double dz, double S, double bound) {
    r.rows.add({kind, index, y.x(), y.y(), y.z(), z.x(), z.y(), z.z(), dy, dz, S, E, bound,
                bound > 0.0 ? std::abs(S) / bound : 0.0});
  };
  const double r_min_probe = method == GreenMethod::Split ? mesh->h / 8.0 : 4.0 * mesh->h;
  auto admissible = [&](const Vec3& y) {
    const double dy = distance_to_labels(*mesh, U, y);
    const double db = std::min({y.x(), 1.0 - y.x(), y.y(), 1.0 - y.y(), y.z(), 1.0 + pad - y.z()});
    return dy >= r_min_probe && db >= 2.0 * mesh->h;
  };

  // Diagonal and fixed-z ladders above the top of U.
  std::vector<Vec3> ys;
  std::vector<GreenApprox> G1, G2;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const Vec3 y(axy.x(), axy.y(), ztop + ladder[i]);
    if (!admissible(y)) {
      add("pruned", static_cast<int>(i), y, y, ladder[i], ladder[i], 0.0, 0.0);
      continue;
    }
    ys.push_back(y);
    G1.push_back(solve_green(sys1, y, method));
    G2.push_back(solve_green(sys2, y, method));
  }
  if (ys.size() < 2) throw ConfigError("su-decay: fewer than two admissible ladder points");
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double d = distance_to_labels(*mesh, U, ys[i]);
    const double S = s_u_integral(sys1, sys2, G1[i], G2[i], U);
    add("diag", static_cast<int>(i), ys[i], ys[i], d, d, S, E / d);
  }
  {
    const double dz = distance_to_labels(*mesh, U, ys[0]);
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double dy = distance_to_labels(*mesh, U, ys[i]);
      const double S = s_u_integral(sys1, sys2, G1[i], G2[0], U);
      add("fixed_z", static_cast<int>(i), ys[i], ys[0], dy, dz, S, E / std::sqrt(dy * dz));
    }
  }
  add("identical", 0, ys[0], ys[0], 0.0, 0.0, s_u_integral(sys1, sys1, G1[0], G1[0], U), 0.0);
  {
    // Test vertices in the layer above U, away from its stencil.
    std::vector<int> nodes;
    const Vec3 target(0.5, 0.5, 0.5 * (ztop + 1.0));
    std::vector<std::pair<double, int>> cand;
    for (int v : sys1.free_dofs) cand.emplace_back((mesh->vertices[v] - target).norm(), v);
    std::sort(cand.begin(), cand.end());
    const int ntest = static_cast<int>(cfg.param("weak_test_nodes", 3));
    for (int i = 0; i < ntest && i < static_cast<int>(cand.size()); ++i) nodes.push_back(cand[i].second);
    const auto wr = su_weak_residual(sys1, sys2, G2[0], U, nodes);
    add("weak_residual", static_cast<int>(nodes.size()), target, ys[0], 0.0, 0.0, wr.max_relative, 0.0);
  }
  {
    // Hypothesis gate on a grid of D0 points at distance >= r0/3 from the unit box.
    const double zg = cfg.param("d0_height", 1.0 + 0.75 * pad);
    std::vector<Vec3> pts;
    for (double a : {0.25, 0.5, 0.75}) {
      for (double b : {0.25, 0.5, 0.75}) pts.emplace_back(a, b, zg);
    }
    std::vector<GreenApprox> P1, P2;
    int idx = 0;
    for (const auto& p : pts) {
      if (p.z() - 1.0 < r0 / 3.0 - 1e-12 || !admissible(p)) {
        add("pruned", idx++, p, p, 0.0, 0.0, 0.0, 0.0);
        continue;
      }
      P1.push_back(solve_green(sys1, p, method));
      P2.push_back(solve_green(sys2, p, method));
    }
    for (std::size_t i = 0; i < P1.size(); ++i) {
      for (std::size_t j = 0; j < P2.size(); ++j) {
        const double S = s_u_integral(sys1, sys2, P1[i], P2[j], U);
        add("d0", idx++, P1[i].y, P2[j].y, distance_to_labels(*mesh, U, P1[i].y),
            distance_to_labels(*mesh, U, P2[j].y), S, std::pow(r0, 3 - 2));
      }
    }
  }
  {
    // Points w_h = P + lambda_h nu along the cascade towards the top of U.
    const int kmax = static_cast<int>(cfg.param("cascade_kmax", 10));
    const auto cas = cascade(cfg.apriori.L, r0, kmax);
    for (int h = 1; h <= kmax; ++h) {
      const Vec3 w(axy.x(), axy.y(), ztop + cas.lambda[h - 1]);
      if (!admissible(w)) {
        add("pruned", h, w, w, 0.0, 0.0, 0.0, 0.0);
        continue;
      }
      const auto a = solve_green(sys1, w, method), b = solve_green(sys2, w, method);
      const double d = distance_to_labels(*mesh, U, w);
      add("cascade", h, w, w, d, d, s_u_integral(sys1, sys2, a, b, U), E / d);
    }
  }
  r.meta = {{"mesh_hash", mesh->hash()}, {"h", mesh->h}, {"method", to_string(method)},
            {"U", U}, {"pad", pad}};
  r.summary = summarize(r.name, r.rows, cfg.tolerances);
  r.pass = r.summary["pass"];
  return r;
}

// ---------------------------------------------------------------------------
// budget

namespace {

std::vector<Cell> budget_row(const std::string& kind, const BudgetReport& b) {
  const Tower t = b.lipschitz_tower.normalized();
  return {kind,
          b.inputs.eps,
          b.inputs.E,
          b.inputs.C,
          b.inputs.K,
          b.inputs.closing_iterates.value_or(b.inputs.K * b.inputs.K),
          b.delta.back(),
          b.closing_bound,
          b.final_bound,
          b.lipschitz_constant,
          t.level,
          t.value,
          to_string(b.branch)};
}

nlohmann::json summarize_budget(const Table& t, const nlohmann::json&) {
  nlohmann::json s;
  const auto conf = rows_of(t, "configured");
  if (!conf.empty()) {
    const auto i = conf[0];
    s["final_bound"] = t.num(i, "final_bound");
    s["branch"] = t.str(i, "branch");
    s["lipschitz_constant"] = t.num(i, "lipschitz_constant");
    s["lipschitz_tower"] = {{"exp_levels", t.num(i, "tower_level")}, {"value", t.num(i, "tower_value")}};
    s["inputs"] = {{"eps", t.num(i, "eps")}, {"E", t.num(i, "E")}, {"C", t.num(i, "C")}, {"K", t.num(i, "K")}};
  }
  std::vector<double> seq;
  for (auto i : rows_of(t, "delta")) seq.push_back(t.num(i, "delta_K"));
  s["delta_sequence"] = seq;
  double zero = 0.0;
  for (auto i : rows_of(t, "zero_eps")) zero = std::max({zero, std::abs(t.num(i, "final_bound")), std::abs(t.num(i, "delta_K"))});
  double trivial = kInf;
  for (auto i : rows_of(t, "trivial")) {
    trivial = t.str(i, "branch") == "trivial" ? std::abs(t.num(i, "lipschitz_constant") - std::exp(2.0)) : kInf;
  }
  int violations = 0;
  const auto ks = rows_of(t, "K_sweep");
  for (std::size_t j = 1; j < ks.size(); ++j) {
    const auto a = ks[j - 1], b = ks[j];
    const Tower ta{static_cast<int>(t.num(a, "tower_level")), t.num(a, "tower_value")};
    const Tower tb{static_cast<int>(t.num(b, "tower_level")), t.num(b, "tower_value")};
    if (tb < ta || t.num(b, "final_bound") < t.num(a, "final_bound")) ++violations;
  }
  s["k_sweep_points"] = ks.size();
  s["checks"] = nlohmann::json::array({
      check("zero_eps_budget", zero, 0.0, 0.0),
      check("trivial_branch_constant", trivial, 0.0, 0.0),
      check("monotone_in_K", violations, 0, 0),
  });
  return finalize(s);
}

}  // namespace

ResultRecord run_budget(const ExperimentConfig& cfg) {
  BudgetInputs in;
  in.eps = cfg.param("eps", 1e-3);
  in.E = cfg.param("E", 1e-1);
  in.C = cfg.param("C", 2.0);
  in.K = static_cast<int>(cfg.param("K", 2));
  in.N = cfg.apriori.N;
  if (cfg.params.contains("closing_iterates")) in.closing_iterates = static_cast<int>(cfg.param("closing_iterates", 1));
  nlohmann::json sweep_ref;
  if (cfg.params.contains("from_summary")) {
    std::filesystem::path p = cfg.params.at("from_summary").get<std::string>();
    std::ifstream is(p);
    if (!is) throw ConfigError("cannot open sweep summary " + p.string());
    nlohmann::json sj;
    try {
      is >> sj;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("sweep summary: " + std::string(e.what()));
    }
    const auto& ss = sj.contains("summary") ? sj.at("summary") : sj;
    if (!ss.contains("max_ratio")) throw ConfigError("sweep summary lacks max_ratio");
    sweep_ref = {{"source", p.filename().string()}, {"empirical_lipschitz_constant", ss.at("max_ratio")}};
  }
  BudgetReport conf;
  try {
    conf = delta_recursion(in);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  ResultRecord r;
  r.name = "budget";
  r.rows.columns = {"kind", "eps", "E", "C", "K", "closing_iterates", "delta_K", "closing_bound",
                    "final_bound", "lipschitz_constant", "tower_level", "tower_value", "branch"};
  r.rows.add(budget_row("configured", conf));
  for (int k = 0; k < static_cast<int>(conf.delta.size()); ++k) {
    BudgetReport d = conf;
    d.delta = {conf.delta[k]};
    auto row = budget_row("delta", d);
    row[4] = k;
    r.rows.add(row);
  }
  const int kmax = static_cast<int>(cfg.param("K_max", in.K + 4));
  for (int k = 1; k <= kmax; ++k) {
    BudgetInputs b = in;
    b.K = k;
    b.closing_iterates.reset();
    r.rows.add(budget_row("K_sweep", delta_recursion(b)));
  }
  {
    BudgetInputs z = in;
    z.eps = 0.0;
    z.E = 0.0;
    r.rows.add(budget_row("zero_eps", delta_recursion(z)));
    BudgetInputs t = in;
    t.eps = in.eps > 0.0 ? in.eps : 1.0;
    t.E = 0.5 * t.eps * std::exp(2.0);
    r.rows.add(budget_row("trivial", delta_recursion(t)));
  }
  r.meta = {{"report", conf.to_json()}};
  if (!sweep_ref.is_null()) r.meta["sweep"] = sweep_ref;
  r.summary = summarize(r.name, r.rows, cfg.tolerances);
  r.pass = r.summary["pass"];
  return r;
}

// ---------------------------------------------------------------------------
// mesh-gen

namespace {

nlohmann::json summarize_mesh(const Table& t, const nlohmann::json& tol) {
  const double vtol = tol_of(tol, "volume", 1e-12);
  double total = 0.0, expected = 0.0, minvol = kInf, mism = 0.0;
  nlohmann::json labels = nlohmann::json::object();
  for (auto i : rows_of(t, "label")) {
    total += t.num(i, "volume");
    minvol = std::min(minvol, t.num(i, "min_volume"));
    mism += t.num(i, "mismatched");
    labels[t.str(i, "label")] = {{"elements", t.num(i, "count")}, {"volume", t.num(i, "volume")}};
  }
  for (auto i : rows_of(t, "mesh")) expected = t.num(i, "volume");
  nlohmann::json s;
  s["labels"] = labels;
  s["total_volume"] = total;
  for (auto i : rows_of(t, "mesh")) {
    s["vertices"] = t.num(i, "count");
    s["h"] = t.num(i, "min_volume");
  }
  for (auto i : rows_of(t, "facets")) s["facets_" + t.str(i, "label")] = t.num(i, "count");
  s["checks"] = nlohmann::json::array({
      check("volume", std::abs(total - expected), 0.0, vtol),
      check("positive_orientation", minvol, 0.0, kInf),
      check("label_mismatches", mism, 0.0, 0.0),
  });
  s["checks"][1]["pass"] = minvol > 0.0;
  return finalize(s);
}

}  // namespace

ResultRecord run_mesh_gen(const ExperimentConfig& cfg) {
  const auto graphs = cfg.interface_graphs();
  const int N = static_cast<int>(graphs.size()) + 1;
  const double pad = cfg.param("pad", 0.0);
  if (pad < 0.0) throw ConfigError("pad must be nonnegative");
  SimplicialMesh mesh;
  try {
    mesh = pad > 0.0 ? gen_augmented_box_mesh(N, graphs, cfg.resolution, pad)
                     : gen_layered_box_mesh(N, graphs, cfg.resolution);
  } catch (const GeometryError& e) {
    throw ConfigError(e.what());
  }
  const auto part = PartitionChain::layered_box(graphs, cfg.apriori);
  std::map<int, std::array<double, 4>> stats;  // count, volume, min volume, mismatches
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const int l = mesh.labels[e];
    auto& s = stats.try_emplace(l, std::array<double, 4>{0.0, 0.0, kInf, 0.0}).first->second;
    const double v = mesh.element_volume(static_cast<int>(e));
    s[0] += 1;
    s[1] += v;
    s[2] = std::min(s[2], v);
    if (part.label_at(mesh.barycenter(static_cast<int>(e)), pad) != l) s[3] += 1;
  }
  ResultRecord r;
  r.name = "mesh-gen";
  r.rows.columns = {"kind", "label", "count", "volume", "min_volume", "mismatched"};
  for (const auto& [l, s] : stats) r.rows.add({"label", l, s[0], s[1], s[2], s[3]});
  int sigma = 0;
  for (auto f : mesh.facet_labels) sigma += f == FacetLabel::Sigma;
  r.rows.add({"facets", "SIGMA", sigma, 0.0, 0.0, 0.0});
  r.rows.add({"facets", "OTHER", static_cast<int>(mesh.facets.size()) - sigma, 0.0, 0.0, 0.0});
  r.rows.add({"mesh", "all", static_cast<int>(mesh.vertices.size()), 1.0 + pad, mesh.h, 0.0});
  std::ostringstream os;
  write_mesh(os, mesh);
  r.artifacts.push_back({"mesh-gen.mesh", os.str()});
  std::ostringstream hs;
  hs << std::hex << std::setw(16) << std::setfill('0') << mesh.hash();
  r.meta = {{"mesh_hash", hs.str()}, {"resolution", cfg.resolution}, {"pad", pad}};
  r.summary = summarize(r.name, r.rows, cfg.tolerances);
  r.pass = r.summary["pass"];
  return r;
}

// ---------------------------------------------------------------------------

nlohmann::json summarize(const std::string& experiment, const Table& rows,
                         const nlohmann::json& tolerances) {
  if (experiment == "kernel-checks") return summarize_kernel_checks(rows, tolerances);
  if (experiment == "asymptotics") return summarize_asymptotics(rows, tolerances);
  if (experiment == "stability-sweep") return summarize_sweep(rows, tolerances);
  if (experiment == "su-decay") return summarize_su(rows, tolerances);
  if (experiment == "budget") return summarize_budget(rows, tolerances);
  if (experiment == "mesh-gen") return summarize_mesh(rows, tolerances);
  throw ConfigError("unknown experiment '" + experiment + "'");
}

bool resummarize_matches(const ResultRecord& r, const nlohmann::json& tolerances) {
  std::stringstream ss;
  write_csv(ss, r.rows);
  const Table back = read_csv(ss);
  return summarize(r.name, back, tolerances).dump() == r.summary.dump();
}

ResultRecord run_experiment(const ExperimentConfig& cfg) {
  const auto& e = cfg.experiment;
  if (e == "asymptotics") return run_asymptotics(cfg);
  if (e == "stability-sweep") return run_stability_sweep(cfg);
  if (e == "su-decay") return run_su_decay(cfg);
  if (e == "kernel-checks") return run_kernel_checks(cfg);
  if (e == "budget") return run_budget(cfg);
  if (e == "mesh-gen") return run_mesh_gen(cfg);
  throw ConfigError("unknown experiment '" + e + "'");
}

void write_outputs(const ResultRecord& r, const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream os(cfg.out_dir / (r.name + ".rows.csv"));
    write_csv(os, r.rows);
  }
  {
    nlohmann::json j = r.summary;
    j["experiment"] = r.name;
    j["seed"] = cfg.seed;
    j["resolution"] = cfg.resolution;
    j["meta"] = r.meta;
    std::ofstream os(cfg.out_dir / (r.name + ".summary.json"));
    os << j.dump(2) << '\n';
  }
  for (const auto& [name, content] : r.artifacts) {
    std::ofstream os(cfg.out_dir / name);
    os << content;
  }
}

}  // namespace eitlab
