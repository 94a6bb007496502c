#include "eitlab/stability.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace eitlab {

namespace {

const double kEm2 = std::exp(-2.0);
const double kE2 = std::exp(2.0);
const double kLogMax = std::log(std::numeric_limits<double>::max());

// omega_b extended by continuity with omega(0) = 0.
double omega0(double b, double t) {
  if (t <= 0.0) return 0.0;
  if (t >= kEm2) return kEm2;
  return std::pow(2.0, b) * kEm2 * std::pow(-std::log(t), -b);
}

}  // namespace

OmegaWeight::OmegaWeight(double b_) : b(b_) {
  if (!(b_ > 0.0) || !std::isfinite(b_)) throw DomainError("omega weight requires b > 0");
}

double omega_eval(const OmegaWeight& w, double t) {
  if (!(t > 0.0)) throw DomainError("omega_eval requires t > 0");
  return omega0(w.b, t);
}

double omega_iterate(const OmegaWeight& w, int j, double t) {
  if (j < 1) throw DomainError("omega_iterate requires j >= 1");
  if (!(t > 0.0)) throw DomainError("omega_iterate requires t > 0");
  for (int i = 0; i < j; ++i) t = omega0(w.b, t);
  return t;
}

double omega_inverse(const OmegaWeight& w, double s) {
  if (!(s > 0.0)) throw DomainError("omega_inverse requires s > 0");
  if (s >= kEm2) {
    std::ostringstream msg;
    msg << "omega_inverse: s = " << s << " lies on the constant branch [e^-2, inf)";
    throw DomainError(msg.str());
  }
  return std::exp(-2.0 * std::pow(kEm2 / s, 1.0 / w.b));
}

double omega_inverse_iterate(const OmegaWeight& w, int j, double s) {
  if (j < 1) throw DomainError("omega_inverse_iterate requires j >= 1");
  for (int i = 0; i < j; ++i) s = omega_inverse(w, s);
  return s;
}

double CascadeParams::d_at(int k) const {
  if (k < 1) throw DomainError("cascade index starts at 1");
  if (k <= static_cast<int>(d.size())) return d[k - 1];
  double l = lambda.back(), r = rho.back();
  for (int i = static_cast<int>(d.size()); i < k; ++i) {
    l *= a;
    r *= a;
  }
  return l - r;
}

CascadeParams cascade(double L, double r0, int kmax) {
  if (!(L > 0.0) || !(r0 > 0.0)) throw DomainError("cascade requires L > 0 and r0 > 0");
  if (kmax < 1) throw DomainError("cascade requires kmax >= 1");
  CascadeParams c;
  c.L = L;
  c.r0 = r0;
  c.cascade_angle = std::atan(1.0 / L);
  c.beta1 = std::atan(std::sin(c.cascade_angle) / 4.0);
  const double sb1 = std::sin(c.beta1);
  c.a = (1.0 - sb1) / (1.0 + sb1);
  double l = r0 / (1.0 + sb1), r = l * sb1;
  for (int k = 1; k <= kmax; ++k) {
    if (k > 1) {
      l *= c.a;
      r *= c.a;
    }
    c.lambda.push_back(l);
    c.rho.push_back(r);
    c.d.push_back(l - r);
  }
  return c;
}

int h_bar(const CascadeParams& c, double r) {
  if (!(r > 0.0)) throw DomainError("h_bar requires r > 0");
  if (r > c.d.front()) {
    std::ostringstream msg;
    msg << "h_bar: r = " << r << " exceeds d_1 = " << c.d.front();
    throw DomainError(msg.str());
  }
  for (int k = 1;; ++k) {
    if (c.d_at(k) <= r) return k;
  }
}

Tower Tower::of(double x) { return Tower{0, x}; }

Tower Tower::normalized() const {
  Tower t = *this;
  while (t.level > 0 && t.value < kLogMax) {
    t.value = std::exp(t.value);
    --t.level;
  }
  return t;
}

double Tower::to_double() const {
  const Tower t = normalized();
  return t.level == 0 ? t.value : std::numeric_limits<double>::infinity();
}

double Tower::log10() const {
  const Tower t = normalized();
  if (t.level == 0) return std::log10(t.value);
  if (t.level == 1) return t.value / std::numbers::ln10;
  return std::numeric_limits<double>::infinity();
}

nlohmann::json Tower::to_json() const {
  const Tower t = normalized();
  return {{"exp_levels", t.level}, {"value", t.value}};
}

bool operator<(const Tower& a, const Tower& b) {
  const Tower x = a.normalized(), y = b.normalized();
  if (x.level != y.level) return x.level < y.level;
  return x.value < y.value;
}

std::string to_string(BudgetBranch b) {
  return b == BudgetBranch::Trivial ? "trivial" : "recursion";
}

namespace {

// exp(C u + log 2 - 2C) for u given as a tower.
Tower inverse_step(const Tower& u_in, double C) {
  const Tower u = u_in.normalized();
  const double c = std::log(2.0) - 2.0 * C;
  if (u.level == 0) return Tower{1, C * u.value + c}.normalized();
  if (u.level == 1) {
    const double x = u.value + std::log(C);
    if (x < kLogMax) return Tower{1, std::exp(x) + c}.normalized();
    return Tower{2, x};
  }
  return Tower{u.level + 1, u.value};
}

// 1 / omega^{(-j)}_{1/C}(1/C), with the inverse extended by e^{-2} beyond its range.
Tower inverse_lipschitz(double C, int j) {
  const double s = 1.0 / C;
  if (s >= kEm2) return Tower::of(kE2);
  // u = log(1/t); first inverse: t = exp(-2 (e^{-2} C)^C).
  Tower u = Tower{1, std::log(2.0) + C * (std::log(C) - 2.0)}.normalized();
  for (int i = 1; i < j; ++i) u = inverse_step(u, C);
  return Tower{u.level + 1, u.value}.normalized();
}

double ratio0(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

BudgetReport delta_recursion(const BudgetInputs& in) {
  if (!(in.eps >= 0.0) || !(in.E >= 0.0)) throw DomainError("budget requires eps, E >= 0");
  if (!(in.C >= 1.0)) throw DomainError("budget requires C >= 1");
  if (in.K < 1) throw DomainError("budget requires K >= 1");
  const int closing = in.closing_iterates.value_or(in.K * in.K);
  if (closing < 1) throw DomainError("budget requires a positive iterate count");
  const double b = 1.0 / in.C;
  BudgetReport r;
  r.inputs = in;
  r.delta.push_back(0.0);
  for (int k = 1; k <= in.K; ++k) {
    const double dp = r.delta.back();
    const double total = in.eps + dp + in.E;
    double w = ratio0(in.eps + dp, total);
    for (int i = 0; i < 2 * (k + 1); ++i) w = omega0(b, w);
    r.delta.push_back(dp + in.C * total * std::pow(w, 1.0 / in.C));
  }
  {
    double w = ratio0(in.eps, in.eps + in.E);
    for (int i = 0; i < closing; ++i) w = omega0(b, w);
    r.closing_bound = in.C * (in.eps + in.E) * std::pow(w, 1.0 / in.C);
  }
  r.lipschitz_tower = inverse_lipschitz(in.C, closing);
  const double Lrec = r.lipschitz_tower.to_double();
  r.branch = in.E <= in.eps * kE2 ? BudgetBranch::Trivial : BudgetBranch::Recursion;
  r.lipschitz_constant = r.branch == BudgetBranch::Trivial ? kE2 : Lrec;
  r.final_bound = in.eps == 0.0 ? 0.0 : in.eps * std::max(kE2, Lrec);
  return r;
}

nlohmann::json BudgetReport::to_json() const {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return x > 0 ? "inf" : "nan";
  };
  const BudgetInputs& in = inputs;
  nlohmann::json jin = {{"eps", in.eps},
                        {"E", in.E},
                        {"C", in.C},
                        {"K", in.K},
                        {"N", in.N},
                        {"closing_iterates", in.closing_iterates.value_or(in.K * in.K)}};
  nlohmann::json seq = nlohmann::json::array();
  for (double d : delta) seq.push_back(num(d));
  return {{"inputs", jin},
          {"delta_sequence", seq},
          {"closing_bound", num(closing_bound)},
          {"final_bound", num(final_bound)},
          {"branch", to_string(branch)},
          {"lipschitz_constant", num(lipschitz_constant)},
          {"lipschitz_tower", lipschitz_tower.to_json()}};
}

}  // namespace eitlab
