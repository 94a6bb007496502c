#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eitlab/stability.hpp"

#include <cmath>
#include <numbers>

using namespace eitlab;

namespace {
const double kEm2 = std::exp(-2.0);
const double kE2 = std::exp(2.0);
}  // namespace

TEST_CASE("omega weight values") {
  const OmegaWeight w1(1.0);
  CHECK(omega_eval(w1, 1.0) == kEm2);
  CHECK(omega_eval(w1, 50.0) == kEm2);
  CHECK(omega_eval(w1, std::exp(-4.0)) == doctest::Approx(kEm2 / 2.0).epsilon(1e-15));
  for (double b : {0.3, 1.0, 2.5}) {
    const OmegaWeight w(b);
    CHECK(omega_eval(w, kEm2 * (1 - 1e-12)) == doctest::Approx(kEm2).epsilon(1e-10));
  }
  CHECK_THROWS_AS(omega_eval(w1, 0.0), DomainError);
  CHECK_THROWS_AS(omega_eval(w1, -1.0), DomainError);
  CHECK_THROWS_AS(OmegaWeight(0.0), DomainError);
}

TEST_CASE("omega is nondecreasing and concave on samples") {
  const OmegaWeight w(0.5);
  double prev = 0.0;
  for (int i = 1; i <= 400; ++i) {
    const double t = std::exp(-40.0 + 0.1 * i);
    const double v = omega_eval(w, t);
    CHECK(v >= prev);
    prev = v;
    const double t2 = std::exp(-40.0 + 0.1 * (i + 1));
    CHECK(omega_eval(w, 0.5 * (t + t2)) >= 0.5 * (omega_eval(w, t) + omega_eval(w, t2)) - 1e-16);
  }
}

TEST_CASE("omega iterates") {
  const OmegaWeight w(1.0);
  CHECK(omega_iterate(w, 1, 1e-5) == omega_eval(w, 1e-5));
  CHECK(omega_iterate(w, 2, 0.5) == kEm2);
  CHECK(omega_iterate(w, 2, kEm2) == kEm2);
  for (double t : {1e-30, 1e-10, 1e-4}) {
    for (int j = 1; j < 6; ++j) CHECK(omega_iterate(w, j + 1, t) >= omega_iterate(w, j, t));
  }
  CHECK_THROWS_AS(omega_iterate(w, 0, 0.1), DomainError);
}

TEST_CASE("omega inverse") {
  const OmegaWeight w1(1.0);
  CHECK(omega_inverse(w1, kEm2 / 2.0) == doctest::Approx(std::exp(-4.0)).epsilon(1e-14));
  for (double b : {0.5, 1.0, 3.0}) {
    const OmegaWeight w(b);
    for (double s : {1e-3, 0.01, 0.05, 0.1, 0.13}) {
      const double t = omega_inverse(w, s);
      if (t == 0.0) continue;  // below the smallest double
      CHECK(omega_eval(w, t) == doctest::Approx(s).epsilon(1e-12));
    }
  }
  double prev = 1.0;
  for (double s = 0.13; s > 0.02; s *= 0.8) {
    const double t = omega_inverse(w1, s);
    CHECK(t < prev);
    prev = t;
  }
  CHECK(omega_inverse_iterate(w1, 2, 0.1) == omega_inverse(w1, omega_inverse(w1, 0.1)));
  CHECK_THROWS_AS(omega_inverse(w1, kEm2), DomainError);
  CHECK_THROWS_AS(omega_inverse(w1, 0.0), DomainError);
}

TEST_CASE("cascade geometry") {
  const auto c = cascade(1.0, 1.0, 12);
  CHECK(c.cascade_angle == doctest::Approx(std::numbers::pi / 4));
  CHECK(std::sin(c.cascade_angle) == doctest::Approx(std::sqrt(2.0) / 2));
  CHECK(c.beta1 == doctest::Approx(std::atan(std::sqrt(2.0) / 8)));
  const double sb = std::sin(c.beta1);
  CHECK(c.a == doctest::Approx((1 - sb) / (1 + sb)));
  for (int k = 2; k <= 12; ++k) {
    CHECK(c.d[k - 1] / c.d[k - 2] == doctest::Approx(c.a).epsilon(1e-14));
    CHECK(c.lambda[k - 1] / c.lambda[k - 2] == doctest::Approx(c.a).epsilon(1e-14));
  }
  for (int k = 1; k <= 12; ++k) CHECK(c.lambda[k - 1] - c.rho[k - 1] > 0.0);
  CHECK(c.d_at(20) == doctest::Approx(c.d[11] * std::pow(c.a, 8)).epsilon(1e-12));
  CHECK_THROWS_AS(cascade(0.0, 1.0, 3), DomainError);
}

TEST_CASE("h_bar counts the cascade steps") {
  const auto c = cascade(1.0, 1.0, 10);
  CHECK(h_bar(c, c.d[0]) == 1);
  CHECK(h_bar(c, c.d[2]) == 3);
  CHECK(h_bar(c, 0.5 * (c.d[1] + c.d[2])) == 3);
  int prev = 1;
  for (double r = c.d[0]; r > 1e-4; r *= 0.9) {
    const int k = h_bar(c, r);
    CHECK(k >= prev);
    prev = k;
  }
  CHECK(prev > 10);
  CHECK_THROWS_AS(h_bar(c, 1.01 * c.d[0]), DomainError);
}

TEST_CASE("tower numbers") {
  CHECK(Tower::of(3.0).to_double() == 3.0);
  CHECK(Tower{1, 2.0}.to_double() == doctest::Approx(std::exp(2.0)));
  CHECK(Tower{2, 1.0}.normalized().level == 0);
  CHECK(Tower{1, 1000.0}.to_double() == INFINITY);
  CHECK(Tower{1, 1000.0}.log10() == doctest::Approx(1000.0 / std::numbers::ln10));
  CHECK(Tower{4, 5.0}.log10() == INFINITY);
  CHECK(Tower{1, 800.0} < Tower{1, 900.0});
  CHECK(Tower::of(1e300) < Tower{1, 800.0});
  CHECK(Tower{3, 1.0} < Tower{2, 10.0});
  const auto j = Tower{1, 1000.0}.to_json();
  CHECK(j["exp_levels"] == 1);
  CHECK(j["value"] == 1000.0);
}

TEST_CASE("budget with zero discrepancy") {
  BudgetInputs in;
  in.eps = 0.0;
  in.E = 1.0;
  in.C = 3.0;
  in.K = 3;
  const auto r = delta_recursion(in);
  REQUIRE(r.delta.size() == 4);
  for (double d : r.delta) CHECK(d == 0.0);
  CHECK(r.final_bound == 0.0);
  CHECK(r.closing_bound == 0.0);
}

TEST_CASE("trivial branch reports e^2 exactly") {
  BudgetInputs in;
  in.eps = 1.0;
  in.E = 2.0;
  in.C = 10.0;
  in.K = 2;
  const auto r = delta_recursion(in);
  CHECK(r.branch == BudgetBranch::Trivial);
  CHECK(r.lipschitz_constant == kE2);
  CHECK(to_string(r.branch) == "trivial");
  in.E = 100.0;
  CHECK(delta_recursion(in).branch == BudgetBranch::Recursion);
  // With 1/C >= e^{-2} the extended inverse gives the constant e^2 on either branch.
  in.C = 2.0;
  CHECK(delta_recursion(in).lipschitz_constant == kE2);
}

TEST_CASE("budget is monotone in eps and K and finite where representable") {
  BudgetInputs in;
  in.E = 1.0;
  in.C = 10.0;
  in.K = 2;
  double prev = 0.0;
  for (double eps : {1e-8, 1e-6, 1e-4, 1e-2, 0.1}) {
    in.eps = eps;
    const auto r = delta_recursion(in);
    CHECK(r.final_bound >= prev);
    prev = r.final_bound;
    for (double d : r.delta) CHECK(std::isfinite(d));
    CHECK(std::isfinite(r.closing_bound));
  }
  in.eps = 1e-3;
  Tower last = Tower::of(0.0);
  for (int K = 1; K <= 6; ++K) {
    in.K = K;
    const auto r = delta_recursion(in);
    CHECK_FALSE(r.lipschitz_tower < last);
    last = r.lipschitz_tower;
  }
  const auto j = delta_recursion(in).to_json();
  CHECK(j["inputs"]["closing_iterates"] == 36);
  CHECK(j["delta_sequence"].size() == 7);
  CHECK(j["branch"] == "recursion");
  CHECK_THROWS_AS(delta_recursion(BudgetInputs{-1.0, 1.0, 2.0, 1, 2, {}}), DomainError);
  CHECK_THROWS_AS(delta_recursion(BudgetInputs{1.0, 1.0, 0.5, 1, 2, {}}), DomainError);
}
