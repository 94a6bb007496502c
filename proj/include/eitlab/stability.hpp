#pragma once

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace eitlab {

class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// omega_b(t) = 2^b e^{-2} |log t|^{-b} on (0, e^{-2}), e^{-2} beyond.
struct OmegaWeight {
  double b;

  explicit OmegaWeight(double b_);
};

double omega_eval(const OmegaWeight& w, double t);
double omega_iterate(const OmegaWeight& w, int j, double t);
/// Closed-form inverse on (0, e^{-2}).
double omega_inverse(const OmegaWeight& w, double s);
/// j applications of omega_inverse.
double omega_inverse_iterate(const OmegaWeight& w, int j, double s);

struct CascadeParams {
  double L;
  double r0;
  double cascade_angle;  // arctan(1/L)
  double beta1;          // arctan(sin(cascade_angle) / 4)
  double a;              // (1 - sin beta1) / (1 + sin beta1)
  std::vector<double> lambda;  // lambda[k-1] = lambda_k
  std::vector<double> rho;
  std::vector<double> d;

  double d_at(int k) const;
};

CascadeParams cascade(double L, double r0, int kmax);

/// min { k : d_k <= r }.
int h_bar(const CascadeParams& c, double r);

/// exp applied `level` times to `value`; used for quantities beyond double range.
struct Tower {
  int level = 0;
  double value = 0.0;

  static Tower of(double x);
  Tower normalized() const;
  bool finite() const { return normalized().level == 0; }
  double to_double() const;  // +inf when it does not fit
  /// log10 of the represented number when level <= 1, otherwise +inf.
  double log10() const;
  nlohmann::json to_json() const;
  friend bool operator<(const Tower& a, const Tower& b);
};

struct BudgetInputs {
  double eps = 0.0;
  double E = 0.0;
  double C = 1.0;
  int K = 1;
  int N = 2;
  /// Iterate count of omega in the closing bound and the final inverse; K^2 by default.
  std::optional<int> closing_iterates;
};

enum class BudgetBranch { Trivial, Recursion };
std::string to_string(BudgetBranch b);

struct BudgetReport {
  BudgetInputs inputs;
  std::vector<double> delta;   // delta_0 .. delta_K
  double closing_bound = 0.0;  // C (eps + E) (omega^{(K^2)}(eps / (eps + E)))^{1/C}
  BudgetBranch branch = BudgetBranch::Trivial;
  double lipschitz_constant = 0.0;  // e^2 on the trivial branch
  Tower lipschitz_tower;            // 1 / omega^{(-K^2)}(1/C)
  double final_bound = 0.0;         // eps * max(e^2, 1 / omega^{(-K^2)}(1/C))

  nlohmann::json to_json() const;
};

/// Evaluates the delta_k recursion, the closing bound and the final Lipschitz
/// estimate. Inside the recursion the inverse is extended by e^{-2} on
/// [e^{-2}, inf) so that every C >= 1 is admissible.
BudgetReport delta_recursion(const BudgetInputs& in);

}  // namespace eitlab
