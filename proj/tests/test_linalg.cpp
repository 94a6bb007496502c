#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eitlab/linalg.hpp"

#include <cmath>
#include <vector>

using namespace eitlab;

namespace {

// Tridiagonal 1-D Dirichlet Laplacian of size n.
CsrMatrix laplace_1d(int n) {
  std::vector<CsrMatrix::Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  return CsrMatrix::from_triplets(n, n, t);
}

}  // namespace

TEST_CASE("triplets are sorted and duplicates summed") {
  const auto a = CsrMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 2, 3.0}, {1, 0, -1.0}});
  CHECK(a.nonzeros() == 3);
  CHECK(a.at(1, 2) == 4.0);
  CHECK(a.at(0, 1) == 2.0);
  CHECK(a.at(0, 0) == 0.0);
  CHECK(a.col_index() == std::vector<int>{1, 0, 2});
  CHECK(a.row_ptr() == std::vector<int>{0, 1, 3});
}

TEST_CASE("matrix-vector product matches the dense product") {
  const auto a = CsrMatrix::from_triplets(3, 3, {{0, 0, 1}, {0, 2, 2}, {1, 1, 3}, {2, 0, 4}, {2, 2, 5}});
  const std::vector<double> x = {1, 2, 3};
  std::vector<double> y(3);
  a.multiply(x, y);
  CHECK(y == std::vector<double>{7, 6, 19});
  CHECK(a.diagonal() == std::vector<double>{1, 3, 5});
  const auto s = a.scaled(2.0);
  CHECK(s.at(2, 2) == 10.0);
}

TEST_CASE("extract keeps the requested rows and columns in order") {
  const auto a = laplace_1d(5);
  const std::vector<int> rows = {3, 1}, cols = {1, 2, 3};
  const auto b = a.extract(rows, cols);
  CHECK(b.rows() == 2);
  CHECK(b.cols() == 3);
  CHECK(b.at(0, 1) == -1.0);
  CHECK(b.at(0, 2) == 2.0);
  CHECK(b.at(1, 0) == 2.0);
  CHECK(b.at(1, 1) == -1.0);
}

TEST_CASE("pcg solves an SPD system to the requested tolerance") {
  const int n = 200;
  const auto a = laplace_1d(n);
  std::vector<double> xs(n), b(n), x(n, 0.0);
  for (int i = 0; i < n; ++i) xs[i] = std::sin(0.1 * i) + 0.01 * i;
  a.multiply(xs, b);
  const auto r = pcg(a, b, x, 1e-10);
  std::vector<double> ax(n);
  a.multiply(x, ax);
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    num += (ax[i] - b[i]) * (ax[i] - b[i]);
    den += b[i] * b[i];
  }
  CHECK(std::sqrt(num / den) <= 1e-10);
  CHECK(r.final_residual <= 1e-10);
  CHECK(r.history.size() == static_cast<std::size_t>(r.iterations) + 1);
}

TEST_CASE("pcg reports the residual history when the cap is hit") {
  const auto a = laplace_1d(100);
  std::vector<double> b(100, 1.0), x(100, 0.0);
  try {
    pcg(a, b, x, 1e-14, 3);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.history().size() >= 3);
  }
}

TEST_CASE("zero right-hand side returns zero immediately") {
  const auto a = laplace_1d(10);
  std::vector<double> b(10, 0.0), x(10, 0.0);
  const auto r = pcg(a, b, x);
  CHECK(r.iterations == 0);
  CHECK(norm2(x) == 0.0);
  CHECK(dot(b, x) == 0.0);
}
