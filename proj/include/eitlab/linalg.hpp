#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eitlab {

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
class CsrMatrix {
public:
  struct Triplet {
    int row;
    int col;
    double value;
  };

  CsrMatrix() = default;

  /// Builds from unsorted triplets; duplicates are summed.
  static CsrMatrix from_triplets(int rows, int cols, std::vector<Triplet> triplets);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_index() const { return col_; }
  const std::vector<double>& values() const { return values_; }

  /// Entry lookup by binary search; zero when absent.
  double at(int i, int j) const;

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> diagonal() const;

  /// Submatrix with the given rows and columns (index lists, order preserved).
  CsrMatrix extract(std::span<const int> row_set, std::span<const int> col_set) const;

  CsrMatrix scaled(double c) const;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> values_;
};

struct CgResult {
  int iterations = 0;
  double final_residual = 0.0;  // relative: |b - Ax| / |b|
  std::vector<double> history;
};

class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

private:
  std::vector<double> history_;
};

/// Jacobi-preconditioned conjugate gradients. x holds the initial guess on entry.
/// Throws SolverError carrying the relative residual history when the iteration
/// cap is reached or the recurrence breaks down.
CgResult pcg(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
             double rel_tol = 1e-10, int max_iter = 20000);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace eitlab
