#include "eitlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace eitlab {

CsrMatrix CsrMatrix::from_triplets(int rows, int cols, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_.assign(rows + 1, 0);
  m.col_.reserve(triplets.size() / 2);
  m.values_.reserve(triplets.size() / 2);
  int last_row = -1, last_col = -1;
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
      throw std::out_of_range("triplet index out of range");
    }
    if (t.row == last_row && t.col == last_col) {
      m.values_.back() += t.value;
      continue;
    }
    m.col_.push_back(t.col);
    m.values_.push_back(t.value);
    m.row_ptr_[t.row + 1]++;
    last_row = t.row;
    last_col = t.col;
  }
  std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
  return m;
}

double CsrMatrix::at(int i, int j) const {
  const auto first = col_.begin() + row_ptr_[i];
  const auto last = col_.begin() + row_ptr_[i + 1];
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_.begin())];
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_[k]];
    y[i] = s;
  }
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(std::min(rows_, cols_)), 0.0);
  for (int i = 0; i < static_cast<int>(d.size()); ++i) d[i] = at(i, i);
  return d;
}

CsrMatrix CsrMatrix::extract(std::span<const int> row_set, std::span<const int> col_set) const {
  std::vector<int> col_map(static_cast<std::size_t>(cols_), -1);
  for (std::size_t j = 0; j < col_set.size(); ++j) col_map[col_set[j]] = static_cast<int>(j);
  CsrMatrix m;
  m.rows_ = static_cast<int>(row_set.size());
  m.cols_ = static_cast<int>(col_set.size());
  m.row_ptr_.assign(row_set.size() + 1, 0);
  std::vector<std::pair<int, double>> row;
  for (std::size_t i = 0; i < row_set.size(); ++i) {
    row.clear();
    const int r = row_set[i];
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const int c = col_map[col_[k]];
      if (c >= 0) row.emplace_back(c, values_[k]);
    }
    std::sort(row.begin(), row.end());
    for (const auto& [c, v] : row) {
      m.col_.push_back(c);
      m.values_.push_back(v);
    }
    m.row_ptr_[i + 1] = static_cast<int>(m.col_.size());
  }
  return m;
}

CsrMatrix CsrMatrix::scaled(double c) const {
  CsrMatrix m = *this;
  for (double& v : m.values_) v *= c;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

CgResult pcg(const CsrMatrix& a, std::span<const double> b, std::span<double> x, double rel_tol,
             int max_iter) {
  const std::size_t n = b.size();
  CgResult result;
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    result.history.push_back(0.0);
    return result;
  }
  std::vector<double> inv_diag = a.diagonal();
  for (double& d : inv_diag) {
    if (!(d > 0.0)) throw SolverError("pcg: non-positive diagonal entry", {});
    d = 1.0 / d;
  }
  std::vector<double> r(n), z(n), p(n), q(n);
  a.multiply(x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  double rel = norm2(r) / bnorm;
  result.history.push_back(rel);
  while (rel > rel_tol) {
    if (result.iterations >= max_iter) {
      std::ostringstream msg;
      msg << "pcg: no convergence after " << max_iter << " iterations, relative residual " << rel;
      throw SolverError(msg.str(), std::move(result.history));
    }
    a.multiply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) {
      throw SolverError("pcg: breakdown (matrix not positive definite on the Krylov space)",
                        std::move(result.history));
    }
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    ++result.iterations;
    rel = norm2(r) / bnorm;
    result.history.push_back(rel);
  }
  // Recompute the true residual; the recurrence can drift from it.
  a.multiply(x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  result.final_residual = norm2(r) / bnorm;
  return result;
}

}  // namespace eitlab
