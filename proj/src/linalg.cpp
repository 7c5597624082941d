#include "ifcomp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace ifcomp::linalg {

Matrix::Matrix(std::size_t r, std::size_t c, Vector d)
    : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols) +
                         " and " + std::to_string(b.rows) + " do not agree");
  }
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* crow = &c.data[i * c.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols != x.size()) {
    throw DimensionError("matvec: dimension mismatch");
  }
  Vector y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* row = &a.data[i * a.cols];
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Vector tmatvec(const Matrix& a, const Vector& x) {
  if (a.rows != x.size()) {
    throw DimensionError("tmatvec: dimension mismatch");
  }
  Vector y(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = &a.data[i * a.cols];
    for (std::size_t j = 0; j < a.cols; ++j) y[j] += xi * row[j];
  }
  return y;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (const double v : a.data) acc += v * v;
  return std::sqrt(acc);
}

bool all_finite(const Matrix& a) { return all_finite(a.data); }

bool all_finite(const Vector& a) {
  for (const double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

double off_diagonal_norm(const Matrix& m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      if (i != j) acc += m(i, j) * m(i, j);
  return std::sqrt(acc);
}

}  // namespace

SymEig sym_eig(const Matrix& a) {
  if (!a.square()) {
    throw DimensionError("sym_eig: input is " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + ", expected square");
  }
  const std::size_t n = a.rows;

  // Symmetrize by averaging with the transpose.
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      b(i, j) = 0.5 * (a(i, j) + a(j, i));

  Matrix v = Matrix::identity(n);
  const double scale = frobenius_norm(b);
  const double tol = 1e-12 * scale;

  constexpr int kMaxSweeps = 100;
  double off = off_diagonal_norm(b);
  int sweep = 0;
  while (off > tol && sweep < kMaxSweeps) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double bpq = b(p, q);
        if (bpq == 0.0) continue;
        const double tau = (b(q, q) - b(p, p)) / (2.0 * bpq);
        const double t =
            (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        // B <- JᵀBJ with J the (p,q) rotation; columns first, then rows.
        for (std::size_t k = 0; k < n; ++k) {
          const double bkp = b(k, p);
          const double bkq = b(k, q);
          b(k, p) = c * bkp - s * bkq;
          b(k, q) = s * bkp + c * bkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double bpk = b(p, k);
          const double bqk = b(q, k);
          b(p, k) = c * bpk - s * bqk;
          b(q, k) = s * bpk + c * bqk;
        }
        b(p, q) = 0.0;
        b(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    off = off_diagonal_norm(b);
    ++sweep;
  }
  if (off > tol) {
    throw NumericalError("sym_eig: no convergence after " +
                         std::to_string(kMaxSweeps) +
                         " sweeps, off-diagonal residual " + std::to_string(off));
  }

  Vector eigenvalues(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = b(i, i);

  // Descending order, ties keep the original index order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return eigenvalues[x] > eigenvalues[y];
  });

  SymEig out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = eigenvalues[order[j]];
    for (std::size_t i = 0; i < n; ++i)
      out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

}  // namespace ifcomp::linalg
