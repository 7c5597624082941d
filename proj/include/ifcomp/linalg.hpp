#pragma once

#include <cstddef>

#include "ifcomp/common.hpp"

namespace ifcomp::linalg {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, Vector d);

  double& operator()(std::size_t i, std::size_t j) {
    return data[i * cols + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }

  static Matrix identity(std::size_t n);
  Matrix transposed() const;
  bool square() const { return rows == cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// a * x
Vector matvec(const Matrix& a, const Vector& x);
/// aᵀ * x
Vector tmatvec(const Matrix& a, const Vector& x);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);
double frobenius_norm(const Matrix& a);
bool all_finite(const Matrix& a);
bool all_finite(const Vector& a);

/// Result of a symmetric eigendecomposition. Eigenvalues are sorted
/// descending (ties broken by original index) and the columns of
/// `eigenvectors` are the matching orthonormal eigenvectors.
struct SymEig {
  Matrix eigenvectors;
  Vector eigenvalues;
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
/// The input is symmetrized by averaging with its transpose first.
/// Throws DimensionError for non-square input and NumericalError if the
/// off-diagonal residual has not converged after 100 sweeps.
SymEig sym_eig(const Matrix& a);

}  // namespace ifcomp::linalg
