// Independent reference implementations used only by the tests. These stay
// deliberately naive so they cannot share mistakes with the library paths
// they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ifcomp/model.hpp"

namespace oracles {

using ifcomp::Vector;
using ifcomp::linalg::Matrix;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

/// Straightforward re-implementation of the ReLU MLP forward pass.
inline Vector naive_forward(const ifcomp::model::MlpParams& params,
                            const Vector& x) {
  Vector a = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Vector z(layer.weight.rows, 0.0);
    for (std::size_t i = 0; i < layer.weight.rows; ++i) {
      double acc = layer.bias[i];
      for (std::size_t j = 0; j < layer.weight.cols; ++j)
        acc += layer.weight(i, j) * a[j];
      z[i] = acc;
    }
    if (l + 1 < params.layers.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = z;
  }
  return a;
}

/// Unstabilized softmax of beta-scaled logits.
inline Vector direct_softmax(const Vector& logits, double beta) {
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(beta * logits[i]);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline double direct_kl(const Vector& p, const Vector& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

/// Central finite differences of the energy over every parameter.
inline Vector finite_diff_grad(const ifcomp::model::MlpParams& params,
                               const Vector& x, int label, double beta,
                               double h = 1e-5) {
  ifcomp::model::MlpParams work = params;
  Vector flat = params.flatten();
  Vector grad(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + h;
    work.assign_flat(flat);
    const double plus = ifcomp::model::energy(work, x, label, beta);
    flat[i] = saved - h;
    work.assign_flat(flat);
    const double minus = ifcomp::model::energy(work, x, label, beta);
    flat[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  work.assign_flat(flat);
  return grad;
}

/// Solves (A + delta I) x = b by Gauss-Jordan elimination with partial
/// pivoting and returns b^T x.
inline double damped_solve_quadratic_form(const Matrix& a, double delta,
                                          const Vector& b) {
  const std::size_t n = a.rows;
  Matrix m = a;
  for (std::size_t i = 0; i < n; ++i) m(i, i) += delta;
  Vector x = b;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(col, c), m(pivot, c));
      std::swap(x[col], x[pivot]);
    }
    const double diag = m(col, col);
    for (std::size_t c = 0; c < n; ++c) m(col, c) /= diag;
    x[col] /= diag;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) m(r, c) -= f * m(col, c);
      x[r] -= f * x[col];
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += b[i] * x[i];
  return acc;
}

/// O(n^2) pair-counting AUROC with half credit for ties.
inline double pair_count_auroc(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Two-pass equal-count-bin calibration error.
inline double two_pass_ece(std::vector<double> conf, std::vector<int> correct,
                           int bins) {
  const std::size_t n = conf.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
  const std::size_t used = std::min<std::size_t>(static_cast<std::size_t>(bins), n);
  const std::size_t base = n / used;
  const std::size_t rem = n % used;
  double total = 0.0;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < used; ++b) {
    const std::size_t count = base + (b < rem ? 1 : 0);
    double c_sum = 0.0, a_sum = 0.0;
    for (std::size_t k = 0; k < count; ++k, ++pos) {
      c_sum += conf[order[pos]];
      a_sum += correct[order[pos]] != 0 ? 1.0 : 0.0;
    }
    total += std::abs(c_sum / count - a_sum / count) * static_cast<double>(count);
  }
  return total / static_cast<double>(n);
}

inline double direct_pearson(const std::vector<double>& a,
                             const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < v.size()) {
      std::size_t j = i;
      while (j + 1 < v.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  return direct_pearson(ranks(a), ranks(b));
}

/// Entry (i, j) of the canonical flat layout for a single dense layer with
/// bias column appended: column d_in is the bias.
inline std::size_t flat_index_single_layer(std::size_t i, std::size_t j,
                                           std::size_t d_in, std::size_t d_out) {
  return j == d_in ? d_out * d_in + i : i * d_in + j;
}

inline Matrix random_symmetric(std::size_t n, ifcomp::Rng& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

inline Matrix random_psd(std::size_t n, ifcomp::Rng& rng) {
  Matrix m(n, n);
  for (double& v : m.data) v = rng.normal();
  return naive_matmul(m.transposed(), m);
}

}  // namespace oracles
