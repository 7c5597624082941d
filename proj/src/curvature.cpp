#include "ifcomp/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ifcomp::curvature {

namespace {

constexpr std::size_t kExactFisherMaxParams = 5000;

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ConfigError("curvature: beta must be finite and > 0");
  }
}

Vector bias_appended(const Vector& a) {
  Vector out(a.size() + 1);
  std::copy(a.begin(), a.end(), out.begin());
  out.back() = 1.0;
  return out;
}

/// Visits each (example, label) pair with its probability weight. For the
/// sampled mode a single label is drawn per example from the model's own
/// beta-scaled distribution and visited with weight 1.
template <typename Visit>
void for_each_label_term(const model::MlpParams& params,
                         const data::Dataset& dataset, double beta,
                         LabelExpectation expectation, std::uint64_t seed,
                         Visit&& visit) {
  const int classes = dataset.num_classes;
  Rng rng(seed);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Vector x = dataset.example(i);
    const auto trace = model::forward(params, x);
    const Vector probs = model::softmax_temp(trace.logits(), beta);
    if (expectation == LabelExpectation::Exact) {
      for (int y = 0; y < classes; ++y) {
        visit(i, trace, y, probs[static_cast<std::size_t>(y)]);
      }
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      int y = classes - 1;
      for (int c = 0; c < classes; ++c) {
        acc += probs[static_cast<std::size_t>(c)];
        if (u < acc) {
          y = c;
          break;
        }
      }
      visit(i, trace, y, 1.0);
    }
  }
}

}  // namespace

ExactFisher exact_fisher(const model::MlpParams& params,
                         const data::Dataset& dataset, double beta,
                         double damping) {
  check_beta(beta);
  if (dataset.size() == 0) throw ConfigError("exact_fisher: empty dataset");
  const std::size_t p = params.param_count();
  if (p > kExactFisherMaxParams) {
    throw ConfigError("exact_fisher: model has " + std::to_string(p) +
                      " parameters, oracle guard is " +
                      std::to_string(kExactFisherMaxParams));
  }

  Matrix fisher(p, p);
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  for_each_label_term(
      params, dataset, beta, LabelExpectation::Exact, 0,
      [&](std::size_t, const model::ForwardTrace& trace, int y, double weight) {
        const Vector g = model::grad_from_logit_grad(
            params, trace, model::energy_logit_grad(trace.logits(), y, beta));
        const double w = weight * inv_n;
        for (std::size_t r = 0; r < p; ++r) {
          const double wr = w * g[r];
          if (wr == 0.0) continue;
          double* row = &fisher.data[r * p];
          for (std::size_t c = 0; c < p; ++c) row[c] += wr * g[c];
        }
      });

  ExactFisher out;
  out.eig = linalg::sym_eig(fisher);
  out.matrix = std::move(fisher);
  out.beta = beta;
  out.damping = damping;
  out.n = dataset.size();
  return out;
}

KfacFactors fit_kfac_factors(const model::MlpParams& params,
                             const data::Dataset& dataset, double beta,
                             LabelExpectation expectation, std::uint64_t seed) {
  check_beta(beta);
  if (dataset.size() == 0) throw ConfigError("fit_kfac_factors: empty dataset");

  const std::size_t layer_count = params.layers.size();
  KfacFactors factors;
  factors.beta = beta;
  factors.n = dataset.size();
  for (const auto& layer : params.layers) {
    factors.act_cov.emplace_back(layer.weight.cols + 1, layer.weight.cols + 1);
    factors.grad_cov.emplace_back(layer.weight.rows, layer.weight.rows);
  }

  const double inv_n = 1.0 / static_cast<double>(dataset.size());

  // Activation covariances need one term per example, not per label; track
  // the last example index seen.
  std::size_t last_act_example = static_cast<std::size_t>(-1);

  for_each_label_term(
      params, dataset, beta, expectation, derive_seed(seed, "kfac"),
      [&](std::size_t i, const model::ForwardTrace& trace, int y, double weight) {
        if (i != last_act_example) {
          last_act_example = i;
          for (std::size_t l = 0; l < layer_count; ++l) {
            const Vector a = bias_appended(trace.layer_inputs[l]);
            Matrix& cov = factors.act_cov[l];
            for (std::size_t r = 0; r < a.size(); ++r) {
              const double ar = inv_n * a[r];
              for (std::size_t c = 0; c < a.size(); ++c)
                cov(r, c) += ar * a[c];
            }
          }
        }
        const auto deltas = model::backprop_deltas(
            params, trace, model::energy_logit_grad(trace.logits(), y, beta));
        for (std::size_t l = 0; l < layer_count; ++l) {
          const Vector& d = deltas[l];
          Matrix& cov = factors.grad_cov[l];
          const double w = weight * inv_n;
          for (std::size_t r = 0; r < d.size(); ++r) {
            const double dr = w * d[r];
            if (dr == 0.0) continue;
            for (std::size_t c = 0; c < d.size(); ++c) cov(r, c) += dr * d[c];
          }
        }
      });

  return factors;
}

EkfacState fit_ekfac(const model::MlpParams& params, const data::Dataset& dataset,
                     double beta, double damping, LabelExpectation expectation,
                     std::uint64_t seed) {
  if (!(damping > 0.0)) throw ConfigError("fit_ekfac: damping must be > 0");
  const KfacFactors factors =
      fit_kfac_factors(params, dataset, beta, expectation, seed);

  EkfacState state;
  state.beta = beta;
  state.damping = damping;
  state.n = dataset.size();

  const std::size_t layer_count = params.layers.size();
  for (std::size_t l = 0; l < layer_count; ++l) {
    EkfacLayer layer;
    layer.act_basis = linalg::sym_eig(factors.act_cov[l]).eigenvectors;
    layer.grad_basis = linalg::sym_eig(factors.grad_cov[l]).eigenvectors;
    layer.second_moments =
        Matrix(layer.grad_basis.cols, layer.act_basis.cols);
    state.layers.push_back(std::move(layer));
  }

  // Second pass: mean squared gradient projections onto each eigenpair.
  // Per-layer gradients are rank one (delta a^T), so the projection is the
  // outer product of the two projected vectors.
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  std::size_t last_example = static_cast<std::size_t>(-1);
  std::vector<Vector> act_proj_sq(layer_count);

  for_each_label_term(
      params, dataset, beta, expectation, derive_seed(seed, "ekfac-moments"),
      [&](std::size_t i, const model::ForwardTrace& trace, int y, double weight) {
        if (i != last_example) {
          last_example = i;
          for (std::size_t l = 0; l < layer_count; ++l) {
            const Vector a = bias_appended(trace.layer_inputs[l]);
            Vector v = linalg::tmatvec(state.layers[l].act_basis, a);
            for (double& e : v) e = e * e;
            act_proj_sq[l] = std::move(v);
          }
        }
        const auto deltas = model::backprop_deltas(
            params, trace, model::energy_logit_grad(trace.logits(), y, beta));
        for (std::size_t l = 0; l < layer_count; ++l) {
          Vector u = linalg::tmatvec(state.layers[l].grad_basis, deltas[l]);
          const Vector& v = act_proj_sq[l];
          Matrix& moments = state.layers[l].second_moments;
          const double w = weight * inv_n;
          for (std::size_t r = 0; r < u.size(); ++r) {
            const double ur = w * u[r] * u[r];
            if (ur == 0.0) continue;
            double* row = &moments.data[r * moments.cols];
            for (std::size_t c = 0; c < v.size(); ++c) row[c] += ur * v[c];
          }
        }
      });

  for (auto& layer : state.layers) {
    for (double& m : layer.second_moments.data) m = std::max(m, 0.0);
  }
  return state;
}

double quadratic_form(const EkfacState& state, const Vector& grad) {
  // Layer shapes are implied by the eigenbases.
  std::size_t expected = 0;
  for (const auto& layer : state.layers) {
    const std::size_t d_out = layer.grad_basis.rows;
    const std::size_t d_in = layer.act_basis.rows - 1;
    expected += d_out * (d_in + 1);
  }
  if (grad.size() != expected) {
    throw DimensionError("quadratic_form: gradient length " +
                         std::to_string(grad.size()) + ", expected " +
                         std::to_string(expected));
  }

  double total = 0.0;
  std::size_t off = 0;
  for (const auto& layer : state.layers) {
    const std::size_t d_out = layer.grad_basis.rows;
    const std::size_t d_in = layer.act_basis.rows - 1;

    // Gradient slice as the layer matrix [dW | db].
    Matrix g(d_out, d_in + 1);
    for (std::size_t r = 0; r < d_out; ++r) {
      std::memcpy(&g.data[r * (d_in + 1)], &grad[off + r * d_in],
                  d_in * sizeof(double));
      g(r, d_in) = grad[off + d_out * d_in + r];
    }
    off += d_out * (d_in + 1);

    const Matrix projected = linalg::matmul(
        linalg::matmul(layer.grad_basis.transposed(), g), layer.act_basis);
    for (std::size_t idx = 0; idx < projected.data.size(); ++idx) {
      const double p = projected.data[idx];
      total += p * p / (layer.second_moments.data[idx] + state.damping);
    }
  }
  return total;
}

double quadratic_form(const ExactFisher& fisher, const Vector& grad) {
  if (grad.size() != fisher.matrix.rows) {
    throw DimensionError("quadratic_form: gradient length mismatch");
  }
  const Vector proj = linalg::tmatvec(fisher.eig.eigenvectors, grad);
  double total = 0.0;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    const double lambda = std::max(fisher.eig.eigenvalues[i], 0.0);
    total += proj[i] * proj[i] / (lambda + fisher.damping);
  }
  return total;
}

namespace {

constexpr char kEkfacMagic[4] = {'E', 'K', 'F', 'C'};
constexpr std::uint32_t kEkfacVersion = 1;

void write_matrix(std::ofstream& out, const Matrix& m) {
  const auto rows = static_cast<std::uint32_t>(m.rows);
  const auto cols = static_cast<std::uint32_t>(m.cols);
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& in, const std::string& path) {
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in.good()) throw FormatError("ekfac: truncated matrix header in " + path);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!in.good()) throw FormatError("ekfac: truncated matrix data in " + path);
  return m;
}

}  // namespace

void save_ekfac(const EkfacState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open ekfac file for writing: " + path);
  out.write(kEkfacMagic, 4);
  out.write(reinterpret_cast<const char*>(&kEkfacVersion), sizeof(kEkfacVersion));
  out.write(reinterpret_cast<const char*>(&state.beta), sizeof(double));
  out.write(reinterpret_cast<const char*>(&state.damping), sizeof(double));
  const auto n = static_cast<std::uint64_t>(state.n);
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  const auto layers = static_cast<std::uint32_t>(state.layers.size());
  out.write(reinterpret_cast<const char*>(&layers), sizeof(layers));
  for (const auto& layer : state.layers) {
    write_matrix(out, layer.act_basis);
    write_matrix(out, layer.grad_basis);
    write_matrix(out, layer.second_moments);
  }
  if (!out.good()) throw FormatError("ekfac write failed: " + path);
}

EkfacState load_ekfac(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open ekfac file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in.good() || std::memcmp(magic, kEkfacMagic, 4) != 0) {
    throw FormatError("ekfac: bad magic in " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in.good() || version != kEkfacVersion) {
    throw FormatError("ekfac: unsupported version in " + path);
  }
  EkfacState state;
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&state.beta), sizeof(double));
  in.read(reinterpret_cast<char*>(&state.damping), sizeof(double));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::uint32_t layers = 0;
  in.read(reinterpret_cast<char*>(&layers), sizeof(layers));
  if (!in.good()) throw FormatError("ekfac: truncated header in " + path);
  state.n = n;
  for (std::uint32_t l = 0; l < layers; ++l) {
    EkfacLayer layer;
    layer.act_basis = read_matrix(in, path);
    layer.grad_basis = read_matrix(in, path);
    layer.second_moments = read_matrix(in, path);
    state.layers.push_back(std::move(layer));
  }
  return state;
}

}  // namespace ifcomp::curvature
