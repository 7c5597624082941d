#pragma once

#include "ifcomp/data.hpp"
#include "ifcomp/model.hpp"

namespace ifcomp::curvature {

using linalg::Matrix;

/// Dense Fisher information of the temperature-scaled loss over the canonical
/// flattened parameters. Oracle path only; guarded to small models.
struct ExactFisher {
  Matrix matrix;      // P x P, symmetric PSD
  linalg::SymEig eig; // cached for the damped inverse quadratic form
  double beta = 1.0;
  double damping = 1e-8;
  std::size_t n = 0;
};

/// (1/n) sum_i E_{y ~ p_beta(.|x_i)} [g g^T] with g the flattened energy
/// gradient; the label expectation is exact over all classes.
ExactFisher exact_fisher(const model::MlpParams& params,
                         const data::Dataset& dataset, double beta,
                         double damping = 1e-8);

/// How the per-example label expectation in the fitting passes is computed.
enum class LabelExpectation { Exact, Sampled };

/// Per-layer Kronecker factors: activation covariance over bias-appended
/// inputs and output-gradient covariance over pre-activation gradients.
struct KfacFactors {
  std::vector<Matrix> act_cov;   // (d_in+1) x (d_in+1)
  std::vector<Matrix> grad_cov;  // d_out x d_out
  double beta = 1.0;
  std::size_t n = 0;
};

KfacFactors fit_kfac_factors(const model::MlpParams& params,
                             const data::Dataset& dataset, double beta,
                             LabelExpectation expectation = LabelExpectation::Exact,
                             std::uint64_t seed = 0);

struct EkfacLayer {
  Matrix act_basis;       // eigenvectors of the activation covariance
  Matrix grad_basis;      // eigenvectors of the gradient covariance
  Matrix second_moments;  // d_out x (d_in+1), >= 0, one per eigenpair
};

struct EkfacState {
  std::vector<EkfacLayer> layers;
  double damping = 0.0;
  double beta = 1.0;
  std::size_t n = 0;
};

/// Two-pass fit: Kronecker factors and their eigenbases, then corrected
/// second moments of gradient projections in the eigenbasis. Negative
/// roundoff moments are clamped to zero.
EkfacState fit_ekfac(const model::MlpParams& params, const data::Dataset& dataset,
                     double beta, double damping,
                     LabelExpectation expectation = LabelExpectation::Exact,
                     std::uint64_t seed = 0);

/// Damped inverse quadratic form grad^T (F + delta I)^-1 grad, computed per
/// layer in the Kronecker eigenbasis without materializing the full Fisher.
double quadratic_form(const EkfacState& state, const Vector& grad);

/// Same quadratic form through the dense eigendecomposition.
double quadratic_form(const ExactFisher& fisher, const Vector& grad);

/// Versioned binary serialization; round-trips exactly.
void save_ekfac(const EkfacState& state, const std::string& path);
EkfacState load_ekfac(const std::string& path);

}  // namespace ifcomp::curvature
