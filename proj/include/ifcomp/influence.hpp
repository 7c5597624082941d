#pragma once

#include "ifcomp/curvature.hpp"

namespace ifcomp::influence {

/// Influence values for every candidate label of one input.
struct BifVector {
  Vector values;  // one per class, >= 0
  double beta = 1.0;
};

/// Influence of (x, label): damped inverse-curvature quadratic form of the
/// temperature-scaled energy gradient. The curvature state must have been
/// fitted at the same beta.
double bif(const curvature::EkfacState& curv, const model::MlpParams& params,
           const Vector& x, int label, double beta);
double bif(const curvature::ExactFisher& curv, const model::MlpParams& params,
           const Vector& x, int label, double beta);

/// bif at beta = 1.
double self_influence(const curvature::EkfacState& curv,
                      const model::MlpParams& params, const Vector& x, int label);
double self_influence(const curvature::ExactFisher& curv,
                      const model::MlpParams& params, const Vector& x, int label);

/// Influence of every candidate label, sharing one forward pass across the
/// per-label gradients.
BifVector bif_all_labels(const curvature::EkfacState& curv,
                         const model::MlpParams& params, const Vector& x,
                         double beta);
BifVector bif_all_labels(const curvature::ExactFisher& curv,
                         const model::MlpParams& params, const Vector& x,
                         double beta);

/// Mean over labels of the energy gradient L2 norm; curvature-free baseline.
double grad_norm(const model::MlpParams& params, const Vector& x, double beta);

}  // namespace ifcomp::influence
