#pragma once

#include <cstdint>
#include <string>

#include "ifcomp/linalg.hpp"

namespace ifcomp::model {

using linalg::Matrix;

/// Inverse temperature for the scaled softmax. Must be finite and > 0.
struct TempConfig {
  double beta = 1.0;
  void validate() const;
};

struct DenseLayer {
  Matrix weight;  // d_out x d_in
  Vector bias;    // d_out
};

/// ReLU MLP: dense layers with ReLU between them and identity at the output.
/// The flattened parameter vector is layer-major, weight-then-bias, with
/// weights in row-major order; this layout is shared with the curvature code.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.back().weight.rows; }
  std::size_t param_count() const;

  Vector flatten() const;
  void assign_flat(const Vector& flat);
};

/// Flat-vector offsets of one layer's blocks.
struct LayerOffsets {
  std::size_t weight_begin = 0;
  std::size_t bias_begin = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};

std::vector<LayerOffsets> layer_offsets(const MlpParams& params);

/// He-initialized MLP with zero biases, deterministic in the seed.
MlpParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t classes, std::uint64_t seed);

/// Activations cached by one forward pass, reused by per-label gradients.
struct ForwardTrace {
  std::vector<Vector> layer_inputs;     // layer_inputs[l] feeds layer l
  std::vector<Vector> pre_activations;  // pre_activations[l] = W_l a_l + b_l
  const Vector& logits() const { return pre_activations.back(); }
};

ForwardTrace forward(const MlpParams& params, const Vector& x);

/// Softmax of beta-scaled logits, computed with max subtraction.
/// Entries are floored at 1e-30.
Vector softmax_temp(const Vector& logits, double beta);

/// -log p_beta(y | x). Capped at -log(1e-30) by the probability floor.
double energy(const MlpParams& params, const Vector& x, int label, double beta);
double energy_from_logits(const Vector& logits, int label, double beta);

/// Gradient of energy w.r.t. the flattened parameters.
Vector grad_energy(const MlpParams& params, const Vector& x, int label,
                   double beta);

/// KL divergence between the beta-scaled softmax distributions of two logit
/// vectors. Nonnegative; exactly 0 for identical logits.
double kl_temp(const Vector& p_logits, const Vector& q_logits, double beta);

// --- shared-trace building blocks -----------------------------------------

/// beta * (softmax_temp(logits, beta) - e_label).
Vector energy_logit_grad(const Vector& logits, int label, double beta);

/// Per-layer pre-activation gradients backpropagated from a logit gradient.
std::vector<Vector> backprop_deltas(const MlpParams& params,
                                    const ForwardTrace& trace,
                                    const Vector& logit_grad);

/// Assembles per-layer deltas and cached inputs into a flat gradient.
Vector flatten_layer_grads(const MlpParams& params, const ForwardTrace& trace,
                           const std::vector<Vector>& deltas);

Vector grad_from_logit_grad(const MlpParams& params, const ForwardTrace& trace,
                            const Vector& logit_grad);

// --- serialization ----------------------------------------------------------

/// Versioned binary checkpoint; round-trips exactly.
void save_params(const MlpParams& params, const std::string& path);
MlpParams load_params(const std::string& path);

}  // namespace ifcomp::model
