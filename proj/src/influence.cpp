#include "ifcomp/influence.hpp"

#include <cmath>

namespace ifcomp::influence {

namespace {

void check_beta_match(double curv_beta, double beta) {
  if (curv_beta != beta) {
    throw ConfigError("influence: curvature fitted at beta " +
                      std::to_string(curv_beta) + " but scored at beta " +
                      std::to_string(beta));
  }
}

template <typename Curvature>
double bif_impl(const Curvature& curv, const model::MlpParams& params,
                const Vector& x, int label, double beta) {
  check_beta_match(curv.beta, beta);
  const auto trace = model::forward(params, x);
  const Vector grad = model::grad_from_logit_grad(
      params, trace, model::energy_logit_grad(trace.logits(), label, beta));
  return curvature::quadratic_form(curv, grad);
}

template <typename Curvature>
BifVector bif_all_impl(const Curvature& curv, const model::MlpParams& params,
                       const Vector& x, double beta) {
  check_beta_match(curv.beta, beta);
  const auto trace = model::forward(params, x);
  const std::size_t classes = params.output_dim();
  BifVector out;
  out.beta = beta;
  out.values.resize(classes);
  for (std::size_t y = 0; y < classes; ++y) {
    const Vector grad = model::grad_from_logit_grad(
        params, trace,
        model::energy_logit_grad(trace.logits(), static_cast<int>(y), beta));
    out.values[y] = curvature::quadratic_form(curv, grad);
  }
  return out;
}

}  // namespace

double bif(const curvature::EkfacState& curv, const model::MlpParams& params,
           const Vector& x, int label, double beta) {
  return bif_impl(curv, params, x, label, beta);
}

double bif(const curvature::ExactFisher& curv, const model::MlpParams& params,
           const Vector& x, int label, double beta) {
  return bif_impl(curv, params, x, label, beta);
}

double self_influence(const curvature::EkfacState& curv,
                      const model::MlpParams& params, const Vector& x,
                      int label) {
  return bif(curv, params, x, label, 1.0);
}

double self_influence(const curvature::ExactFisher& curv,
                      const model::MlpParams& params, const Vector& x,
                      int label) {
  return bif(curv, params, x, label, 1.0);
}

BifVector bif_all_labels(const curvature::EkfacState& curv,
                         const model::MlpParams& params, const Vector& x,
                         double beta) {
  return bif_all_impl(curv, params, x, beta);
}

BifVector bif_all_labels(const curvature::ExactFisher& curv,
                         const model::MlpParams& params, const Vector& x,
                         double beta) {
  return bif_all_impl(curv, params, x, beta);
}

double grad_norm(const model::MlpParams& params, const Vector& x, double beta) {
  const auto trace = model::forward(params, x);
  const std::size_t classes = params.output_dim();
  double total = 0.0;
  for (std::size_t y = 0; y < classes; ++y) {
    const Vector grad = model::grad_from_logit_grad(
        params, trace,
        model::energy_logit_grad(trace.logits(), static_cast<int>(y), beta));
    total += linalg::norm2(grad);
  }
  return total / static_cast<double>(classes);
}

}  // namespace ifcomp::influence
