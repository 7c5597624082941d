#include "ifcomp/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ifcomp::train {

using model::MlpParams;

namespace {

struct GradBuffer {
  std::vector<model::DenseLayer> layers;

  explicit GradBuffer(const MlpParams& like) {
    layers.reserve(like.layers.size());
    for (const auto& l : like.layers) {
      model::DenseLayer g;
      g.weight = linalg::Matrix(l.weight.rows, l.weight.cols);
      g.bias.assign(l.bias.size(), 0.0);
      layers.push_back(std::move(g));
    }
  }

  void zero() {
    for (auto& l : layers) {
      std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }
};

/// Accumulates weight * dL/dtheta for one example into the buffer.
void accumulate_grad(const MlpParams& params, const model::ForwardTrace& trace,
                     const Vector& logit_grad, double weight, GradBuffer& grad) {
  const auto deltas = model::backprop_deltas(params, trace, logit_grad);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Vector& a = trace.layer_inputs[l];
    const Vector& d = deltas[l];
    auto& g = grad.layers[l];
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double wd = weight * d[i];
      if (wd == 0.0) continue;
      double* row = &g.weight.data[i * a.size()];
      for (std::size_t j = 0; j < a.size(); ++j) row[j] += wd * a[j];
      g.bias[i] += wd;
    }
  }
}

double dataset_accuracy(const MlpParams& params, const data::Dataset& dataset) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto trace = model::forward(params, dataset.example(i));
    const auto& logits = trace.logits();
    const auto best = std::max_element(logits.begin(), logits.end());
    if (static_cast<int>(best - logits.begin()) == dataset.labels[i]) ++hits;
  }
  return dataset.size() == 0
             ? 0.0
             : static_cast<double>(hits) / static_cast<double>(dataset.size());
}

double weighted_mean_energy(const MlpParams& params, const data::Dataset& dataset,
                            const Vector& weights) {
  double loss = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    loss += weights[i] *
            model::energy(params, dataset.example(i), dataset.labels[i], 1.0);
    total += weights[i];
  }
  return total > 0.0 ? loss / total : 0.0;
}

}  // namespace

MlpParams train_weighted(const data::Dataset& dataset, const Vector& weights,
                         const std::vector<std::size_t>& hidden,
                         const TrainConfig& config, TrainCurve* curve,
                         const EpochCallback& on_epoch) {
  if (dataset.size() == 0) throw ConfigError("train: empty dataset");
  if (weights.size() != dataset.size()) {
    throw DimensionError("train_weighted: weight count mismatch");
  }
  for (const int l : dataset.labels) {
    if (l < 0 || l >= dataset.num_classes) {
      throw ConfigError("train: label out of range");
    }
  }

  MlpParams params = model::make_mlp(dataset.dim(), hidden,
                                     static_cast<std::size_t>(dataset.num_classes),
                                     derive_seed(config.seed, "init"));
  if (curve != nullptr) {
    curve->clear();
    curve->push_back({0, weighted_mean_energy(params, dataset, weights),
                      dataset_accuracy(params, dataset)});
  }
  if (config.epochs <= 0) return params;

  GradBuffer grad(params);
  GradBuffer velocity(params);
  Rng order_rng(derive_seed(config.seed, "order"));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batch =
      std::min(std::max<std::size_t>(config.batch_size, 1), dataset.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    double epoch_weight = 0.0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(start + batch, order.size());
      grad.zero();
      double batch_weight = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const double w = weights[i];
        if (w == 0.0) continue;
        const Vector x = dataset.example(i);
        const auto trace = model::forward(params, x);
        const Vector lg =
            model::energy_logit_grad(trace.logits(), dataset.labels[i], 1.0);
        accumulate_grad(params, trace, lg, w, grad);
        const double e =
            model::energy_from_logits(trace.logits(), dataset.labels[i], 1.0);
        epoch_loss += w * e;
        batch_weight += w;
      }
      if (batch_weight == 0.0) continue;
      epoch_weight += batch_weight;

      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        auto& g = grad.layers[l];
        auto& v = velocity.layers[l];
        for (std::size_t idx = 0; idx < layer.weight.data.size(); ++idx) {
          const double gi = g.weight.data[idx] / batch_weight +
                            config.weight_decay * layer.weight.data[idx];
          v.weight.data[idx] = config.momentum * v.weight.data[idx] + gi;
          layer.weight.data[idx] -= config.lr * v.weight.data[idx];
        }
        for (std::size_t idx = 0; idx < layer.bias.size(); ++idx) {
          const double gi = g.bias[idx] / batch_weight +
                            config.weight_decay * layer.bias[idx];
          v.bias[idx] = config.momentum * v.bias[idx] + gi;
          layer.bias[idx] -= config.lr * v.bias[idx];
        }
      }
    }

    const double mean_loss =
        epoch_weight > 0.0 ? epoch_loss / epoch_weight : 0.0;
    if (!std::isfinite(mean_loss)) {
      throw DivergenceError("training diverged at epoch " +
                            std::to_string(epoch) + " (non-finite loss)");
    }
    if (curve != nullptr) {
      curve->push_back({epoch, mean_loss, dataset_accuracy(params, dataset)});
    }
    if (on_epoch) on_epoch(epoch, params);
  }
  return params;
}

MlpParams train_base(const data::Dataset& dataset,
                     const std::vector<std::size_t>& hidden,
                     const TrainConfig& config, TrainCurve* curve) {
  return train_weighted(dataset, Vector(dataset.size(), 1.0), hidden, config,
                        curve);
}

BpboResult bpbo_finetune(const model::MlpParams& base,
                         const data::Dataset& dataset, const Vector& x,
                         int label, const BpboConfig& config) {
  const std::size_t n = dataset.size();
  if (n == 0) throw ConfigError("bpbo_finetune: empty dataset");
  if (config.lambda < 0.0) throw ConfigError("bpbo_finetune: lambda must be >= 0");
  if (config.steps < 0) throw ConfigError("bpbo_finetune: steps must be >= 0");
  const double eps = config.epsilon_weight > 0.0
                         ? config.epsilon_weight
                         : 1.0 / static_cast<double>(n);
  const double test_coeff = eps * static_cast<double>(n);
  const double beta = config.beta;
  const double inv_n = 1.0 / static_cast<double>(n);

  // Base-model logits are the function-space anchor; cache one pass.
  std::vector<Vector> base_logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    base_logits[i] = model::forward(base, dataset.example(i)).logits();
  }
  const Vector base_flat = base.flatten();

  MlpParams params = base;
  GradBuffer grad(params);

  BpboResult result;
  result.trace.reserve(static_cast<std::size_t>(config.steps) + 1);

  // One pass evaluates the objective at the current parameters and, when
  // stepping, the explicit part of its gradient.
  auto evaluate = [&](bool with_grad) {
    BpboStep step;
    if (with_grad) grad.zero();

    const auto test_trace = model::forward(params, x);
    step.test_energy = model::energy_from_logits(test_trace.logits(), label, beta);
    if (with_grad) {
      const Vector lg = model::energy_logit_grad(test_trace.logits(), label, beta);
      accumulate_grad(params, test_trace, lg, test_coeff * inv_n, grad);
    }

    for (std::size_t i = 0; i < n; ++i) {
      const auto trace = model::forward(params, dataset.example(i));
      const Vector p = model::softmax_temp(trace.logits(), beta);
      const Vector q = model::softmax_temp(base_logits[i], beta);
      double kl = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) {
        kl += p[c] * (std::log(p[c]) - std::log(q[c]));
      }
      kl = std::max(kl, 0.0);
      step.kl_sum += kl;
      if (with_grad) {
        // d KL / d logit_c = beta * p_c * (log(p_c/q_c) - KL)
        Vector lg(p.size());
        for (std::size_t c = 0; c < p.size(); ++c) {
          lg[c] = beta * p[c] * (std::log(p[c]) - std::log(q[c]) - kl);
        }
        accumulate_grad(params, trace, lg, inv_n, grad);
      }
    }

    const Vector flat = params.flatten();
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double d = flat[i] - base_flat[i];
      step.prox_sq += d * d;
    }
    step.objective = test_coeff * step.test_energy + step.kl_sum +
                     0.5 * config.lambda * step.prox_sq;
    return step;
  };

  const double lambda_mean = config.lambda * inv_n;
  double initial_objective = 0.0;
  for (int t = 0; t <= config.steps; ++t) {
    const bool stepping = t < config.steps;
    const BpboStep state = evaluate(stepping);
    result.trace.push_back(state);
    if (t == 0) {
      initial_objective = state.objective;
    } else if (state.objective > 10.0 * initial_objective + 1e-3) {
      throw DivergenceError("bpbo_finetune: objective " +
                            std::to_string(state.objective) + " exceeds 10x initial " +
                            std::to_string(initial_objective));
    }
    if (!stepping) break;

    // Explicit step on the test and KL terms of the per-point-mean objective,
    // implicit step on the quadratic anchor (stable for any lambda).
    const double denom = 1.0 + config.lr * lambda_mean;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      auto& layer = params.layers[l];
      const auto& baseline = base.layers[l];
      const auto& g = grad.layers[l];
      for (std::size_t idx = 0; idx < layer.weight.data.size(); ++idx) {
        layer.weight.data[idx] =
            (layer.weight.data[idx] - config.lr * g.weight.data[idx] +
             config.lr * lambda_mean * baseline.weight.data[idx]) /
            denom;
      }
      for (std::size_t idx = 0; idx < layer.bias.size(); ++idx) {
        layer.bias[idx] = (layer.bias[idx] - config.lr * g.bias[idx] +
                           config.lr * lambda_mean * baseline.bias[idx]) /
                          denom;
      }
    }
  }

  result.params = std::move(params);
  return result;
}

RetrainResult retrain_unrestricted(const data::Dataset& dataset, const Vector& x,
                                   int label, double epsilon,
                                   const std::vector<std::size_t>& hidden,
                                   const TrainConfig& config) {
  RetrainResult result;
  const double z_weight = epsilon * static_cast<double>(dataset.size());
  if (z_weight <= 0.0) {
    result.params = train_base(dataset, hidden, config);
  } else {
    data::Dataset augmented = dataset;
    augmented.features = linalg::Matrix(dataset.size() + 1, dataset.dim());
    std::copy(dataset.features.data.begin(), dataset.features.data.end(),
              augmented.features.data.begin());
    for (std::size_t j = 0; j < dataset.dim(); ++j)
      augmented.features(dataset.size(), j) = x[j];
    augmented.labels.push_back(label);

    Vector weights(dataset.size() + 1, 1.0);
    weights.back() = z_weight;
    result.params = train_weighted(augmented, weights, hidden, config);
  }
  const auto trace = model::forward(result.params, x);
  result.z_probability = model::softmax_temp(trace.logits(), 1.0)[
      static_cast<std::size_t>(label)];
  return result;
}

void save_curve_csv(const TrainCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open curve csv for writing: " + path);
  out << "epoch,loss,accuracy\n";
  char buf[40];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.loss);
    out << p.epoch << "," << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", p.accuracy);
    out << buf << "\n";
  }
}

}  // namespace ifcomp::train
