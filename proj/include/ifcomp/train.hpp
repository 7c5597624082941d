#pragma once

#include <functional>

#include "ifcomp/data.hpp"
#include "ifcomp/model.hpp"

namespace ifcomp::train {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
};

struct CurvePoint {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};
using TrainCurve = std::vector<CurvePoint>;

/// SGD with momentum on the mean cross-entropy at beta = 1. The seed fixes
/// both the parameter init and the shuffle order. Throws DivergenceError,
/// naming the epoch, if the loss goes non-finite.
model::MlpParams train_base(const data::Dataset& dataset,
                            const std::vector<std::size_t>& hidden,
                            const TrainConfig& config,
                            TrainCurve* curve = nullptr);

/// Weighted variant used by the hindsight retraining oracle: example i
/// contributes weights[i] times its gradient; the loss reported in the curve
/// is weight-averaged. `on_epoch`, when set, observes the parameters after
/// each epoch.
using EpochCallback = std::function<void(int epoch, const model::MlpParams&)>;

model::MlpParams train_weighted(const data::Dataset& dataset,
                                const Vector& weights,
                                const std::vector<std::size_t>& hidden,
                                const TrainConfig& config,
                                TrainCurve* curve = nullptr,
                                const EpochCallback& on_epoch = nullptr);

struct BpboConfig {
  double beta = 1.0;
  double lambda = 0.0;          // proximity weight
  int steps = 50;
  double lr = 0.01;
  double epsilon_weight = 0.0;  // <= 0 means 1/n

  static BpboConfig defaults(std::size_t n) {
    BpboConfig cfg;
    cfg.lambda = 1e-3 * static_cast<double>(n);
    cfg.epsilon_weight = 1.0 / static_cast<double>(n);
    return cfg;
  }
};

struct BpboStep {
  double objective = 0.0;    // full objective value
  double test_energy = 0.0;  // energy of the candidate-labelled test point
  double kl_sum = 0.0;       // function-space proximity, summed over training
  double prox_sq = 0.0;      // ||theta - theta_hat||^2
};

struct BpboResult {
  model::MlpParams params;
  std::vector<BpboStep> trace;  // trace[0] is the pre-step state
};

/// Fine-tunes the base model toward a hindsight optimum for the candidate
/// (x, label): the temperature-scaled test loss plus a function-space KL
/// anchor over the training set plus a weight-space quadratic anchor.
/// Full-batch gradient steps; the quadratic anchor is stepped implicitly so
/// large lambda values stay stable. Throws DivergenceError if the objective
/// exceeds 10x its initial value.
BpboResult bpbo_finetune(const model::MlpParams& base,
                         const data::Dataset& dataset, const Vector& x,
                         int label, const BpboConfig& config);

struct RetrainResult {
  model::MlpParams params;
  double z_probability = 0.0;  // p(label | x) at beta = 1 after retraining
};

/// Trains from scratch on the dataset plus (x, label), with the added point
/// weighted epsilon * n relative to each training point. epsilon = 0 reduces
/// to train_base on the dataset alone.
RetrainResult retrain_unrestricted(const data::Dataset& dataset, const Vector& x,
                                   int label, double epsilon,
                                   const std::vector<std::size_t>& hidden,
                                   const TrainConfig& config);

void save_curve_csv(const TrainCurve& curve, const std::string& path);

}  // namespace ifcomp::train
