#pragma once

#include <functional>

#include "ifcomp/pnml.hpp"
#include "ifcomp/train.hpp"

namespace ifcomp::eval {

struct BinRow {
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Equal-count confidence bins; the remainder examples go to the leading
/// bins.
struct BinTable {
  std::vector<BinRow> bins;
};

BinTable reliability_table(const std::vector<double>& confidences,
                           const std::vector<int>& correct, int bins = 20);

/// Count-weighted mean |confidence - accuracy| over equal-count bins.
double ece(const std::vector<double>& confidences, const std::vector<int>& correct,
           int bins = 20);

void save_bin_table_csv(const BinTable& table, const std::string& path);

/// Rank-based AUROC with average ranks for ties; labels are 0/1.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

double pearson_r(const std::vector<double>& a, const std::vector<double>& b);

/// Times fn(i) for i in [0, n) and returns the median-over-reps per-example
/// wall-clock seconds. One untimed warmup pass over the first example runs
/// first. Single-threaded.
double time_per_example(const std::function<void(std::size_t)>& fn, std::size_t n,
                        int reps);

enum class ScoringMethod { IfComp, BpboOracle, GradNorm };

struct TimingInputs {
  const model::MlpParams* params = nullptr;
  const curvature::EkfacState* ekfac = nullptr;  // IfComp
  const data::Dataset* train = nullptr;          // BpboOracle
  train::BpboConfig bpbo;
  pnml::PnmlConfig pnml;
  std::vector<Vector> inputs;
};

/// Per-example seconds to produce the final per-label output for one method.
/// Curvature fitting and model training happen outside the timed region.
double time_scoring(ScoringMethod method, const TimingInputs& inputs, int reps);

}  // namespace ifcomp::eval
