#include "ifcomp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ifcomp::eval {

BinTable reliability_table(const std::vector<double>& confidences,
                           const std::vector<int>& correct, int bins) {
  if (confidences.empty()) throw ConfigError("ece: empty input");
  if (confidences.size() != correct.size()) {
    throw DimensionError("ece: confidence/correct length mismatch");
  }
  if (bins < 1) throw ConfigError("ece: bins must be >= 1");
  for (const double c : confidences) {
    if (c < 0.0 || c > 1.0 || !std::isfinite(c)) {
      throw ConfigError("ece: confidences must be in [0, 1]");
    }
  }

  const std::size_t n = confidences.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidences[a] < confidences[b];
  });

  const std::size_t used_bins = std::min<std::size_t>(static_cast<std::size_t>(bins), n);
  const std::size_t base = n / used_bins;
  const std::size_t remainder = n % used_bins;

  BinTable table;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < used_bins; ++b) {
    const std::size_t count = base + (b < remainder ? 1 : 0);
    BinRow row;
    row.count = count;
    for (std::size_t k = 0; k < count; ++k, ++pos) {
      row.mean_confidence += confidences[order[pos]];
      row.accuracy += correct[order[pos]] != 0 ? 1.0 : 0.0;
    }
    row.mean_confidence /= static_cast<double>(count);
    row.accuracy /= static_cast<double>(count);
    table.bins.push_back(row);
  }
  return table;
}

double ece(const std::vector<double>& confidences, const std::vector<int>& correct,
           int bins) {
  const BinTable table = reliability_table(confidences, correct, bins);
  double acc = 0.0;
  std::size_t total = 0;
  for (const auto& row : table.bins) {
    acc += static_cast<double>(row.count) *
           std::abs(row.mean_confidence - row.accuracy);
    total += row.count;
  }
  return acc / static_cast<double>(total);
}

void save_bin_table_csv(const BinTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open bin table csv for writing: " + path);
  out << "bin,mean_conf,acc,count\n";
  char buf[40];
  for (std::size_t b = 0; b < table.bins.size(); ++b) {
    out << b << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", table.bins[b].mean_confidence);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", table.bins[b].accuracy);
    out << buf << "," << table.bins[b].count << "\n";
  }
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("auroc: score/label length mismatch");
  }
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (const int l : labels) positives += l != 0 ? 1 : 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw ConfigError("auroc: both classes must be present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks over tie groups (1-based ranks).
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("pearson_r: length mismatch");
  if (a.size() < 2) throw ConfigError("pearson_r: need at least 2 points");
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) {
    throw NumericalError("pearson_r: zero variance input");
  }
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

double time_per_example(const std::function<void(std::size_t)>& fn, std::size_t n,
                        int reps) {
  if (n == 0) throw ConfigError("time_per_example: no inputs");
  if (reps < 1) throw ConfigError("time_per_example: reps must be >= 1");
  fn(0);  // warmup, untimed

  std::vector<double> per_rep(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n; ++i) fn(i);
    const auto t1 = std::chrono::steady_clock::now();
    per_rep[static_cast<std::size_t>(r)] =
        std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(n);
  }
  std::sort(per_rep.begin(), per_rep.end());
  return per_rep[per_rep.size() / 2];
}

double time_scoring(ScoringMethod method, const TimingInputs& inputs, int reps) {
  if (inputs.params == nullptr) throw ConfigError("time_scoring: missing model");
  if (inputs.inputs.empty()) throw ConfigError("time_scoring: no inputs");
  volatile double sink = 0.0;

  std::function<void(std::size_t)> fn;
  switch (method) {
    case ScoringMethod::IfComp: {
      if (inputs.ekfac == nullptr) {
        throw ConfigError("time_scoring: ifcomp needs a curvature state");
      }
      fn = [&, cfg = inputs.pnml](std::size_t i) {
        const Vector& x = inputs.inputs[i];
        const auto trace = model::forward(*inputs.params, x);
        const Vector probs = model::softmax_temp(trace.logits(), cfg.beta);
        const auto bif =
            influence::bif_all_labels(*inputs.ekfac, *inputs.params, x, cfg.beta);
        const Vector dist = pnml::pnml_distribution(probs, bif, cfg);
        sink = sink + dist[0];
      };
      break;
    }
    case ScoringMethod::BpboOracle: {
      if (inputs.train == nullptr) {
        throw ConfigError("time_scoring: bpbo oracle needs the training set");
      }
      fn = [&, cfg = inputs.bpbo](std::size_t i) {
        const Vector& x = inputs.inputs[i];
        const std::size_t classes = inputs.params->output_dim();
        Vector oracle_probs(classes);
        for (std::size_t y = 0; y < classes; ++y) {
          const auto result = train::bpbo_finetune(*inputs.params, *inputs.train,
                                                   x, static_cast<int>(y), cfg);
          const auto trace = model::forward(result.params, x);
          oracle_probs[y] = model::softmax_temp(trace.logits(), cfg.beta)[y];
        }
        const auto exact = pnml::boltzmann_pnml_exact(oracle_probs);
        sink = sink + exact.distribution[0];
      };
      break;
    }
    case ScoringMethod::GradNorm: {
      fn = [&, beta = inputs.pnml.beta](std::size_t i) {
        sink = sink + influence::grad_norm(*inputs.params, inputs.inputs[i], beta);
      };
      break;
    }
  }
  return time_per_example(fn, inputs.inputs.size(), reps);
}

}  // namespace ifcomp::eval
