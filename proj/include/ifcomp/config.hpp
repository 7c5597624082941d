#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ifcomp/train.hpp"

namespace ifcomp::config {

struct ModelConfig {
  std::vector<std::size_t> hidden = {64, 64};
};

struct CurvatureConfig {
  double beta = 1.0;
  double delta = 1e-8;
  std::string expectation = "exact";  // exact | sampled
};

struct PnmlConfig {
  double alpha = 1.0;
  double beta = 1.0;
};

struct BpboSection {
  double lambda = -1.0;         // < 0 means the 1e-3 * n default
  int steps = 50;
  double lr = 0.01;
  double epsilon_weight = 0.0;  // <= 0 means 1/n
};

struct DataConfig {
  std::string source = "blobs";  // blobs | manifest | idx
  int classes = 4;
  std::size_t dim = 8;
  std::size_t n_train = 800;
  std::size_t n_val = 200;
  std::size_t n_test = 400;
  double spread = 1.0;
  std::string noise_kind = "symmetric";  // symmetric | asymmetric
  double noise_rate = 0.0;
  std::string corrupt_kind = "gaussian_noise";
  std::string ood_kind = "disjoint_classes";
  std::string manifest;
  std::string idx_images;
  std::string idx_labels;
};

struct TaskConfig {
  int probes = 40;
  int checkpoint_every = 0;
  std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  int prune_seeds = 5;
  int reps = 5;
  int draws = 5;
  std::vector<double> alpha_grid = {0.0, 0.05, 0.15, 0.5, 1.0, 2.0, 5.0, 15.0, 50.0};
  std::string split = "test";  // train | val | test
  int bench_examples = 32;
  int oracle_examples = 2;
};

struct PathsConfig {
  std::string out_dir = "out";
  std::string checkpoint;
  std::string curvature;
  std::string dataset;
};

struct RunConfig {
  std::uint64_t seed = 42;
  int workers = 1;
  ModelConfig model;
  train::TrainConfig train;
  CurvatureConfig curvature;
  PnmlConfig pnml;
  BpboSection bpbo;
  DataConfig data;
  TaskConfig task;
  PathsConfig paths;

  /// Throws ConfigError on any invalid field.
  void validate() const;
};

/// Flat-sectioned key=value file; '#' starts a comment. Unknown sections or
/// keys are rejected.
RunConfig load_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace ifcomp::config
