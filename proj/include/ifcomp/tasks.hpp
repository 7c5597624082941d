#pragma once

#include <optional>

#include "ifcomp/config.hpp"
#include "ifcomp/eval.hpp"

#include "json.hpp"

namespace ifcomp::tasks {

/// Train/val/test splits built from one config; train noise applied when
/// configured.
struct DataBundle {
  data::Dataset train;
  data::Dataset val;
  data::Dataset test;
  std::optional<data::NoiseRecord> noise;
};

DataBundle build_data(const config::RunConfig& cfg);

train::TrainConfig make_train_config(const config::RunConfig& cfg);
train::BpboConfig make_bpbo_config(const config::RunConfig& cfg, std::size_t n);

/// Scores every example of a dataset against a fitted curvature state:
/// per-label influence, parametric complexity, error/total when labels are
/// present, and the pNML distribution at the configured alpha. Parallel over
/// examples when cfg.workers > 1; output order is input order.
std::vector<pnml::ScoreRecord> score_dataset(const model::MlpParams& params,
                                             const curvature::EkfacState& ekfac,
                                             const data::Dataset& dataset,
                                             const config::RunConfig& cfg);

// Command bodies shared by the CLI; each returns the machine-readable report
// it also writes under out_dir.
nlohmann::json cmd_train(const config::RunConfig& cfg);
nlohmann::json cmd_fit_curvature(const config::RunConfig& cfg);
nlohmann::json cmd_score(const config::RunConfig& cfg);

nlohmann::json run_calibrate(const config::RunConfig& cfg);
nlohmann::json run_mislabel(const config::RunConfig& cfg);
nlohmann::json run_ood(const config::RunConfig& cfg);
nlohmann::json run_prune(const config::RunConfig& cfg);
nlohmann::json run_validate_oracle(const config::RunConfig& cfg);
nlohmann::json run_bench(const config::RunConfig& cfg);

/// Dispatch by task name; throws ConfigError for unknown tasks.
nlohmann::json run_task(const config::RunConfig& cfg, const std::string& task);

}  // namespace ifcomp::tasks
