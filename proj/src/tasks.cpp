#include "ifcomp/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

namespace ifcomp::tasks {

namespace fs = std::filesystem;

namespace {

nlohmann::json make_report(const std::string& task, const config::RunConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["task"] = task;
  j["seed"] = cfg.seed;
  j["metrics"] = nlohmann::json::object();
  return j;
}

void write_report(const nlohmann::json& report, const std::string& out_dir,
                  const std::string& name) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/" + name, std::ios::trunc);
  if (!out) throw FormatError("cannot write report: " + out_dir + "/" + name);
  out << report.dump(2) << "\n";
}

std::string artifact_path(const config::RunConfig& cfg, const std::string& override_path,
                          const std::string& default_name) {
  if (!override_path.empty()) return override_path;
  return cfg.paths.out_dir + "/" + default_name;
}

curvature::LabelExpectation expectation_of(const config::RunConfig& cfg) {
  return cfg.curvature.expectation == "sampled" ? curvature::LabelExpectation::Sampled
                                                : curvature::LabelExpectation::Exact;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Cached per-example scoring pieces so alpha sweeps do not redo gradients.
struct ScoredExample {
  Vector probs;
  influence::BifVector bif;
  int label = 0;
};

std::vector<ScoredExample> score_examples(const model::MlpParams& params,
                                          const curvature::EkfacState& ekfac,
                                          const data::Dataset& dataset,
                                          double beta, int workers) {
  std::vector<ScoredExample> out(dataset.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vector x = dataset.example(i);
      const auto trace = model::forward(params, x);
      out[i].probs = model::softmax_temp(trace.logits(), beta);
      out[i].bif = influence::bif_all_labels(ekfac, params, x, beta);
      out[i].label = dataset.labels[i];
    }
  };
  if (workers <= 1 || dataset.size() < 2) {
    work(0, dataset.size());
  } else {
    const std::size_t count = std::min<std::size_t>(
        static_cast<std::size_t>(workers), dataset.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (dataset.size() + count - 1) / count;
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(begin + chunk, dataset.size());
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

struct CalibrationStats {
  double ece = 0.0;
  eval::BinTable table;
};

CalibrationStats calibration_for_alpha(const std::vector<ScoredExample>& scored,
                                       double alpha, double beta, std::size_t n) {
  pnml::PnmlConfig cfg{alpha, beta, n};
  std::vector<double> confidences;
  std::vector<int> correct;
  confidences.reserve(scored.size());
  correct.reserve(scored.size());
  for (const auto& ex : scored) {
    const Vector dist = pnml::pnml_distribution(ex.probs, ex.bif, cfg);
    const auto best = std::max_element(dist.begin(), dist.end());
    confidences.push_back(*best);
    correct.push_back(static_cast<int>(best - dist.begin()) == ex.label ? 1 : 0);
  }
  CalibrationStats stats;
  stats.table = eval::reliability_table(confidences, correct, 20);
  stats.ece = eval::ece(confidences, correct, 20);
  return stats;
}

data::CorruptKind corrupt_kind_of(const std::string& name) {
  if (name == "gaussian_noise") return data::CorruptKind::GaussianNoise;
  if (name == "pixel_blur") return data::CorruptKind::PixelBlur;
  if (name == "mask") return data::CorruptKind::Mask;
  throw ConfigError("unknown corruption kind: " + name);
}

data::Dataset take_rows(const data::Dataset& dataset,
                        const std::vector<std::size_t>& rows) {
  data::Dataset out = dataset;
  out.features = linalg::Matrix(rows.size(), dataset.dim());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dataset.dim(); ++j)
      out.features(i, j) = dataset.features(rows[i], j);
    out.labels[i] = dataset.labels[rows[i]];
  }
  return out;
}

}  // namespace

train::TrainConfig make_train_config(const config::RunConfig& cfg) {
  train::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  return tc;
}

train::BpboConfig make_bpbo_config(const config::RunConfig& cfg, std::size_t n) {
  train::BpboConfig bc = train::BpboConfig::defaults(n);
  bc.beta = cfg.curvature.beta;
  if (cfg.bpbo.lambda >= 0.0) bc.lambda = cfg.bpbo.lambda;
  bc.steps = cfg.bpbo.steps;
  bc.lr = cfg.bpbo.lr;
  if (cfg.bpbo.epsilon_weight > 0.0) bc.epsilon_weight = cfg.bpbo.epsilon_weight;
  return bc;
}

DataBundle build_data(const config::RunConfig& cfg) {
  const auto& dc = cfg.data;
  data::Dataset full;
  if (dc.source == "blobs") {
    const std::size_t total = dc.n_train + dc.n_val + dc.n_test;
    const std::size_t per_class =
        (total + static_cast<std::size_t>(dc.classes) - 1) /
        static_cast<std::size_t>(dc.classes);
    full = data::synth_blobs(dc.classes, dc.dim, per_class, dc.spread,
                             derive_seed(cfg.seed, "data"));
  } else if (dc.source == "manifest") {
    if (dc.manifest.empty()) {
      throw ConfigError("data.source = manifest but data.manifest path not set");
    }
    full = data::load_manifest(dc.manifest);
  } else {  // idx
    if (dc.idx_images.empty() || dc.idx_labels.empty()) {
      throw ConfigError("data.source = idx needs data.idx_images and data.idx_labels");
    }
    full = data::load_idx(dc.idx_images, dc.idx_labels);
  }

  if (dc.n_train + dc.n_val + dc.n_test > full.size()) {
    throw ConfigError("dataset has " + std::to_string(full.size()) +
                      " examples, config asks for " +
                      std::to_string(dc.n_train + dc.n_val + dc.n_test));
  }

  DataBundle bundle;
  auto [train_part, rest] =
      data::split_dataset(full, dc.n_train, derive_seed(cfg.seed, "split1"));
  auto [val_part, test_pool] =
      data::split_dataset(rest, dc.n_val, derive_seed(cfg.seed, "split2"));
  auto [test_part, unused] =
      data::split_dataset(test_pool, dc.n_test, derive_seed(cfg.seed, "split3"));
  bundle.train = std::move(train_part);
  bundle.val = std::move(val_part);
  bundle.test = std::move(test_part);

  if (dc.noise_rate > 0.0) {
    if (dc.noise_kind == "symmetric") {
      auto [noised, record] = data::inject_symmetric_noise(
          bundle.train, dc.noise_rate, derive_seed(cfg.seed, "noise"));
      bundle.train = std::move(noised);
      bundle.noise = std::move(record);
    } else {
      auto [noised, record] = data::inject_asymmetric_noise(
          bundle.train, data::cyclic_label_map(bundle.train.num_classes),
          dc.noise_rate, derive_seed(cfg.seed, "noise"));
      bundle.train = std::move(noised);
      bundle.noise = std::move(record);
    }
  }
  return bundle;
}

std::vector<pnml::ScoreRecord> score_dataset(const model::MlpParams& params,
                                             const curvature::EkfacState& ekfac,
                                             const data::Dataset& dataset,
                                             const config::RunConfig& cfg) {
  if (ekfac.beta != cfg.curvature.beta) {
    throw ConfigError("curvature state beta " + std::to_string(ekfac.beta) +
                      " does not match config beta " +
                      std::to_string(cfg.curvature.beta));
  }
  if (cfg.pnml.beta != cfg.curvature.beta) {
    throw ConfigError("pnml.beta must match curvature.beta for scoring");
  }
  const double beta = cfg.curvature.beta;
  const auto scored =
      score_examples(params, ekfac, dataset, beta, cfg.workers);

  pnml::PnmlConfig pc{cfg.pnml.alpha, beta, ekfac.n};
  std::vector<pnml::ScoreRecord> records(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    pnml::ScoreRecord& r = records[i];
    r.id = i;
    r.bif = scored[i].bif;
    r.parametric = pnml::parametric_complexity(scored[i].bif, scored[i].probs);
    if (dataset.has_labels) {
      const double err =
          -std::log(scored[i].probs[static_cast<std::size_t>(dataset.labels[i])]);
      r.error_term = err;
      r.total = pnml::full_complexity(err, r.parametric, ekfac.n);
    }
    r.pnml_dist = pnml::pnml_distribution(scored[i].probs, scored[i].bif, pc);
  }
  return records;
}

nlohmann::json cmd_train(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  train::TrainCurve curve;
  const model::MlpParams params =
      train::train_base(bundle.train, cfg.model.hidden, make_train_config(cfg), &curve);

  fs::create_directories(cfg.paths.out_dir);
  const std::string checkpoint =
      artifact_path(cfg, cfg.paths.checkpoint, "checkpoint.bin");
  model::save_params(params, checkpoint);
  train::save_curve_csv(curve, cfg.paths.out_dir + "/train_curve.csv");

  nlohmann::json report = make_report("train", cfg);
  report["metrics"]["final_loss"] = curve.back().loss;
  report["metrics"]["final_accuracy"] = curve.back().accuracy;
  report["metrics"]["epochs"] = cfg.train.epochs;
  report["files"]["checkpoint"] = checkpoint;
  report["files"]["curve"] = cfg.paths.out_dir + "/train_curve.csv";
  write_report(report, cfg.paths.out_dir, "train_report.json");
  return report;
}

nlohmann::json cmd_fit_curvature(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  const std::string checkpoint =
      artifact_path(cfg, cfg.paths.checkpoint, "checkpoint.bin");
  const model::MlpParams params = model::load_params(checkpoint);

  const curvature::EkfacState state =
      curvature::fit_ekfac(params, bundle.train, cfg.curvature.beta,
                           cfg.curvature.delta, expectation_of(cfg),
                           derive_seed(cfg.seed, "curvature"));

  fs::create_directories(cfg.paths.out_dir);
  const std::string curvature_file =
      artifact_path(cfg, cfg.paths.curvature, "curvature.ekfac");
  curvature::save_ekfac(state, curvature_file);

  nlohmann::json report = make_report("fit-curvature", cfg);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : state.layers) {
    const auto [lo, hi] = std::minmax_element(layer.second_moments.data.begin(),
                                              layer.second_moments.data.end());
    layers.push_back({{"moment_min", *lo}, {"moment_max", *hi}});
  }
  report["metrics"]["layers"] = layers;
  report["metrics"]["beta"] = state.beta;
  report["metrics"]["delta"] = state.damping;
  report["files"]["curvature"] = curvature_file;
  write_report(report, cfg.paths.out_dir, "curvature_report.json");
  return report;
}

nlohmann::json cmd_score(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  const model::MlpParams params =
      model::load_params(artifact_path(cfg, cfg.paths.checkpoint, "checkpoint.bin"));
  const curvature::EkfacState state = curvature::load_ekfac(
      artifact_path(cfg, cfg.paths.curvature, "curvature.ekfac"));

  const data::Dataset& split = cfg.task.split == "train"  ? bundle.train
                               : cfg.task.split == "val" ? bundle.val
                                                         : bundle.test;
  const auto records = score_dataset(params, state, split, cfg);

  fs::create_directories(cfg.paths.out_dir);
  pnml::write_records_jsonl(records, cfg.paths.out_dir + "/scores.jsonl");
  pnml::write_records_csv(records, cfg.paths.out_dir + "/scores.csv");

  nlohmann::json report = make_report("score", cfg);
  report["metrics"]["records"] = records.size();
  report["metrics"]["split"] = cfg.task.split;
  report["files"]["jsonl"] = cfg.paths.out_dir + "/scores.jsonl";
  report["files"]["csv"] = cfg.paths.out_dir + "/scores.csv";
  write_report(report, cfg.paths.out_dir, "score_report.json");
  return report;
}

nlohmann::json run_calibrate(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  const model::MlpParams params =
      train::train_base(bundle.train, cfg.model.hidden, make_train_config(cfg));
  const double beta = cfg.curvature.beta;
  const curvature::EkfacState ekfac =
      curvature::fit_ekfac(params, bundle.train, beta, cfg.curvature.delta,
                           expectation_of(cfg), derive_seed(cfg.seed, "curvature"));
  const std::size_t n = ekfac.n;
  const auto kind = corrupt_kind_of(cfg.data.corrupt_kind);

  std::vector<double> alpha_grid = cfg.task.alpha_grid;
  if (std::find(alpha_grid.begin(), alpha_grid.end(), 0.0) == alpha_grid.end()) {
    alpha_grid.insert(alpha_grid.begin(), 0.0);
  }

  // Tune alpha on corrupted validation splits: minimize the summed ECE across
  // severities subject to not degrading the low-severity ECE.
  std::vector<std::vector<double>> val_ece(alpha_grid.size(),
                                           std::vector<double>(5, 0.0));
  for (int severity = 1; severity <= 5; ++severity) {
    const data::Dataset corrupted =
        data::corrupt(bundle.val, severity, kind,
                      derive_seed(cfg.seed, "val-corrupt-" + std::to_string(severity)));
    const auto scored = score_examples(params, ekfac, corrupted, beta, cfg.workers);
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
      val_ece[a][static_cast<std::size_t>(severity - 1)] =
          calibration_for_alpha(scored, alpha_grid[a], beta, n).ece;
    }
  }
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
    const bool feasible = val_ece[a][0] <= val_ece[0][0] + 0.005 &&
                          val_ece[a][1] <= val_ece[0][1] + 0.005;
    if (!feasible) continue;
    const double score = std::accumulate(val_ece[a].begin(), val_ece[a].end(), 0.0);
    if (score < best_score) {
      best_score = score;
      best = a;
    }
  }
  const double alpha_selected = alpha_grid[best];

  nlohmann::json severities = nlohmann::json::array();
  fs::create_directories(cfg.paths.out_dir);
  for (int severity = 1; severity <= 5; ++severity) {
    std::vector<double> pnml_draws, base_draws;
    for (int draw = 0; draw < cfg.task.draws; ++draw) {
      const data::Dataset corrupted = data::corrupt(
          bundle.test, severity, kind,
          derive_seed(cfg.seed, "test-corrupt-" + std::to_string(severity) + "-" +
                                    std::to_string(draw)));
      const auto scored =
          score_examples(params, ekfac, corrupted, beta, cfg.workers);
      const auto tuned = calibration_for_alpha(scored, alpha_selected, beta, n);
      const auto base = calibration_for_alpha(scored, 0.0, beta, n);
      pnml_draws.push_back(tuned.ece);
      base_draws.push_back(base.ece);
      if (draw == 0) {
        eval::save_bin_table_csv(tuned.table,
                                 cfg.paths.out_dir + "/reliability_severity" +
                                     std::to_string(severity) + ".csv");
      }
    }
    severities.push_back({{"severity", severity},
                          {"ece_pnml_median", median(pnml_draws)},
                          {"ece_base_median", median(base_draws)},
                          {"ece_pnml_draws", pnml_draws},
                          {"ece_base_draws", base_draws}});
  }

  nlohmann::json report = make_report("calibrate", cfg);
  report["metrics"]["alpha_selected"] = alpha_selected;
  report["metrics"]["severities"] = severities;
  report["metrics"]["val_ece_by_alpha"] = val_ece;
  report["metrics"]["alpha_grid"] = alpha_grid;
  write_report(report, cfg.paths.out_dir, "calibrate_report.json");
  return report;
}

namespace {

struct MislabelAurocs {
  double total = 0.0;
  double error = 0.0;
  double parametric = 0.0;
};

MislabelAurocs mislabel_aurocs(const model::MlpParams& params,
                               const config::RunConfig& cfg,
                               const data::Dataset& noised_train,
                               const std::vector<int>& flip_labels) {
  const double beta = cfg.curvature.beta;
  const curvature::EkfacState ekfac =
      curvature::fit_ekfac(params, noised_train, beta, cfg.curvature.delta,
                           expectation_of(cfg), derive_seed(cfg.seed, "curvature"));
  const auto scored =
      score_examples(params, ekfac, noised_train, beta, cfg.workers);

  std::vector<double> total(scored.size()), error(scored.size()),
      parametric(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    error[i] = -std::log(scored[i].probs[static_cast<std::size_t>(scored[i].label)]);
    parametric[i] = pnml::parametric_complexity(scored[i].bif, scored[i].probs);
    total[i] = pnml::full_complexity(error[i], parametric[i], ekfac.n);
  }
  MislabelAurocs out;
  out.total = eval::auroc(total, flip_labels);
  out.error = eval::auroc(error, flip_labels);
  out.parametric = eval::auroc(parametric, flip_labels);
  return out;
}

}  // namespace

nlohmann::json run_mislabel(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  // With no flips the AUROC below raises the single-class error.
  std::vector<int> flips(bundle.train.size(), 0);
  if (bundle.noise) {
    flips.assign(bundle.noise->flipped.begin(), bundle.noise->flipped.end());
  }

  // Checkpointed training so the error/complexity tradeoff can be traced.
  std::vector<std::pair<int, model::MlpParams>> checkpoints;
  const train::TrainConfig tc = make_train_config(cfg);
  {
    const int every = cfg.task.checkpoint_every;
    train::TrainCurve curve;
    model::MlpParams params = train::train_weighted(
        bundle.train, Vector(bundle.train.size(), 1.0), cfg.model.hidden, tc,
        &curve, [&](int epoch, const model::MlpParams& p) {
          if (every > 0 && epoch % every == 0 && epoch != tc.epochs) {
            checkpoints.emplace_back(epoch, p);
          }
        });
    checkpoints.emplace_back(tc.epochs, std::move(params));
  }

  nlohmann::json trace = nlohmann::json::array();
  MislabelAurocs final_aurocs;
  for (const auto& [epoch, params] : checkpoints) {
    const MislabelAurocs a = mislabel_aurocs(params, cfg, bundle.train, flips);
    trace.push_back({{"epoch", epoch},
                     {"auroc_total", a.total},
                     {"auroc_error", a.error},
                     {"auroc_par", a.parametric}});
    final_aurocs = a;
  }

  // Baselines at the final checkpoint. Self-influence always scores at
  // beta = 1, so it gets its own curvature fit.
  const model::MlpParams& final_params = checkpoints.back().second;
  const double beta = cfg.curvature.beta;
  const curvature::EkfacState self_curv = curvature::fit_ekfac(
      final_params, bundle.train, 1.0, cfg.curvature.delta, expectation_of(cfg),
      derive_seed(cfg.seed, "curvature-self"));
  std::vector<double> self_scores(bundle.train.size()),
      grad_scores(bundle.train.size());
  for (std::size_t i = 0; i < bundle.train.size(); ++i) {
    const Vector x = bundle.train.example(i);
    self_scores[i] =
        influence::self_influence(self_curv, final_params, x, bundle.train.labels[i]);
    grad_scores[i] = influence::grad_norm(final_params, x, beta);
  }

  nlohmann::json report = make_report("mislabel", cfg);
  report["metrics"]["auroc_ifcomp"] = final_aurocs.total;
  report["metrics"]["auroc_error"] = final_aurocs.error;
  report["metrics"]["auroc_par"] = final_aurocs.parametric;
  report["metrics"]["auroc_self_influence"] = eval::auroc(self_scores, flips);
  report["metrics"]["auroc_grad_norm"] = eval::auroc(grad_scores, flips);
  report["metrics"]["noise_rate"] = cfg.data.noise_rate;
  report["metrics"]["noise_kind"] = cfg.data.noise_kind;
  report["metrics"]["trace"] = trace;
  write_report(report, cfg.paths.out_dir, "mislabel_report.json");

  fs::create_directories(cfg.paths.out_dir);
  std::ofstream trace_csv(cfg.paths.out_dir + "/mislabel_trace.csv", std::ios::trunc);
  trace_csv << "epoch,auroc_total,auroc_error,auroc_par\n";
  for (const auto& row : trace) {
    trace_csv << row["epoch"] << "," << row["auroc_total"] << ","
              << row["auroc_error"] << "," << row["auroc_par"] << "\n";
  }
  return report;
}

nlohmann::json run_ood(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  const model::MlpParams params =
      train::train_base(bundle.train, cfg.model.hidden, make_train_config(cfg));
  const double beta = cfg.curvature.beta;
  const curvature::EkfacState ekfac =
      curvature::fit_ekfac(params, bundle.train, beta, cfg.curvature.delta,
                           expectation_of(cfg), derive_seed(cfg.seed, "curvature"));

  auto score_set = [&](const data::Dataset& set, std::vector<double>& par,
                       std::vector<double>& grad, std::vector<double>& neg_conf) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Vector x = set.example(i);
      const auto trace = model::forward(params, x);
      const Vector probs = model::softmax_temp(trace.logits(), beta);
      const auto bif = influence::bif_all_labels(ekfac, params, x, beta);
      par.push_back(pnml::parametric_complexity(bif, probs));
      grad.push_back(influence::grad_norm(params, x, beta));
      neg_conf.push_back(1.0 - *std::max_element(probs.begin(), probs.end()));
    }
  };

  nlohmann::json kinds = nlohmann::json::object();
  const std::pair<const char*, data::OodKind> all_kinds[] = {
      {"disjoint_classes", data::OodKind::DisjointClasses},
      {"uniform_noise", data::OodKind::UniformNoise},
      {"shifted_blobs", data::OodKind::ShiftedBlobs}};
  for (const auto& [name, kind] : all_kinds) {
    if (kind != data::OodKind::UniformNoise && !bundle.test.blobs) continue;
    const data::OodSplit split = data::make_ood_split(
        bundle.test, kind, derive_seed(cfg.seed, std::string("ood-") + name));
    std::vector<double> par, grad, neg_conf;
    std::vector<int> labels;
    score_set(split.id_test, par, grad, neg_conf);
    labels.assign(par.size(), 0);
    score_set(split.ood_test, par, grad, neg_conf);
    labels.resize(par.size(), 1);
    kinds[name] = {{"auroc_par_comp", eval::auroc(par, labels)},
                   {"auroc_grad_norm", eval::auroc(grad, labels)},
                   {"auroc_neg_max_prob", eval::auroc(neg_conf, labels)},
                   {"n_id", split.id_test.size()},
                   {"n_ood", split.ood_test.size()}};
  }

  nlohmann::json report = make_report("ood", cfg);
  report["metrics"]["kinds"] = kinds;
  write_report(report, cfg.paths.out_dir, "ood_report.json");
  return report;
}

nlohmann::json run_prune(const config::RunConfig& cfg) {
  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<double> fractions = cfg.task.fractions;
  std::sort(fractions.begin(), fractions.end());

  std::map<double, std::vector<double>> acc_if, acc_rand;
  std::vector<double> acc_full;

  for (int s = 0; s < cfg.task.prune_seeds; ++s) {
    config::RunConfig seed_cfg = cfg;
    seed_cfg.seed = derive_seed(cfg.seed, "prune-seed-" + std::to_string(s));
    const DataBundle bundle = build_data(seed_cfg);
    const train::TrainConfig tc = make_train_config(seed_cfg);
    const model::MlpParams base =
        train::train_base(bundle.train, cfg.model.hidden, tc);

    auto accuracy_on_test = [&](const model::MlpParams& m) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < bundle.test.size(); ++i) {
        const auto trace = model::forward(m, bundle.test.example(i));
        const auto& logits = trace.logits();
        const auto best = std::max_element(logits.begin(), logits.end());
        if (static_cast<int>(best - logits.begin()) == bundle.test.labels[i]) ++hits;
      }
      return static_cast<double>(hits) / static_cast<double>(bundle.test.size());
    };
    const double full_acc = accuracy_on_test(base);
    acc_full.push_back(full_acc);

    const double beta = cfg.curvature.beta;
    const curvature::EkfacState ekfac = curvature::fit_ekfac(
        base, bundle.train, beta, cfg.curvature.delta, expectation_of(cfg),
        derive_seed(seed_cfg.seed, "curvature"));
    const auto scored =
        score_examples(base, ekfac, bundle.train, beta, cfg.workers);
    std::vector<double> totals(scored.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
      const double err =
          -std::log(scored[i].probs[static_cast<std::size_t>(scored[i].label)]);
      totals[i] = pnml::full_complexity(
          err, pnml::parametric_complexity(scored[i].bif, scored[i].probs),
          ekfac.n);
    }
    std::vector<std::size_t> order(totals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return totals[a] < totals[b];
    });

    nlohmann::json seed_row;
    seed_row["seed_index"] = s;
    seed_row["acc_full"] = full_acc;
    nlohmann::json rows = nlohmann::json::array();
    for (const double f : fractions) {
      const auto pruned = static_cast<std::size_t>(
          std::llround(f * static_cast<double>(bundle.train.size())));
      const std::size_t kept = bundle.train.size() - pruned;

      // Lowest-complexity pruning: drop the first `pruned` of the ascending order.
      std::vector<std::size_t> keep_if(order.begin() + static_cast<std::ptrdiff_t>(pruned),
                                       order.end());
      std::sort(keep_if.begin(), keep_if.end());
      const model::MlpParams m_if =
          train::train_base(take_rows(bundle.train, keep_if), cfg.model.hidden, tc);

      std::vector<std::size_t> all(bundle.train.size());
      std::iota(all.begin(), all.end(), 0);
      Rng rng(derive_seed(seed_cfg.seed, "prune-random-" + std::to_string(f)));
      rng.shuffle(all);
      std::vector<std::size_t> keep_rand(all.begin(),
                                         all.begin() + static_cast<std::ptrdiff_t>(kept));
      std::sort(keep_rand.begin(), keep_rand.end());
      const model::MlpParams m_rand =
          train::train_base(take_rows(bundle.train, keep_rand), cfg.model.hidden, tc);

      const double a_if = accuracy_on_test(m_if);
      const double a_rand = accuracy_on_test(m_rand);
      acc_if[f].push_back(a_if);
      acc_rand[f].push_back(a_rand);
      rows.push_back({{"fraction", f}, {"acc_ifcomp", a_if}, {"acc_random", a_rand}});
    }
    seed_row["rows"] = rows;
    per_seed.push_back(seed_row);
  }

  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };

  nlohmann::json curve = nlohmann::json::array();
  for (const double f : fractions) {
    curve.push_back({{"fraction", f},
                     {"acc_ifcomp_mean", mean(acc_if[f])},
                     {"acc_random_mean", mean(acc_rand[f])}});
  }

  nlohmann::json report = make_report("prune", cfg);
  report["metrics"]["acc_full_mean"] = mean(acc_full);
  report["metrics"]["curve"] = curve;
  report["metrics"]["per_seed"] = per_seed;
  write_report(report, cfg.paths.out_dir, "prune_report.json");

  fs::create_directories(cfg.paths.out_dir);
  std::ofstream csv(cfg.paths.out_dir + "/prune_curve.csv", std::ios::trunc);
  csv << "fraction,acc_ifcomp_mean,acc_random_mean\n";
  for (const auto& row : curve) {
    csv << row["fraction"] << "," << row["acc_ifcomp_mean"] << ","
        << row["acc_random_mean"] << "\n";
  }
  return report;
}

nlohmann::json run_validate_oracle(const config::RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const DataBundle bundle = build_data(cfg);
  const model::MlpParams params =
      train::train_base(bundle.train, cfg.model.hidden, make_train_config(cfg));
  const double beta = cfg.curvature.beta;
  const curvature::EkfacState ekfac =
      curvature::fit_ekfac(params, bundle.train, beta, cfg.curvature.delta,
                           expectation_of(cfg), derive_seed(cfg.seed, "curvature"));
  const train::BpboConfig bpbo = make_bpbo_config(cfg, bundle.train.size());

  // Probe mix: half in-distribution test points, a quarter corrupted, a
  // quarter shifted off-distribution, to spread the complexity range.
  const std::size_t probes = static_cast<std::size_t>(cfg.task.probes);
  const std::size_t n_id = probes / 2;
  const std::size_t n_corrupt = probes / 4;
  const std::size_t n_shift = probes - n_id - n_corrupt;
  std::vector<Vector> probe_points;
  for (std::size_t i = 0; i < n_id && i < bundle.test.size(); ++i) {
    probe_points.push_back(bundle.test.example(i));
  }
  const data::Dataset corrupted =
      data::corrupt(bundle.test, 3, corrupt_kind_of(cfg.data.corrupt_kind),
                    derive_seed(cfg.seed, "probe-corrupt"));
  for (std::size_t i = 0; i < n_corrupt && i < corrupted.size(); ++i) {
    probe_points.push_back(corrupted.example(i));
  }
  if (bundle.test.blobs) {
    const data::OodSplit shift = data::make_ood_split(
        bundle.test, data::OodKind::ShiftedBlobs, derive_seed(cfg.seed, "probe-shift"));
    for (std::size_t i = 0; i < n_shift && i < shift.ood_test.size(); ++i) {
      probe_points.push_back(shift.ood_test.example(i));
    }
  }

  const std::size_t classes = static_cast<std::size_t>(bundle.train.num_classes);
  std::vector<double> estimates, oracle_values;
  nlohmann::json pairs = nlohmann::json::array();
  for (const Vector& x : probe_points) {
    const auto trace = model::forward(params, x);
    const Vector probs = model::softmax_temp(trace.logits(), beta);
    const auto bif = influence::bif_all_labels(ekfac, params, x, beta);
    const double estimate = pnml::parametric_complexity(bif, probs);

    Vector oracle_probs(classes);
    for (std::size_t y = 0; y < classes; ++y) {
      const auto result =
          train::bpbo_finetune(params, bundle.train, x, static_cast<int>(y), bpbo);
      const auto star_trace = model::forward(result.params, x);
      oracle_probs[y] = model::softmax_temp(star_trace.logits(), beta)[y];
    }
    const double oracle = pnml::boltzmann_pnml_exact(oracle_probs).log_normalizer;
    estimates.push_back(estimate);
    oracle_values.push_back(oracle);
    pairs.push_back({{"estimate", estimate}, {"oracle", oracle}});
  }

  const double r = eval::pearson_r(estimates, oracle_values);
  const auto t1 = std::chrono::steady_clock::now();

  nlohmann::json report = make_report("validate-oracle", cfg);
  report["metrics"]["pearson_r"] = r;
  report["metrics"]["probes"] = probe_points.size();
  report["metrics"]["pairs"] = pairs;
  report["metrics"]["elapsed_seconds"] =
      std::chrono::duration<double>(t1 - t0).count();
  write_report(report, cfg.paths.out_dir, "validate_oracle_report.json");
  return report;
}

nlohmann::json run_bench(const config::RunConfig& cfg) {
  const DataBundle bundle = build_data(cfg);
  const model::MlpParams params =
      train::train_base(bundle.train, cfg.model.hidden, make_train_config(cfg));
  const double beta = cfg.curvature.beta;
  const curvature::EkfacState ekfac =
      curvature::fit_ekfac(params, bundle.train, beta, cfg.curvature.delta,
                           expectation_of(cfg), derive_seed(cfg.seed, "curvature"));

  eval::TimingInputs fast;
  fast.params = &params;
  fast.ekfac = &ekfac;
  fast.train = &bundle.train;
  fast.bpbo = make_bpbo_config(cfg, bundle.train.size());
  fast.pnml = pnml::PnmlConfig{cfg.pnml.alpha, beta, ekfac.n};
  for (std::size_t i = 0;
       i < std::min<std::size_t>(static_cast<std::size_t>(cfg.task.bench_examples),
                                 bundle.test.size());
       ++i) {
    fast.inputs.push_back(bundle.test.example(i));
  }

  eval::TimingInputs slow = fast;
  slow.inputs.resize(std::min<std::size_t>(
      static_cast<std::size_t>(cfg.task.oracle_examples), slow.inputs.size()));

  const double t_ifcomp =
      eval::time_scoring(eval::ScoringMethod::IfComp, fast, cfg.task.reps);
  const double t_gradnorm =
      eval::time_scoring(eval::ScoringMethod::GradNorm, fast, cfg.task.reps);
  const double t_oracle =
      eval::time_scoring(eval::ScoringMethod::BpboOracle, slow, 1);

  nlohmann::json report = make_report("bench", cfg);
  report["metrics"]["seconds_per_example"] = {{"ifcomp", t_ifcomp},
                                              {"grad_norm", t_gradnorm},
                                              {"bpbo_oracle", t_oracle}};
  report["metrics"]["oracle_speedup"] = t_oracle / t_ifcomp;
  report["metrics"]["gradnorm_overhead"] = t_ifcomp / t_gradnorm;
  write_report(report, cfg.paths.out_dir, "bench_report.json");
  return report;
}

nlohmann::json run_task(const config::RunConfig& cfg, const std::string& task) {
  if (task == "calibrate") return run_calibrate(cfg);
  if (task == "mislabel") return run_mislabel(cfg);
  if (task == "ood") return run_ood(cfg);
  if (task == "prune") return run_prune(cfg);
  if (task == "validate-oracle") return run_validate_oracle(cfg);
  if (task == "bench") return run_bench(cfg);
  throw ConfigError("unknown task: " + task);
}

}  // namespace ifcomp::tasks
