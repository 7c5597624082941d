#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ifcomp/tasks.hpp"

namespace {

constexpr const char* kCommands[] = {"train",    "fit-curvature", "score",
                                     "calibrate", "mislabel",      "ood",
                                     "prune",    "validate-oracle", "bench"};

int run(const std::string& command, const ifcomp::config::RunConfig& cfg) {
  using namespace ifcomp;
  nlohmann::json report;
  if (command == "train") {
    report = tasks::cmd_train(cfg);
  } else if (command == "fit-curvature") {
    report = tasks::cmd_fit_curvature(cfg);
  } else if (command == "score") {
    report = tasks::cmd_score(cfg);
  } else {
    report = tasks::run_task(cfg, command);
  }
  if (command == "fit-curvature") {
    const auto& layers = report["metrics"]["layers"];
    for (std::size_t l = 0; l < layers.size(); ++l) {
      std::cout << "layer " << l << ": corrected second moments in ["
                << layers[l]["moment_min"].get<double>() << ", "
                << layers[l]["moment_max"].get<double>() << "]\n";
    }
  }
  std::cout << report["task"].get<std::string>() << " done; report written under "
            << cfg.paths.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pNML scoring engine: influence-based complexity estimation for "
               "small MLP classifiers"};

  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  double alpha = 0.0, beta = 0.0, delta = 0.0;
  int workers = 0;
  std::string out_dir;

  app.add_option("command", command, "one of: train, fit-curvature, score, "
                                     "calibrate, mislabel, ood, prune, "
                                     "validate-oracle, bench")
      ->required();
  auto* opt_config = app.add_option("--config", config_path, "config file path");
  auto* opt_seed = app.add_option("--seed", seed, "root seed override");
  auto* opt_alpha = app.add_option("--alpha", alpha, "pnml alpha override");
  auto* opt_beta = app.add_option("--beta", beta,
                                  "inverse temperature override (curvature and pnml)");
  auto* opt_delta = app.add_option("--delta", delta, "curvature damping override");
  auto* opt_workers = app.add_option("--workers", workers, "scoring worker count");
  auto* opt_out = app.add_option("--out-dir", out_dir, "output directory override");

  CLI11_PARSE(app, argc, argv);

  using namespace ifcomp;
  try {
    bool known = false;
    for (const char* c : kCommands) known = known || command == c;
    if (!known) throw ConfigError("unknown command: " + command);

    config::RunConfig cfg;
    if (opt_config->count() > 0) cfg = config::load_config(config_path);
    if (opt_seed->count() > 0) cfg.seed = seed;
    if (opt_alpha->count() > 0) cfg.pnml.alpha = alpha;
    if (opt_beta->count() > 0) {
      cfg.curvature.beta = beta;
      cfg.pnml.beta = beta;
    }
    if (opt_delta->count() > 0) cfg.curvature.delta = delta;
    if (opt_workers->count() > 0) cfg.workers = workers;
    if (opt_out->count() > 0) cfg.paths.out_dir = out_dir;
    cfg.validate();

    return run(command, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
