#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ifcomp/tasks.hpp"

using namespace ifcomp;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string stderr_text;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err_file = dir / "stderr.txt";
  const std::string cmd = std::string(IFCOMP_CLI_PATH) + " " + args + " 2>" +
                          err_file.string() + " >/dev/null";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream err(err_file);
  std::stringstream buf;
  buf << err.rdbuf();
  result.stderr_text = buf.str();
  return result;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("ifcomp_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path path = dir / "run.cfg";
  std::ofstream out(path);
  out << "seed = 11\n"
      << "[model]\nhidden = 8\n"
      << "[train]\nepochs = 10\nlr = 0.1\nbatch = 16\n"
      << "[curvature]\nbeta = 1\ndelta = 1e-4\n"
      << "[pnml]\nalpha = 1\nbeta = 1\n"
      << "[data]\nsource = blobs\nclasses = 3\ndim = 4\nn_train = 60\n"
      << "n_val = 20\nn_test = 20\nspread = 1.0\n"
      << "[paths]\nout_dir = " << (dir / "out").string() << "\n"
      << extra;
  return path;
}

/// Minimal structural validator for the published report schema: checks the
/// required list and the declared types/enums of known properties.
void check_against_schema(const nlohmann::json& report) {
  const auto schema = nlohmann::json::parse(
      read_file(fs::path(IFCOMP_SCHEMA_DIR) / "report.schema.json"));
  for (const auto& req : schema.at("required")) {
    CAPTURE(req.get<std::string>());
    CHECK(report.contains(req.get<std::string>()));
  }
  for (const auto& [name, spec] : schema.at("properties").items()) {
    if (!report.contains(name)) continue;
    const std::string type = spec.at("type").get<std::string>();
    const auto& value = report.at(name);
    if (type == "integer") CHECK(value.is_number_integer());
    if (type == "string") CHECK(value.is_string());
    if (type == "object") CHECK(value.is_object());
    if (spec.contains("enum")) {
      bool matched = false;
      for (const auto& candidate : spec.at("enum"))
        matched = matched || candidate == value;
      CHECK(matched);
    }
  }
}

}  // namespace

TEST_CASE("train writes a checkpoint and curve, byte-identical across reruns") {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg = write_config(dir);

  const auto first = run_cli("train --config " + cfg.string(), dir);
  REQUIRE(first.exit_code == 0);
  REQUIRE(fs::exists(dir / "out/checkpoint.bin"));
  REQUIRE(fs::exists(dir / "out/train_curve.csv"));
  const std::string checkpoint_bytes = read_file(dir / "out/checkpoint.bin");
  const std::string curve_bytes = read_file(dir / "out/train_curve.csv");

  const auto second = run_cli("train --config " + cfg.string(), dir);
  REQUIRE(second.exit_code == 0);
  CHECK(read_file(dir / "out/checkpoint.bin") == checkpoint_bytes);
  CHECK(read_file(dir / "out/train_curve.csv") == curve_bytes);

  check_against_schema(nlohmann::json::parse(read_file(dir / "out/train_report.json")));
  fs::remove_all(dir);
}

TEST_CASE("train with a missing dataset path exits 2 and names the path") {
  const fs::path dir = fresh_dir("missing");
  const fs::path cfg =
      write_config(dir, "[data]\nsource = manifest\nmanifest = /nonexistent/ds.json\n");
  const auto result = run_cli("train --config " + cfg.string(), dir);
  CHECK(result.exit_code == 2);
  CHECK(result.stderr_text.find("/nonexistent/ds.json") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("fit-curvature round-trips and rejects bad damping at parse time") {
  const fs::path dir = fresh_dir("curv");
  const fs::path cfg = write_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("fit-curvature --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(fs::exists(dir / "out/curvature.ekfac"));
  const auto state = curvature::load_ekfac((dir / "out/curvature.ekfac").string());
  CHECK(state.beta == 1.0);
  CHECK(state.n == 60);

  const std::string bytes = read_file(dir / "out/curvature.ekfac");
  REQUIRE(run_cli("fit-curvature --config " + cfg.string(), dir).exit_code == 0);
  CHECK(read_file(dir / "out/curvature.ekfac") == bytes);

  const auto bad = run_cli("fit-curvature --config " + cfg.string() + " --delta 0", dir);
  CHECK(bad.exit_code == 2);
  const auto bad_beta =
      run_cli("fit-curvature --config " + cfg.string() + " --beta -2", dir);
  CHECK(bad_beta.exit_code == 2);
  fs::remove_all(dir);
}

TEST_CASE("score emits one record per example and equals the library result") {
  const fs::path dir = fresh_dir("score");
  const fs::path cfg = write_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("fit-curvature --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("score --config " + cfg.string(), dir).exit_code == 0);

  std::ifstream jsonl(dir / "out/scores.jsonl");
  std::size_t lines = 0;
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(jsonl, line)) {
    if (!line.empty()) {
      records.push_back(nlohmann::json::parse(line));
      ++lines;
    }
  }
  CHECK(lines == 20);  // n_test

  // Library route on identical inputs.
  const auto run_cfg = config::load_config((dir / "run.cfg").string());
  const auto bundle = tasks::build_data(run_cfg);
  const auto params = model::load_params((dir / "out/checkpoint.bin").string());
  const auto state = curvature::load_ekfac((dir / "out/curvature.ekfac").string());
  const auto lib_records = tasks::score_dataset(params, state, bundle.test, run_cfg);
  REQUIRE(lib_records.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i]["par_comp"].get<double>() == lib_records[i].parametric);
    CHECK(records[i]["total"].get<double>() == *lib_records[i].total);
  }

  // Byte-for-byte reproducibility of the scoring artifacts.
  const std::string jsonl_bytes = read_file(dir / "out/scores.jsonl");
  REQUIRE(run_cli("score --config " + cfg.string(), dir).exit_code == 0);
  CHECK(read_file(dir / "out/scores.jsonl") == jsonl_bytes);
  fs::remove_all(dir);
}

TEST_CASE("score at alpha zero reproduces the checkpoint softmax") {
  const fs::path dir = fresh_dir("alpha0");
  const fs::path cfg = write_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("fit-curvature --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("score --config " + cfg.string() + " --alpha 0", dir).exit_code == 0);

  const auto run_cfg = config::load_config((dir / "run.cfg").string());
  const auto bundle = tasks::build_data(run_cfg);
  const auto params = model::load_params((dir / "out/checkpoint.bin").string());

  std::ifstream jsonl(dir / "out/scores.jsonl");
  std::string line;
  std::size_t i = 0;
  while (std::getline(jsonl, line)) {
    if (line.empty()) continue;
    const auto record = nlohmann::json::parse(line);
    const auto trace = model::forward(params, bundle.test.example(i));
    const Vector probs = model::softmax_temp(trace.logits(), 1.0);
    const auto pnml_dist = record["pnml"].get<Vector>();
    REQUIRE(pnml_dist.size() == probs.size());
    for (std::size_t y = 0; y < probs.size(); ++y)
      CHECK(pnml_dist[y] == probs[y]);
    ++i;
  }
  fs::remove_all(dir);
}

TEST_CASE("score rejects a beta mismatch against the curvature file") {
  const fs::path dir = fresh_dir("betamismatch");
  const fs::path cfg = write_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("fit-curvature --config " + cfg.string(), dir).exit_code == 0);
  const auto result = run_cli("score --config " + cfg.string() + " --beta 2", dir);
  CHECK(result.exit_code == 2);
  CHECK(result.stderr_text.find("beta") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("mislabel with rate zero exits 2 with the single-class error") {
  const fs::path dir = fresh_dir("mislabel0");
  const fs::path cfg = write_config(dir, "[data]\nnoise_rate = 0\n[train]\nepochs = 3\n");
  const auto result = run_cli("mislabel --config " + cfg.string(), dir);
  CHECK(result.exit_code == 2);
  CHECK(result.stderr_text.find("class") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("unknown command and unknown config keys exit 2") {
  const fs::path dir = fresh_dir("unknown");
  const auto bad_cmd = run_cli("frobnicate", dir);
  CHECK(bad_cmd.exit_code == 2);

  const fs::path cfg = dir / "bad.cfg";
  std::ofstream(cfg) << "instability = very\n";
  const auto bad_cfg = run_cli("train --config " + cfg.string(), dir);
  CHECK(bad_cfg.exit_code == 2);
  CHECK(bad_cfg.stderr_text.find("instability") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("ood task runs end to end and reports per-kind AUROCs") {
  const fs::path dir = fresh_dir("ood");
  const fs::path cfg = write_config(dir, "[train]\nepochs = 15\n");
  const auto result = run_cli("ood --config " + cfg.string(), dir);
  REQUIRE(result.exit_code == 0);
  const auto report =
      nlohmann::json::parse(read_file(dir / "out/ood_report.json"));
  check_against_schema(report);
  CHECK(report["metrics"]["kinds"].contains("disjoint_classes"));
  CHECK(report["metrics"]["kinds"].contains("uniform_noise"));
  CHECK(report["metrics"]["kinds"].contains("shifted_blobs"));
  for (const auto& [name, kind] : report["metrics"]["kinds"].items()) {
    const double auroc = kind["auroc_par_comp"].get<double>();
    CHECK(auroc >= 0.0);
    CHECK(auroc <= 1.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("score respects the workers flag without changing results") {
  const fs::path dir = fresh_dir("workers");
  const fs::path cfg = write_config(dir);
  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("fit-curvature --config " + cfg.string(), dir).exit_code == 0);
  REQUIRE(run_cli("score --config " + cfg.string(), dir).exit_code == 0);
  const std::string serial = read_file(dir / "out/scores.jsonl");
  REQUIRE(run_cli("score --config " + cfg.string() + " --workers 3", dir).exit_code == 0);
  CHECK(read_file(dir / "out/scores.jsonl") == serial);
  fs::remove_all(dir);
}
