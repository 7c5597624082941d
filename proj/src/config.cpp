#include "ifcomp/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ifcomp::config {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for '" + key + "': " + value);
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for '" + key + "': " + value);
  }
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (!cell.empty()) out.push_back(parse_double(key, cell));
  }
  if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::size_t> out;
  for (const double v : parse_double_list(key, value)) {
    if (v < 0 || v != std::floor(v)) {
      throw ConfigError("config: '" + key + "' entries must be nonnegative integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(workers >= 1, "workers must be >= 1");
  require(!model.hidden.empty(), "model.hidden must name at least one layer");
  for (const std::size_t h : model.hidden)
    require(h >= 1, "model.hidden entries must be >= 1");

  require(train.lr > 0.0 && std::isfinite(train.lr), "train.lr must be > 0");
  require(train.momentum >= 0.0 && train.momentum < 1.0,
          "train.momentum must be in [0, 1)");
  require(train.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  require(train.epochs >= 0, "train.epochs must be >= 0");
  require(train.batch_size >= 1, "train.batch must be >= 1");

  require(curvature.beta > 0.0 && std::isfinite(curvature.beta),
          "curvature.beta must be > 0");
  require(curvature.delta > 0.0 && std::isfinite(curvature.delta),
          "curvature.delta must be > 0");
  require(curvature.expectation == "exact" || curvature.expectation == "sampled",
          "curvature.expectation must be exact or sampled");

  require(pnml.alpha >= 0.0 && std::isfinite(pnml.alpha), "pnml.alpha must be >= 0");
  require(pnml.beta > 0.0 && std::isfinite(pnml.beta), "pnml.beta must be > 0");

  require(bpbo.steps >= 0, "bpbo.steps must be >= 0");
  require(bpbo.lr > 0.0, "bpbo.lr must be > 0");

  require(data.source == "blobs" || data.source == "manifest" || data.source == "idx",
          "data.source must be blobs, manifest, or idx");
  require(data.classes >= 2, "data.classes must be >= 2");
  require(data.dim >= 2, "data.dim must be >= 2");
  require(data.spread > 0.0, "data.spread must be > 0");
  require(data.noise_rate >= 0.0 && data.noise_rate < 1.0,
          "data.noise_rate must be in [0, 1)");
  require(data.noise_kind == "symmetric" || data.noise_kind == "asymmetric",
          "data.noise_kind must be symmetric or asymmetric");
  require(data.corrupt_kind == "gaussian_noise" || data.corrupt_kind == "pixel_blur" ||
              data.corrupt_kind == "mask",
          "data.corrupt_kind must be gaussian_noise, pixel_blur, or mask");
  require(data.ood_kind == "disjoint_classes" || data.ood_kind == "uniform_noise" ||
              data.ood_kind == "shifted_blobs",
          "data.ood_kind must be disjoint_classes, uniform_noise, or shifted_blobs");

  require(task.probes >= 1, "task.probes must be >= 1");
  require(task.checkpoint_every >= 0, "task.checkpoint_every must be >= 0");
  for (const double f : task.fractions)
    require(f > 0.0 && f < 1.0, "task.fractions must be in (0, 1)");
  require(task.prune_seeds >= 1, "task.prune_seeds must be >= 1");
  require(task.reps >= 1, "task.reps must be >= 1");
  require(task.draws >= 1, "task.draws must be >= 1");
  for (const double a : task.alpha_grid)
    require(a >= 0.0, "task.alpha_grid entries must be >= 0");
  require(task.split == "train" || task.split == "val" || task.split == "test",
          "task.split must be train, val, or test");
  require(task.bench_examples >= 1, "task.bench_examples must be >= 1");
  require(task.oracle_examples >= 1, "task.oracle_examples must be >= 1");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;

  auto fail = [&](const std::string& what) {
    throw ConfigError("config " + origin + ":" + std::to_string(line_no) + ": " +
                      what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header: " + line);
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "curvature" &&
          section != "pnml" && section != "bpbo" && section != "data" &&
          section != "task" && section != "paths") {
        fail("unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");

    if (section.empty()) {
      if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
      } else if (key == "workers") {
        cfg.workers = static_cast<int>(parse_int(key, value));
      } else {
        fail("unknown top-level key '" + key + "'");
      }
    } else if (section == "model") {
      if (key == "hidden") cfg.model.hidden = parse_size_list(key, value);
      else fail("unknown key '" + key + "' in [model]");
    } else if (section == "train") {
      if (key == "lr") cfg.train.lr = parse_double(key, value);
      else if (key == "momentum") cfg.train.momentum = parse_double(key, value);
      else if (key == "weight_decay") cfg.train.weight_decay = parse_double(key, value);
      else if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
      else if (key == "batch") cfg.train.batch_size = static_cast<std::size_t>(parse_int(key, value));
      else fail("unknown key '" + key + "' in [train]");
    } else if (section == "curvature") {
      if (key == "beta") cfg.curvature.beta = parse_double(key, value);
      else if (key == "delta") cfg.curvature.delta = parse_double(key, value);
      else if (key == "expectation") cfg.curvature.expectation = value;
      else fail("unknown key '" + key + "' in [curvature]");
    } else if (section == "pnml") {
      if (key == "alpha") cfg.pnml.alpha = parse_double(key, value);
      else if (key == "beta") cfg.pnml.beta = parse_double(key, value);
      else fail("unknown key '" + key + "' in [pnml]");
    } else if (section == "bpbo") {
      if (key == "lambda") cfg.bpbo.lambda = parse_double(key, value);
      else if (key == "steps") cfg.bpbo.steps = static_cast<int>(parse_int(key, value));
      else if (key == "lr") cfg.bpbo.lr = parse_double(key, value);
      else if (key == "epsilon") cfg.bpbo.epsilon_weight = parse_double(key, value);
      else fail("unknown key '" + key + "' in [bpbo]");
    } else if (section == "data") {
      if (key == "source") cfg.data.source = value;
      else if (key == "classes") cfg.data.classes = static_cast<int>(parse_int(key, value));
      else if (key == "dim") cfg.data.dim = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "n_train") cfg.data.n_train = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "n_val") cfg.data.n_val = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "n_test") cfg.data.n_test = static_cast<std::size_t>(parse_int(key, value));
      else if (key == "spread") cfg.data.spread = parse_double(key, value);
      else if (key == "noise_kind") cfg.data.noise_kind = value;
      else if (key == "noise_rate") cfg.data.noise_rate = parse_double(key, value);
      else if (key == "corrupt_kind") cfg.data.corrupt_kind = value;
      else if (key == "ood_kind") cfg.data.ood_kind = value;
      else if (key == "manifest") cfg.data.manifest = value;
      else if (key == "idx_images") cfg.data.idx_images = value;
      else if (key == "idx_labels") cfg.data.idx_labels = value;
      else fail("unknown key '" + key + "' in [data]");
    } else if (section == "task") {
      if (key == "probes") cfg.task.probes = static_cast<int>(parse_int(key, value));
      else if (key == "checkpoint_every") cfg.task.checkpoint_every = static_cast<int>(parse_int(key, value));
      else if (key == "fractions") cfg.task.fractions = parse_double_list(key, value);
      else if (key == "prune_seeds") cfg.task.prune_seeds = static_cast<int>(parse_int(key, value));
      else if (key == "reps") cfg.task.reps = static_cast<int>(parse_int(key, value));
      else if (key == "draws") cfg.task.draws = static_cast<int>(parse_int(key, value));
      else if (key == "alpha_grid") cfg.task.alpha_grid = parse_double_list(key, value);
      else if (key == "split") cfg.task.split = value;
      else if (key == "bench_examples") cfg.task.bench_examples = static_cast<int>(parse_int(key, value));
      else if (key == "oracle_examples") cfg.task.oracle_examples = static_cast<int>(parse_int(key, value));
      else fail("unknown key '" + key + "' in [task]");
    } else if (section == "paths") {
      if (key == "out_dir") cfg.paths.out_dir = value;
      else if (key == "checkpoint") cfg.paths.checkpoint = value;
      else if (key == "curvature") cfg.paths.curvature = value;
      else if (key == "dataset") cfg.paths.dataset = value;
      else fail("unknown key '" + key + "' in [paths]");
    }
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

}  // namespace ifcomp::config
