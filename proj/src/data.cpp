#include "ifcomp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace ifcomp::data {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path,
                          std::size_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in.good()) {
    throw FormatError("idx: truncated header in " + path + " at offset " +
                      std::to_string(offset));
  }
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) |
         static_cast<std::uint32_t>(buf[3]);
}

std::size_t file_size(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open file: " + path);
  return static_cast<std::size_t>(in.tellg());
}

// %.17g round-trips doubles exactly.
void format_double_exact(char* buf, std::size_t cap, double v) {
  std::snprintf(buf, cap, "%.17g", v);
}

}  // namespace

Vector Dataset::example(std::size_t i) const {
  Vector x(features.cols);
  for (std::size_t j = 0; j < features.cols; ++j) x[j] = features(i, j);
  return x;
}

NormStats fit_norm_stats(const linalg::Matrix& raw) {
  NormStats stats;
  stats.mean.assign(raw.cols, 0.0);
  stats.stdev.assign(raw.cols, 1.0);
  if (raw.rows == 0) return stats;
  for (std::size_t i = 0; i < raw.rows; ++i)
    for (std::size_t j = 0; j < raw.cols; ++j) stats.mean[j] += raw(i, j);
  for (double& m : stats.mean) m /= static_cast<double>(raw.rows);
  Vector var(raw.cols, 0.0);
  for (std::size_t i = 0; i < raw.rows; ++i)
    for (std::size_t j = 0; j < raw.cols; ++j) {
      const double d = raw(i, j) - stats.mean[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < raw.cols; ++j) {
    const double s = std::sqrt(var[j] / static_cast<double>(raw.rows));
    stats.stdev[j] = s > 1e-12 ? s : 1.0;  // constant features map to 0
  }
  return stats;
}

linalg::Matrix apply_norm_stats(const linalg::Matrix& raw, const NormStats& stats) {
  if (raw.cols != stats.mean.size()) {
    throw DimensionError("apply_norm_stats: feature dimension mismatch");
  }
  linalg::Matrix out(raw.rows, raw.cols);
  for (std::size_t i = 0; i < raw.rows; ++i)
    for (std::size_t j = 0; j < raw.cols; ++j)
      out(i, j) = (raw(i, j) - stats.mean[j]) / stats.stdev[j];
  return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw FormatError("cannot open file: " + images_path);
  const std::uint32_t img_magic = read_be_u32(images, images_path, 0);
  if (img_magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << "idx: bad image magic 0x" << std::hex << img_magic << " at offset 0 in "
        << images_path;
    throw FormatError(msg.str());
  }
  const std::uint32_t count = read_be_u32(images, images_path, 4);
  const std::uint32_t rows = read_be_u32(images, images_path, 8);
  const std::uint32_t cols = read_be_u32(images, images_path, 12);
  const std::size_t expected_bytes =
      16 + static_cast<std::size_t>(count) * rows * cols;
  const std::size_t actual_bytes = file_size(images_path);
  if (actual_bytes != expected_bytes) {
    throw FormatError("idx: " + images_path + " has " +
                      std::to_string(actual_bytes) + " bytes, expected " +
                      std::to_string(expected_bytes));
  }

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw FormatError("cannot open file: " + labels_path);
  const std::uint32_t lab_magic = read_be_u32(labels, labels_path, 0);
  if (lab_magic != kIdxLabelsMagic) {
    std::ostringstream msg;
    msg << "idx: bad label magic 0x" << std::hex << lab_magic << " at offset 0 in "
        << labels_path;
    throw FormatError(msg.str());
  }
  const std::uint32_t lab_count = read_be_u32(labels, labels_path, 4);
  if (lab_count != count) {
    throw FormatError("idx: image count " + std::to_string(count) +
                      " does not match label count " + std::to_string(lab_count));
  }
  const std::size_t expected_label_bytes = 8 + lab_count;
  const std::size_t actual_label_bytes = file_size(labels_path);
  if (actual_label_bytes != expected_label_bytes) {
    throw FormatError("idx: " + labels_path + " has " +
                      std::to_string(actual_label_bytes) + " bytes, expected " +
                      std::to_string(expected_label_bytes));
  }

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  linalg::Matrix raw(count, dim);
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    images.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(dim));
    for (std::size_t j = 0; j < dim; ++j)
      raw(i, j) = static_cast<double>(buf[j]) / 255.0;
  }

  Dataset out;
  out.labels.resize(count);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char l = 0;
    labels.read(reinterpret_cast<char*>(&l), 1);
    out.labels[i] = static_cast<int>(l);
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = max_label + 1;
  out.stats = fit_norm_stats(raw);
  out.features = apply_norm_stats(raw, out.stats);
  out.provenance = "idx:" + images_path;
  return out;
}

Dataset synth_blobs(int classes, std::size_t dim, std::size_t per_class,
                    double spread, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("synth_blobs: need at least 2 classes");
  if (dim < 2) throw ConfigError("synth_blobs: need at least 2 dimensions");
  Rng rng(seed);

  linalg::Matrix centers(static_cast<std::size_t>(classes), dim);
  for (double& c : centers.data) c = rng.uniform(-3.0, 3.0);

  const std::size_t n = static_cast<std::size_t>(classes) * per_class;
  linalg::Matrix raw(n, dim);
  Dataset out;
  out.labels.resize(n);
  std::size_t row = 0;
  for (int k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      out.labels[row] = k;
      for (std::size_t j = 0; j < dim; ++j)
        raw(row, j) = centers(static_cast<std::size_t>(k), j) + spread * rng.normal();
    }
  }

  // Monte Carlo estimate of the Bayes-optimal accuracy: equal priors and
  // isotropic class covariances make the optimal rule nearest-center.
  Rng bayes_rng(derive_seed(seed, "bayes"));
  const std::size_t probes = 4000;
  std::size_t hits = 0;
  Vector x(dim);
  for (std::size_t i = 0; i < probes; ++i) {
    const int k = static_cast<int>(bayes_rng.uniform_int(0, classes - 1));
    for (std::size_t j = 0; j < dim; ++j)
      x[j] = centers(static_cast<std::size_t>(k), j) + spread * bayes_rng.normal();
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = x[j] - centers(static_cast<std::size_t>(c), j);
        d2 += d * d;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    if (best == k) ++hits;
  }

  out.num_classes = classes;
  out.stats = fit_norm_stats(raw);
  out.features = apply_norm_stats(raw, out.stats);
  out.provenance = "blobs:seed=" + std::to_string(seed);
  out.blobs = BlobInfo{centers, spread,
                       static_cast<double>(hits) / static_cast<double>(probes)};
  return out;
}

namespace {

std::vector<std::size_t> pick_flip_indices(std::size_t n, double rate, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto count = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(n)));
  order.resize(count);
  return order;
}

}  // namespace

std::pair<Dataset, NoiseRecord> inject_symmetric_noise(const Dataset& dataset,
                                                       double rate,
                                                       std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("noise rate must be in [0, 1)");
  Dataset noised = dataset;
  NoiseRecord record;
  record.flipped.assign(dataset.size(), 0);
  record.original_labels = dataset.labels;
  record.kind = "symmetric";
  record.rate = rate;

  Rng rng(seed);
  for (const std::size_t i : pick_flip_indices(dataset.size(), rate, rng)) {
    const int old_label = dataset.labels[i];
    // Uniform over the K-1 other labels.
    int offset = static_cast<int>(rng.uniform_int(1, dataset.num_classes - 1));
    noised.labels[i] = (old_label + offset) % dataset.num_classes;
    record.flipped[i] = 1;
  }
  noised.provenance = dataset.provenance + "+sym_noise";
  return {std::move(noised), std::move(record)};
}

std::pair<Dataset, NoiseRecord> inject_asymmetric_noise(
    const Dataset& dataset, const std::vector<int>& mapping, double rate,
    std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("noise rate must be in [0, 1)");
  if (mapping.size() != static_cast<std::size_t>(dataset.num_classes)) {
    throw ConfigError("asymmetric map must cover all classes");
  }
  for (std::size_t y = 0; y < mapping.size(); ++y) {
    if (mapping[y] == static_cast<int>(y)) {
      throw ConfigError("asymmetric map has fixed point at class " +
                        std::to_string(y));
    }
    if (mapping[y] < 0 || mapping[y] >= dataset.num_classes) {
      throw ConfigError("asymmetric map target out of range");
    }
  }

  Dataset noised = dataset;
  NoiseRecord record;
  record.flipped.assign(dataset.size(), 0);
  record.original_labels = dataset.labels;
  record.kind = "asymmetric";
  record.rate = rate;

  Rng rng(seed);
  for (const std::size_t i : pick_flip_indices(dataset.size(), rate, rng)) {
    noised.labels[i] = mapping[static_cast<std::size_t>(dataset.labels[i])];
    record.flipped[i] = 1;
  }
  noised.provenance = dataset.provenance + "+asym_noise";
  return {std::move(noised), std::move(record)};
}

std::vector<int> cyclic_label_map(int classes) {
  std::vector<int> map(static_cast<std::size_t>(classes));
  for (int y = 0; y < classes; ++y)
    map[static_cast<std::size_t>(y)] = (y + 1) % classes;
  return map;
}

Dataset corrupt(const Dataset& dataset, int severity, CorruptKind kind,
                std::uint64_t seed) {
  if (severity < 0 || severity > 5) {
    throw ConfigError("corruption severity must be in 0..5");
  }
  Dataset out = dataset;
  if (severity == 0) return out;
  const std::size_t s = static_cast<std::size_t>(severity - 1);
  Rng rng(seed);

  switch (kind) {
    case CorruptKind::GaussianNoise: {
      static constexpr double kSigma[5] = {0.05, 0.1, 0.2, 0.4, 0.8};
      for (double& v : out.features.data) v += kSigma[s] * rng.normal();
      out.provenance += "+gaussian_noise" + std::to_string(severity);
      break;
    }
    case CorruptKind::PixelBlur: {
      static constexpr double kMix[5] = {0.15, 0.3, 0.5, 0.7, 0.9};
      const double w = kMix[s];
      const std::size_t d = dataset.dim();
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        Vector row = dataset.example(i);
        for (std::size_t j = 0; j < d; ++j) {
          const double left = row[j > 0 ? j - 1 : 0];
          const double right = row[j + 1 < d ? j + 1 : d - 1];
          const double local = (left + row[j] + right) / 3.0;
          out.features(i, j) = (1.0 - w) * row[j] + w * local;
        }
      }
      out.provenance += "+pixel_blur" + std::to_string(severity);
      break;
    }
    case CorruptKind::Mask: {
      static constexpr double kFraction[5] = {0.1, 0.2, 0.3, 0.45, 0.6};
      const std::size_t d = dataset.dim();
      const auto masked = static_cast<std::size_t>(
          std::llround(kFraction[s] * static_cast<double>(d)));
      std::vector<std::size_t> idx(d);
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        // Zero in normalized space is the feature mean.
        for (std::size_t m = 0; m < masked; ++m) out.features(i, idx[m]) = 0.0;
      }
      out.provenance += "+mask" + std::to_string(severity);
      break;
    }
  }
  return out;
}

namespace {

Dataset blobs_at_centers(const linalg::Matrix& centers, double spread,
                         std::size_t total, const NormStats& stats, Rng& rng,
                         const std::string& provenance) {
  const std::size_t dim = centers.cols;
  const std::size_t classes = centers.rows;
  linalg::Matrix raw(total, dim);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t k = i % classes;
    for (std::size_t j = 0; j < dim; ++j)
      raw(i, j) = centers(k, j) + spread * rng.normal();
  }
  Dataset out;
  out.features = apply_norm_stats(raw, stats);
  out.labels.assign(total, 0);
  out.num_classes = static_cast<int>(classes);
  out.has_labels = false;
  out.stats = stats;
  out.provenance = provenance;
  out.blobs = BlobInfo{centers, spread, 0.0};
  return out;
}

}  // namespace

OodSplit make_ood_split(const Dataset& id_dataset, OodKind kind,
                        std::uint64_t seed) {
  Rng rng(seed);
  OodSplit split;

  // ID side: a seeded permutation of the held-out data.
  std::vector<std::size_t> order(id_dataset.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  split.id_test = id_dataset;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = 0; j < id_dataset.dim(); ++j)
      split.id_test.features(i, j) = id_dataset.features(order[i], j);
    split.id_test.labels[i] = id_dataset.labels[order[i]];
  }
  split.id_test.provenance = id_dataset.provenance + "/id_test";

  const std::size_t n = id_dataset.size();
  const std::size_t d = id_dataset.dim();

  switch (kind) {
    case OodKind::UniformNoise: {
      Vector lo(d, std::numeric_limits<double>::infinity());
      Vector hi(d, -std::numeric_limits<double>::infinity());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          lo[j] = std::min(lo[j], id_dataset.features(i, j));
          hi[j] = std::max(hi[j], id_dataset.features(i, j));
        }
      Dataset ood;
      ood.features = linalg::Matrix(n, d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          ood.features(i, j) = rng.uniform(lo[j], hi[j]);
      ood.labels.assign(n, 0);
      ood.num_classes = id_dataset.num_classes;
      ood.has_labels = false;
      ood.stats = id_dataset.stats;
      ood.provenance = id_dataset.provenance + "/ood_uniform";
      split.ood_test = std::move(ood);
      break;
    }
    case OodKind::DisjointClasses: {
      if (!id_dataset.blobs) {
        throw ConfigError("disjoint_classes OOD needs blob provenance");
      }
      const auto& info = *id_dataset.blobs;
      const double min_dist = 6.0 * info.spread;
      linalg::Matrix centers(info.centers.rows, d);
      double box = 3.0 + min_dist;
      for (std::size_t k = 0; k < centers.rows; ++k) {
        int attempts = 0;
        while (true) {
          Vector c(d);
          for (std::size_t j = 0; j < d; ++j) c[j] = rng.uniform(-box, box);
          double closest = std::numeric_limits<double>::infinity();
          for (std::size_t k2 = 0; k2 < info.centers.rows; ++k2) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double diff = c[j] - info.centers(k2, j);
              d2 += diff * diff;
            }
            closest = std::min(closest, std::sqrt(d2));
          }
          if (closest >= min_dist) {
            for (std::size_t j = 0; j < d; ++j) centers(k, j) = c[j];
            break;
          }
          if (++attempts % 100 == 0) box *= 1.5;
        }
      }
      split.ood_test =
          blobs_at_centers(centers, info.spread, n, id_dataset.stats, rng,
                           id_dataset.provenance + "/ood_disjoint");
      break;
    }
    case OodKind::ShiftedBlobs: {
      if (!id_dataset.blobs) {
        throw ConfigError("shifted_blobs OOD needs blob provenance");
      }
      const auto& info = *id_dataset.blobs;
      linalg::Matrix centers = info.centers;
      const double shift = 3.0 * info.spread;
      for (std::size_t k = 0; k < centers.rows; ++k) {
        Vector dir(d);
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dir[j] = rng.normal();
          norm += dir[j] * dir[j];
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < d; ++j)
          centers(k, j) += shift * dir[j] / norm;
      }
      split.ood_test =
          blobs_at_centers(centers, info.spread, n, id_dataset.stats, rng,
                           id_dataset.provenance + "/ood_shifted");
      break;
    }
  }
  return split;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          std::size_t first_count,
                                          std::uint64_t seed) {
  if (first_count > dataset.size()) {
    throw ConfigError("split_dataset: first part larger than dataset");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  auto take = [&](std::size_t begin, std::size_t count, const char* tag) {
    Dataset part = dataset;
    part.features = linalg::Matrix(count, dataset.dim());
    part.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = order[begin + i];
      for (std::size_t j = 0; j < dataset.dim(); ++j)
        part.features(i, j) = dataset.features(src, j);
      part.labels[i] = dataset.labels[src];
    }
    part.provenance = dataset.provenance + tag;
    return part;
  };
  return {take(0, first_count, "/a"),
          take(first_count, dataset.size() - first_count, "/b")};
}

void save_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open csv for writing: " + path);
  for (std::size_t j = 0; j < dataset.dim(); ++j) out << "f" << j << ",";
  out << "label\n";
  char buf[40];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset.dim(); ++j) {
      format_double_exact(buf, sizeof(buf), dataset.features(i, j));
      out << buf << ",";
    }
    out << dataset.labels[i] << "\n";
  }
  if (!out.good()) throw FormatError("csv write failed: " + path);
}

Dataset load_csv(const std::string& path, int classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open csv: " + path);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("csv: empty file " + path);
  std::size_t dim = 0;
  {
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell != "label") ++dim;
    }
  }
  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::getline(ss, cell, ',')) {
        throw FormatError("csv: short row at line " + std::to_string(line_no));
      }
      values.push_back(std::stod(cell));
    }
    if (!std::getline(ss, cell, ',')) {
      throw FormatError("csv: missing label at line " + std::to_string(line_no));
    }
    labels.push_back(std::stoi(cell));
  }
  Dataset out;
  out.features = linalg::Matrix(labels.size(), dim, std::move(values));
  out.labels = std::move(labels);
  int max_label = 0;
  for (const int l : out.labels) max_label = std::max(max_label, l);
  out.num_classes = classes > 0 ? classes : max_label + 1;
  out.stats.mean.assign(dim, 0.0);
  out.stats.stdev.assign(dim, 1.0);
  out.provenance = "csv:" + path;
  return out;
}

void save_manifest(const Dataset& dataset, const std::string& json_path,
                   const std::string& csv_path) {
  save_csv(dataset, csv_path);
  nlohmann::json j;
  j["version"] = 1;
  j["provenance"] = dataset.provenance;
  j["num_classes"] = dataset.num_classes;
  j["has_labels"] = dataset.has_labels;
  j["features_csv"] = csv_path;
  j["stats"] = {{"mean", dataset.stats.mean}, {"stdev", dataset.stats.stdev}};
  if (dataset.blobs) {
    j["blobs"] = {{"rows", dataset.blobs->centers.rows},
                  {"cols", dataset.blobs->centers.cols},
                  {"centers", dataset.blobs->centers.data},
                  {"spread", dataset.blobs->spread},
                  {"bayes_accuracy", dataset.blobs->bayes_accuracy}};
  }
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw FormatError("cannot open manifest for writing: " + json_path);
  out << j.dump(2) << "\n";
}

Dataset load_manifest(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw FormatError("cannot open manifest: " + json_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest parse error in " + json_path + ": " + e.what());
  }
  Dataset out = load_csv(j.at("features_csv").get<std::string>(),
                         j.at("num_classes").get<int>());
  out.has_labels = j.at("has_labels").get<bool>();
  out.provenance = j.at("provenance").get<std::string>();
  out.stats.mean = j.at("stats").at("mean").get<Vector>();
  out.stats.stdev = j.at("stats").at("stdev").get<Vector>();
  if (j.contains("blobs")) {
    BlobInfo info;
    info.centers = linalg::Matrix(j["blobs"].at("rows").get<std::size_t>(),
                                  j["blobs"].at("cols").get<std::size_t>(),
                                  j["blobs"].at("centers").get<Vector>());
    info.spread = j["blobs"].at("spread").get<double>();
    info.bayes_accuracy = j["blobs"].at("bayes_accuracy").get<double>();
    out.blobs = info;
  }
  return out;
}

}  // namespace ifcomp::data
