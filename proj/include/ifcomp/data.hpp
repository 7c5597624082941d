#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "ifcomp/linalg.hpp"

namespace ifcomp::data {

/// Per-feature normalization statistics, persisted so test and OOD data can
/// reuse the training transform. Features with (near-)zero variance keep a
/// divisor of 1.
struct NormStats {
  Vector mean;
  Vector stdev;
};

/// Raw-space blob geometry kept for OOD construction and the Bayes-accuracy
/// estimate of generated datasets.
struct BlobInfo {
  linalg::Matrix centers;  // K x d, raw feature space
  double spread = 0.0;
  double bayes_accuracy = 0.0;
};

struct Dataset {
  linalg::Matrix features;  // n x d, normalized
  std::vector<int> labels;  // empty meaning is controlled by has_labels
  int num_classes = 0;
  bool has_labels = true;
  std::string provenance;
  NormStats stats;
  std::optional<BlobInfo> blobs;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
  Vector example(std::size_t i) const;
};

/// Computes per-feature stats from `raw` and returns the normalized dataset
/// features; used by every loader.
NormStats fit_norm_stats(const linalg::Matrix& raw);
linalg::Matrix apply_norm_stats(const linalg::Matrix& raw, const NormStats& stats);

/// MNIST-style IDX pair loader. Pixels are scaled to [0,1] and then
/// normalized per feature. Throws FormatError on bad magic numbers, count
/// mismatches, or truncation.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Gaussian clusters around seeded random centers. `spread` is the cluster
/// standard deviation in raw space. The returned dataset is normalized and
/// carries the raw-space BlobInfo, including a Monte Carlo estimate of the
/// Bayes-optimal accuracy.
Dataset synth_blobs(int classes, std::size_t dim, std::size_t per_class,
                    double spread, std::uint64_t seed);

struct NoiseRecord {
  std::vector<char> flipped;        // 1 if the label was changed
  std::vector<int> original_labels;
  std::string kind;                 // "symmetric" | "asymmetric"
  double rate = 0.0;
};

/// Flips exactly round(rate*n) labels, each to a uniformly random different
/// label.
std::pair<Dataset, NoiseRecord> inject_symmetric_noise(const Dataset& dataset,
                                                       double rate,
                                                       std::uint64_t seed);

/// Flips exactly round(rate*n) labels through a fixed class map. Maps with
/// fixed points are rejected.
std::pair<Dataset, NoiseRecord> inject_asymmetric_noise(
    const Dataset& dataset, const std::vector<int>& mapping, double rate,
    std::uint64_t seed);

/// y -> y+1 mod K.
std::vector<int> cyclic_label_map(int classes);

enum class CorruptKind { GaussianNoise, PixelBlur, Mask };

/// Severity-monotone feature corruption; labels untouched. Severity 0 is the
/// identity.
Dataset corrupt(const Dataset& dataset, int severity, CorruptKind kind,
                std::uint64_t seed);

enum class OodKind { DisjointClasses, UniformNoise, ShiftedBlobs };

struct OodSplit {
  Dataset id_test;
  Dataset ood_test;  // label-free
};

/// Builds a label-free OOD feature set matched in size to the held-out ID
/// data. DisjointClasses/ShiftedBlobs require blob provenance on the input.
OodSplit make_ood_split(const Dataset& id_dataset, OodKind kind,
                        std::uint64_t seed);

/// Seeded shuffle, then the first `first_count` rows vs the rest. Stats and
/// provenance metadata are shared by both parts.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset,
                                          std::size_t first_count,
                                          std::uint64_t seed);

// --- persistence ------------------------------------------------------------

/// CSV with header row, features then a label column. Values round-trip
/// exactly.
void save_csv(const Dataset& dataset, const std::string& path);
Dataset load_csv(const std::string& path, int classes = 0);

/// JSON manifest (stats, class count, provenance, blob info) next to the
/// feature CSV.
void save_manifest(const Dataset& dataset, const std::string& json_path,
                   const std::string& csv_path);
Dataset load_manifest(const std::string& json_path);

}  // namespace ifcomp::data
