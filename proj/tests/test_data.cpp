#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ifcomp/data.hpp"
#include "ifcomp/train.hpp"
#include "oracles.hpp"

using namespace ifcomp;
namespace fs = std::filesystem;

namespace {

void write_be_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char buf[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

struct IdxPair {
  std::string images;
  std::string labels;
};

IdxPair write_idx_pair(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                       std::uint64_t seed) {
  IdxPair paths;
  const auto dir = fs::temp_directory_path();
  paths.images = (dir / ("ifcomp_idx_images_" + std::to_string(seed))).string();
  paths.labels = (dir / ("ifcomp_idx_labels_" + std::to_string(seed))).string();
  Rng rng(seed);
  {
    std::ofstream out(paths.images, std::ios::binary | std::ios::trunc);
    write_be_u32(out, 0x00000803);
    write_be_u32(out, count);
    write_be_u32(out, rows);
    write_be_u32(out, cols);
    for (std::uint32_t i = 0; i < count * rows * cols; ++i) {
      const auto byte = static_cast<unsigned char>(rng.uniform_int(0, 255));
      out.write(reinterpret_cast<const char*>(&byte), 1);
    }
  }
  {
    std::ofstream out(paths.labels, std::ios::binary | std::ios::trunc);
    write_be_u32(out, 0x00000801);
    write_be_u32(out, count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto byte = static_cast<unsigned char>(rng.uniform_int(0, 2));
      out.write(reinterpret_cast<const char*>(&byte), 1);
    }
  }
  return paths;
}

}  // namespace

TEST_CASE("load_idx parses a valid pair and normalizes features") {
  const IdxPair paths = write_idx_pair(30, 4, 4, 99);
  const data::Dataset ds = data::load_idx(paths.images, paths.labels);
  CHECK(ds.size() == 30);
  CHECK(ds.dim() == 16);
  CHECK(ds.num_classes == 3);
  // Per-feature mean about 0 for non-constant features.
  for (std::size_t j = 0; j < ds.dim(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) mean += ds.features(i, j);
    mean /= static_cast<double>(ds.size());
    CHECK(std::abs(mean) < 1e-9);
  }
  fs::remove(paths.images);
  fs::remove(paths.labels);
}

TEST_CASE("load_idx rejects a truncated image file with byte counts") {
  const IdxPair paths = write_idx_pair(10, 3, 3, 7);
  fs::resize_file(paths.images, 16 + 10 * 9 - 5);
  try {
    data::load_idx(paths.images, paths.labels);
    CHECK(false);
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(16 + 10 * 9)) != std::string::npos);
    CHECK(msg.find(std::to_string(16 + 10 * 9 - 5)) != std::string::npos);
  }
  fs::remove(paths.images);
  fs::remove(paths.labels);
}

TEST_CASE("load_idx rejects bad magic and count mismatch") {
  IdxPair paths = write_idx_pair(10, 3, 3, 8);
  {
    std::ofstream out(paths.images, std::ios::binary | std::ios::in);
    out.seekp(0);
    write_be_u32(out, 0x00000802);
  }
  CHECK_THROWS_AS(data::load_idx(paths.images, paths.labels), FormatError);
  fs::remove(paths.images);
  fs::remove(paths.labels);

  const IdxPair a = write_idx_pair(10, 3, 3, 9);
  const IdxPair b = write_idx_pair(12, 3, 3, 10);
  CHECK_THROWS_AS(data::load_idx(a.images, b.labels), FormatError);
  fs::remove(a.images);
  fs::remove(a.labels);
  fs::remove(b.images);
  fs::remove(b.labels);
}

TEST_CASE("csv round-trip preserves features exactly") {
  const data::Dataset ds = data::synth_blobs(3, 4, 20, 1.0, 51);
  const std::string path =
      (fs::temp_directory_path() / "ifcomp_roundtrip.csv").string();
  data::save_csv(ds, path);
  const data::Dataset back = data::load_csv(path, ds.num_classes);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j)
      CHECK(back.features(i, j) == ds.features(i, j));
    CHECK(back.labels[i] == ds.labels[i]);
  }
  fs::remove(path);
}

TEST_CASE("manifest round-trip keeps stats and blob metadata") {
  const data::Dataset ds = data::synth_blobs(4, 5, 15, 1.3, 77);
  const auto dir = fs::temp_directory_path();
  const std::string json_path = (dir / "ifcomp_manifest.json").string();
  const std::string csv_path = (dir / "ifcomp_manifest.csv").string();
  data::save_manifest(ds, json_path, csv_path);
  const data::Dataset back = data::load_manifest(json_path);
  CHECK(back.stats.mean == ds.stats.mean);
  CHECK(back.stats.stdev == ds.stats.stdev);
  REQUIRE(back.blobs.has_value());
  CHECK(back.blobs->spread == ds.blobs->spread);
  CHECK(back.blobs->centers.data == ds.blobs->centers.data);
  CHECK(back.num_classes == ds.num_classes);
  fs::remove(json_path);
  fs::remove(csv_path);
}

TEST_CASE("synth_blobs is deterministic per seed") {
  const data::Dataset a = data::synth_blobs(3, 6, 25, 1.0, 1234);
  const data::Dataset b = data::synth_blobs(3, 6, 25, 1.0, 1234);
  CHECK(a.features.data == b.features.data);
  CHECK(a.labels == b.labels);
  const data::Dataset c = data::synth_blobs(3, 6, 25, 1.0, 1235);
  CHECK(a.features.data != c.features.data);
}

TEST_CASE("synth_blobs with tiny spread is linearly separable") {
  const data::Dataset ds = data::synth_blobs(2, 4, 40, 1e-3, 5);
  train::TrainConfig tc;
  tc.epochs = 200;
  tc.lr = 0.2;
  tc.batch_size = 16;
  tc.seed = 3;
  train::TrainCurve curve;
  train::train_base(ds, {}, tc, &curve);
  CHECK(curve.back().accuracy == doctest::Approx(1.0));
}

TEST_CASE("synth_blobs reports a Bayes accuracy estimate") {
  const data::Dataset ds = data::synth_blobs(4, 8, 30, 1.0, 21);
  REQUIRE(ds.blobs.has_value());
  CHECK(ds.blobs->bayes_accuracy >= 0.25);
  CHECK(ds.blobs->bayes_accuracy <= 1.0);
  CHECK(ds.blobs->spread == 1.0);
  CHECK(ds.blobs->centers.rows == 4);
}

TEST_CASE("symmetric noise flips exactly round(rate n), never to the same label") {
  const data::Dataset ds = data::synth_blobs(10, 4, 30, 1.0, 3);
  const auto [noised, record] = data::inject_symmetric_noise(ds, 0.6, 17);
  const auto expected =
      static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(ds.size())));
  std::size_t flips = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (record.flipped[i] != 0) {
      ++flips;
      CHECK(noised.labels[i] != ds.labels[i]);
    } else {
      CHECK(noised.labels[i] == ds.labels[i]);
    }
  }
  CHECK(flips == expected);
  CHECK(record.kind == "symmetric");
}

TEST_CASE("symmetric noise with rate zero leaves everything clean") {
  const data::Dataset ds = data::synth_blobs(3, 4, 10, 1.0, 4);
  const auto [noised, record] = data::inject_symmetric_noise(ds, 0.0, 1);
  CHECK(noised.labels == ds.labels);
  for (const char f : record.flipped) CHECK(f == 0);
}

TEST_CASE("binary symmetric noise flips to the complement") {
  const data::Dataset ds = data::synth_blobs(2, 4, 30, 1.0, 6);
  const auto [noised, record] = data::inject_symmetric_noise(ds, 0.5, 77);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (record.flipped[i] != 0) CHECK(noised.labels[i] == 1 - ds.labels[i]);
  }
}

TEST_CASE("asymmetric noise follows the cyclic map exactly") {
  const data::Dataset ds = data::synth_blobs(5, 4, 20, 1.0, 8);
  const auto map = data::cyclic_label_map(5);
  const auto [noised, record] = data::inject_asymmetric_noise(ds, map, 0.3, 31);
  const auto expected =
      static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(ds.size())));
  std::size_t flips = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (record.flipped[i] != 0) {
      ++flips;
      CHECK(noised.labels[i] == (ds.labels[i] + 1) % 5);
    }
  }
  CHECK(flips == expected);
}

TEST_CASE("asymmetric noise rejects maps with fixed points") {
  const data::Dataset ds = data::synth_blobs(3, 4, 10, 1.0, 9);
  CHECK_THROWS_AS(data::inject_asymmetric_noise(ds, {0, 2, 1}, 0.2, 1), ConfigError);
}

TEST_CASE("binary cyclic asymmetric noise equals symmetric noise given one seed") {
  const data::Dataset ds = data::synth_blobs(2, 4, 25, 1.0, 10);
  const auto [sym, sym_rec] = data::inject_symmetric_noise(ds, 0.4, 123);
  const auto [asym, asym_rec] =
      data::inject_asymmetric_noise(ds, data::cyclic_label_map(2), 0.4, 123);
  CHECK(sym_rec.flipped == asym_rec.flipped);
  CHECK(sym.labels == asym.labels);
}

TEST_CASE("noise record re-derives the flip set bit-for-bit") {
  const data::Dataset ds = data::synth_blobs(4, 6, 40, 1.0, 11);
  const auto [noised, record] = data::inject_symmetric_noise(ds, 0.35, 55);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const char derived = noised.labels[i] != ds.labels[i] ? 1 : 0;
    CHECK(derived == record.flipped[i]);
    CHECK(record.original_labels[i] == ds.labels[i]);
  }
}

TEST_CASE("corrupt severity zero is the identity and noise ops preserve shape") {
  const data::Dataset ds = data::synth_blobs(3, 5, 20, 1.0, 12);
  for (const auto kind : {data::CorruptKind::GaussianNoise,
                          data::CorruptKind::PixelBlur, data::CorruptKind::Mask}) {
    const data::Dataset same = data::corrupt(ds, 0, kind, 5);
    CHECK(same.features.data == ds.features.data);
    const data::Dataset hit = data::corrupt(ds, 3, kind, 5);
    CHECK(hit.size() == ds.size());
    CHECK(hit.dim() == ds.dim());
    CHECK(hit.labels == ds.labels);
    CHECK(hit.num_classes == ds.num_classes);
  }
}

TEST_CASE("corrupt is deterministic per seed") {
  const data::Dataset ds = data::synth_blobs(3, 5, 20, 1.0, 13);
  const data::Dataset a = data::corrupt(ds, 4, data::CorruptKind::GaussianNoise, 9);
  const data::Dataset b = data::corrupt(ds, 4, data::CorruptKind::GaussianNoise, 9);
  CHECK(a.features.data == b.features.data);
}

TEST_CASE("gaussian corruption degrades accuracy monotonically on average") {
  std::vector<double> mean_acc(6, 0.0);
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(100 + s);
    const data::Dataset all = data::synth_blobs(4, 8, 400, 1.4, seed);
    const auto [train_set, test_set] = data::split_dataset(all, 800, seed + 1);
    train::TrainConfig tc;
    tc.epochs = 40;
    tc.lr = 0.05;
    tc.batch_size = 64;
    tc.seed = seed + 2;
    const auto params = train::train_base(train_set, {32}, tc);

    for (int severity = 0; severity <= 5; ++severity) {
      const data::Dataset corrupted = data::corrupt(
          test_set, severity, data::CorruptKind::GaussianNoise, seed + 7);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < corrupted.size(); ++i) {
        const auto trace = model::forward(params, corrupted.example(i));
        const auto& logits = trace.logits();
        const auto best = std::max_element(logits.begin(), logits.end());
        if (static_cast<int>(best - logits.begin()) == corrupted.labels[i]) ++hits;
      }
      mean_acc[static_cast<std::size_t>(severity)] +=
          static_cast<double>(hits) / static_cast<double>(corrupted.size());
    }
  }
  for (double& a : mean_acc) a /= seeds;
  for (std::size_t s = 0; s + 1 < mean_acc.size(); ++s) {
    CHECK(mean_acc[s + 1] <= mean_acc[s] + 1e-12);
  }
}

TEST_CASE("uniform-noise OOD statistics match the box moments") {
  const data::Dataset ds = data::synth_blobs(4, 6, 200, 1.0, 14);
  const auto split = data::make_ood_split(ds, data::OodKind::UniformNoise, 40);
  CHECK_FALSE(split.ood_test.has_labels);
  CHECK(split.ood_test.size() == ds.size());

  for (std::size_t j = 0; j < ds.dim(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      lo = std::min(lo, ds.features(i, j));
      hi = std::max(hi, ds.features(i, j));
    }
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < split.ood_test.size(); ++i)
      mean += split.ood_test.features(i, j);
    mean /= static_cast<double>(split.ood_test.size());
    for (std::size_t i = 0; i < split.ood_test.size(); ++i) {
      const double d = split.ood_test.features(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(split.ood_test.size());
    const double expect_mean = 0.5 * (lo + hi);
    const double expect_var = (hi - lo) * (hi - lo) / 12.0;
    // Monte Carlo tolerances.
    CHECK(std::abs(mean - expect_mean) < 0.15 * (hi - lo));
    CHECK(var > 0.4 * expect_var);
    CHECK(var < 1.8 * expect_var);
  }
}

TEST_CASE("disjoint-class OOD centers sit at least 6 spreads away") {
  const data::Dataset ds = data::synth_blobs(4, 6, 100, 1.2, 15);
  const auto split = data::make_ood_split(ds, data::OodKind::DisjointClasses, 41);
  REQUIRE(split.ood_test.blobs.has_value());
  const auto& id_info = *ds.blobs;
  const auto& ood_info = *split.ood_test.blobs;
  for (std::size_t a = 0; a < ood_info.centers.rows; ++a) {
    for (std::size_t b = 0; b < id_info.centers.rows; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < ds.dim(); ++j) {
        const double d = ood_info.centers(a, j) - id_info.centers(b, j);
        d2 += d * d;
      }
      CHECK(std::sqrt(d2) >= 6.0 * id_info.spread);
    }
  }
}

TEST_CASE("make_ood_split is deterministic per seed") {
  const data::Dataset ds = data::synth_blobs(3, 5, 60, 1.0, 16);
  const auto a = data::make_ood_split(ds, data::OodKind::ShiftedBlobs, 70);
  const auto b = data::make_ood_split(ds, data::OodKind::ShiftedBlobs, 70);
  CHECK(a.ood_test.features.data == b.ood_test.features.data);
  CHECK(a.id_test.features.data == b.id_test.features.data);
}

TEST_CASE("split_dataset partitions rows and keeps stats") {
  const data::Dataset ds = data::synth_blobs(3, 4, 30, 1.0, 18);
  const auto [first, second] = data::split_dataset(ds, 40, 91);
  CHECK(first.size() == 40);
  CHECK(second.size() == ds.size() - 40);
  CHECK(first.stats.mean == ds.stats.mean);
  CHECK(second.stats.stdev == ds.stats.stdev);
  CHECK(first.num_classes == ds.num_classes);
}
