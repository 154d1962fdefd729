#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msinet/tensor.hpp"

namespace msinet {

// Class 0 is MSI, class 1 is MSS.
struct ManifestEntry {
  std::string path;  // relative to root
  int label = 0;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::array<int64_t, 2> class_counts() const;
};

// CSV with header `path,label`; duplicate paths and labels outside {0,1}
// are rejected with the offending row number.
Manifest load_manifest(const std::filesystem::path& csv);
void write_manifest(const Manifest& manifest,
                    const std::filesystem::path& csv);

struct PixelStats {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};

  static PixelStats raw() { return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}; }
};

// Binary PPM (P6, maxval 255) decoded to a [3,H,W] tensor: bytes scaled to
// [0,1] then standardized per channel.
Tensor load_ppm(const std::filesystem::path& file, int64_t expected_hw,
                const PixelStats& stats = PixelStats{});

// Writes a [3,H,W] tensor with values in [0,1] as P6 with maxval 255.
void write_ppm(const std::filesystem::path& file, const Tensor& chw);

struct Sample {
  Tensor image;  // [3,H,W]
  int label = 0;
  std::string source;
};

using Dataset = std::vector<Sample>;

Dataset materialize(const Manifest& manifest, int64_t expected_hw,
                    const PixelStats& stats = PixelStats{});

// Seeded shuffle, then 80% / 10% / 10% in (train, val, test) order.
std::array<Manifest, 3> split_train_val_test(const Manifest& manifest,
                                             uint64_t seed);

// Seeded permutation of record indices chopped into batches; the final
// partial batch is kept unless drop_last.
std::vector<std::vector<size_t>> make_batches(size_t count, int64_t batch_size,
                                              uint64_t seed, bool drop_last);

// Stacks dataset records into ([B,3,H,W], [B,1] labels).
std::pair<Tensor, Tensor> assemble_batch(const Dataset& data,
                                         const std::vector<size_t>& indices);

// Two-class texture set: class 0 is smooth low-frequency blobs, class 1 a
// high-frequency checker texture, both zero-mean around the same base level
// and with identical noise, so intensity alone carries no signal. Writes P6
// files plus manifest.csv into out_dir and returns the manifest.
Manifest generate_synthetic(int64_t n_per_class, int64_t hw, uint64_t seed,
                            const std::filesystem::path& out_dir);

}  // namespace msinet
