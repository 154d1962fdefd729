#include <cmath>
#include <cstdio>

#include "msinet/data.hpp"
#include "msinet/errors.hpp"

namespace msinet {

namespace {

// Smooth low-frequency field: a few random gaussian bumps.
void paint_blobs(RngStream& rng, int64_t hw, std::vector<double>& pattern) {
  for (int blob = 0; blob < 3; ++blob) {
    const double amp = rng.uniform(0.3, 0.6) * (rng.uniform() < 0.5 ? -1 : 1);
    const double cx = rng.uniform(0.0, static_cast<double>(hw));
    const double cy = rng.uniform(0.0, static_cast<double>(hw));
    const double sigma = rng.uniform(hw / 8.0, hw / 4.0);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int64_t y = 0; y < hw; ++y) {
      for (int64_t x = 0; x < hw; ++x) {
        const double dx = x - cx, dy = y - cy;
        pattern[static_cast<size_t>(y * hw + x)] +=
            amp * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
}

// High-frequency checker texture with a random cell size, offset and sign.
void paint_checker(RngStream& rng, int64_t hw, std::vector<double>& pattern) {
  const int64_t cell = 2 + rng.bounded(3);  // 2..4
  const int64_t ox = rng.bounded(cell);
  const int64_t oy = rng.bounded(cell);
  const double amp = rng.uniform(0.25, 0.45) * (rng.uniform() < 0.5 ? -1 : 1);
  for (int64_t y = 0; y < hw; ++y) {
    for (int64_t x = 0; x < hw; ++x) {
      const bool even = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
      pattern[static_cast<size_t>(y * hw + x)] += even ? amp : -amp;
    }
  }
}

}  // namespace

Manifest generate_synthetic(int64_t n_per_class, int64_t hw, uint64_t seed,
                            const std::filesystem::path& out_dir) {
  if (n_per_class < 1) throw ValueError("n_per_class must be >= 1");
  if (hw < 16) throw ValueError("synthetic images need hw >= 16");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory: " + out_dir.string());
  }

  Manifest manifest;
  manifest.root = out_dir;

  std::vector<double> pattern(static_cast<size_t>(hw * hw));
  for (int label = 0; label < 2; ++label) {
    for (int64_t i = 0; i < n_per_class; ++i) {
      RngStream rng(mix_seed(mix_seed(seed, static_cast<uint64_t>(label)),
                             static_cast<uint64_t>(i)));
      std::fill(pattern.begin(), pattern.end(), 0.0);
      if (label == 0) {
        paint_blobs(rng, hw, pattern);
      } else {
        paint_checker(rng, hw, pattern);
      }

      // remove the DC component so both classes share the same mean level
      double mean = 0.0;
      for (double v : pattern) mean += v;
      mean /= static_cast<double>(pattern.size());

      Tensor img({3, hw, hw});
      const int64_t plane = hw * hw;
      for (int64_t p = 0; p < plane; ++p) {
        const double base = 0.5 + pattern[static_cast<size_t>(p)] - mean;
        for (int64_t c = 0; c < 3; ++c) {
          img[c * plane + p] = base + rng.normal(0.0, 0.05);
        }
      }

      char name[64];
      std::snprintf(name, sizeof(name), "class%d_%05lld.ppm", label,
                    static_cast<long long>(i));
      write_ppm(out_dir / name, img);
      manifest.entries.push_back({name, label});
    }
  }

  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace msinet
