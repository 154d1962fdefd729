#include "msinet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "msinet/errors.hpp"

namespace msinet {

std::array<int64_t, 2> Manifest::class_counts() const {
  std::array<int64_t, 2> counts{0, 0};
  for (const auto& e : entries) counts[static_cast<size_t>(e.label)] += 1;
  return counts;
}

Manifest load_manifest(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw IoError("cannot open manifest: " + csv.string());

  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };

  std::string line;
  if (!std::getline(is, line)) {
    throw ParseError("manifest is empty: " + csv.string());
  }
  strip_cr(line);
  if (line != "path,label") {
    throw ParseError("manifest header must be 'path,label', got '" + line +
                     "'");
  }

  Manifest manifest;
  manifest.root = csv.parent_path();
  std::set<std::string> seen;
  int64_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    strip_cr(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ParseError("manifest row " + std::to_string(row) +
                       " has no label column");
    }
    ManifestEntry entry;
    entry.path = line.substr(0, comma);
    const std::string label = line.substr(comma + 1);
    if (label == "0") {
      entry.label = 0;
    } else if (label == "1") {
      entry.label = 1;
    } else {
      throw ParseError("manifest row " + std::to_string(row) +
                       ": label must be 0 or 1, got '" + label + "'");
    }
    if (!seen.insert(entry.path).second) {
      throw ParseError("manifest row " + std::to_string(row) +
                       ": duplicate path '" + entry.path + "'");
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const Manifest& manifest,
                    const std::filesystem::path& csv) {
  std::ofstream os(csv, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + csv.string());
  os << "path,label\n";
  for (const auto& e : manifest.entries) {
    os << e.path << ',' << e.label << '\n';
  }
}

Tensor load_ppm(const std::filesystem::path& file, int64_t expected_hw,
                const PixelStats& stats) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + file.string());

  std::string magic;
  is >> magic;
  if (magic != "P6") {
    throw ParseError("bad PPM magic '" + magic + "' in " + file.string());
  }
  int64_t width = 0, height = 0, maxval = 0;
  is >> width >> height >> maxval;
  if (!is) {
    throw ParseError("malformed PPM header in " + file.string());
  }
  if (maxval != 255) {
    throw ParseError("PPM maxval must be 255, got " + std::to_string(maxval));
  }
  if (width != expected_hw || height != expected_hw) {
    throw ShapeError("image " + file.string() + " is " +
                     std::to_string(width) + "x" + std::to_string(height) +
                     ", expected " + std::to_string(expected_hw) + "x" +
                     std::to_string(expected_hw));
  }
  is.get();  // single whitespace after the header triple

  std::vector<unsigned char> bytes(static_cast<size_t>(width * height * 3));
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError("truncated pixel data in " + file.string());
  }

  Tensor out({3, height, width});
  const int64_t plane = height * width;
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const double v =
            static_cast<double>(bytes[static_cast<size_t>((y * width + x) * 3 +
                                                          c)]) /
            255.0;
        out[c * plane + y * width + x] =
            (v - stats.mean[static_cast<size_t>(c)]) /
            stats.stddev[static_cast<size_t>(c)];
      }
    }
  }
  return out;
}

void write_ppm(const std::filesystem::path& file, const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) {
    throw ShapeError("write_ppm expects a [3,H,W] tensor, got " +
                     chw.shape_str());
  }
  const int64_t h = chw.dim(1), w = chw.dim(2);
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write image: " + file.string());
  os << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<size_t>(w * h * 3));
  const int64_t plane = h * w;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const double v = chw[c * plane + y * w + x];
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        bytes[static_cast<size_t>((y * w + x) * 3 + c)] =
            static_cast<unsigned char>(std::clamp(q, 0L, 255L));
      }
    }
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("short write to " + file.string());
}

Dataset materialize(const Manifest& manifest, int64_t expected_hw,
                    const PixelStats& stats) {
  Dataset data;
  data.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const auto full = manifest.root / e.path;
    if (!std::filesystem::exists(full)) {
      throw IoError("manifest references missing file: " + full.string());
    }
    Sample s;
    s.image = load_ppm(full, expected_hw, stats);
    s.label = e.label;
    s.source = e.path;
    data.push_back(std::move(s));
  }
  return data;
}

std::array<Manifest, 3> split_train_val_test(const Manifest& manifest,
                                             uint64_t seed) {
  const size_t n = manifest.entries.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng(mix_seed(seed, 0x73706c69ULL));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.bounded(static_cast<int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }

  const size_t n_train = n * 8 / 10;
  const size_t n_val = n / 10;
  std::array<Manifest, 3> out;
  for (auto& m : out) m.root = manifest.root;
  for (size_t i = 0; i < n; ++i) {
    const auto& entry = manifest.entries[order[i]];
    if (i < n_train) {
      out[0].entries.push_back(entry);
    } else if (i < n_train + n_val) {
      out[1].entries.push_back(entry);
    } else {
      out[2].entries.push_back(entry);
    }
  }
  return out;
}

std::vector<std::vector<size_t>> make_batches(size_t count, int64_t batch_size,
                                              uint64_t seed, bool drop_last) {
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  std::vector<size_t> order(count);
  for (size_t i = 0; i < count; ++i) order[i] = i;
  RngStream rng(mix_seed(seed, 0x62617463ULL));
  for (size_t i = count; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.bounded(static_cast<int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<size_t>> batches;
  const size_t bs = static_cast<size_t>(batch_size);
  for (size_t pos = 0; pos < count; pos += bs) {
    const size_t take = std::min(bs, count - pos);
    if (take < bs && drop_last) break;
    batches.emplace_back(order.begin() + static_cast<int64_t>(pos),
                         order.begin() + static_cast<int64_t>(pos + take));
  }
  return batches;
}

std::pair<Tensor, Tensor> assemble_batch(const Dataset& data,
                                         const std::vector<size_t>& indices) {
  if (indices.empty()) throw ValueError("assemble_batch on empty index list");
  const Tensor& first = data[indices[0]].image;
  const int64_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
  Tensor x({static_cast<int64_t>(indices.size()), c, h, w});
  Tensor y({static_cast<int64_t>(indices.size()), 1});
  const int64_t sample = c * h * w;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Sample& s = data[indices[i]];
    if (s.image.numel() != sample) {
      throw ShapeError("dataset images have inconsistent shapes");
    }
    std::copy(s.image.data(), s.image.data() + sample,
              x.data() + static_cast<int64_t>(i) * sample);
    y[static_cast<int64_t>(i)] = static_cast<double>(s.label);
  }
  return {std::move(x), std::move(y)};
}

}  // namespace msinet
