#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "msinet/errors.hpp"

namespace msinet {

// Dense row-major tensor of 64-bit floats. Images use NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> data);

  const std::vector<int64_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Flat offset of element (n,c,h,w); tensor must be rank 4.
  int64_t index4(int64_t n, int64_t c, int64_t h, int64_t w) const;
  // Inverse of index4.
  std::array<int64_t, 4> coords4(int64_t flat) const;

  double& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(index4(n, c, h, w))];
  }
  double at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(index4(n, c, h, w))];
  }

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int64_t> new_shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double v);
  std::string shape_str() const;

  static std::string shape_str(const std::vector<int64_t>& shape);
  static int64_t shape_numel(const std::vector<int64_t>& shape);

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

// Seedable random stream with a pinned algorithm: mt19937_64 for bits,
// 53-bit uniforms, Box-Muller normals. The identifier below is recorded in
// checkpoints so runs state their pseudo-random source.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64+boxmuller";

  explicit RngStream(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0,n); n must be positive.
  int64_t bounded(int64_t n);

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Deterministic seed derivation (splitmix64 over the combined words).
uint64_t mix_seed(uint64_t a, uint64_t b);

struct InitSpec {
  enum class Kind { Zeros, Constant, Uniform, KaimingNormal };

  Kind kind = Kind::Zeros;
  double value = 0.0;       // Constant
  double lo = 0.0;          // Uniform
  double hi = 0.0;
  int64_t fan_in = 0;       // KaimingNormal: draws have variance 2/fan_in
  uint64_t seed = 0;

  static InitSpec zeros();
  static InitSpec constant(double v);
  static InitSpec uniform(double lo, double hi, uint64_t seed);
  static InitSpec kaiming_normal(int64_t fan_in, uint64_t seed);
};

// New tensor of the given shape; deterministic for a given seed.
Tensor create(const std::vector<int64_t>& shape, const InitSpec& init);

// c[i,j] = sum_k a[i,k] * b[k,j]; a is [M,K], b is [K,N].
Tensor matmul(const Tensor& a, const Tensor& b);

// 2-D transpose.
Tensor transpose2d(const Tensor& x);

// Per-channel mean and population variance (divisor N*H*W) of an NCHW tensor.
std::pair<Tensor, Tensor> channel_moments(const Tensor& x);

void validate_shape(const std::vector<int64_t>& shape);

}  // namespace msinet
