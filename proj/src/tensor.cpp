#include "msinet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "msinet/kernels.hpp"

namespace msinet {

void validate_shape(const std::vector<int64_t>& shape) {
  if (shape.empty()) {
    throw ShapeError("tensor shape must be non-empty");
  }
  for (int64_t d : shape) {
    if (d < 1) {
      throw ShapeError("tensor dimensions must be >= 1, got " +
                       Tensor::shape_str(shape));
    }
  }
}

int64_t Tensor::shape_numel(const std::vector<int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

int64_t Tensor::index4(int64_t n, int64_t c, int64_t h, int64_t w) const {
  if (rank() != 4) {
    throw ShapeError("index4 requires a rank-4 tensor, got " + shape_str());
  }
  const int64_t C = shape_[1], H = shape_[2], W = shape_[3];
  return ((n * C + c) * H + h) * W + w;
}

std::array<int64_t, 4> Tensor::coords4(int64_t flat) const {
  if (rank() != 4) {
    throw ShapeError("coords4 requires a rank-4 tensor, got " + shape_str());
  }
  const int64_t C = shape_[1], H = shape_[2], W = shape_[3];
  const int64_t w = flat % W;
  const int64_t h = (flat / W) % H;
  const int64_t c = (flat / (W * H)) % C;
  const int64_t n = flat / (W * H * C);
  return {n, c, h, w};
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
  validate_shape(new_shape);
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("reshape from " + shape_str() + " to " +
                     shape_str(new_shape) + " changes element count");
  }
  return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 in (0,1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int64_t RngStream::bounded(int64_t n) {
  if (n <= 0) {
    throw ValueError("bounded() requires a positive range");
  }
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

InitSpec InitSpec::zeros() { return InitSpec{}; }

InitSpec InitSpec::constant(double v) {
  InitSpec s;
  s.kind = Kind::Constant;
  s.value = v;
  return s;
}

InitSpec InitSpec::uniform(double lo, double hi, uint64_t seed) {
  InitSpec s;
  s.kind = Kind::Uniform;
  s.lo = lo;
  s.hi = hi;
  s.seed = seed;
  return s;
}

InitSpec InitSpec::kaiming_normal(int64_t fan_in, uint64_t seed) {
  InitSpec s;
  s.kind = Kind::KaimingNormal;
  s.fan_in = fan_in;
  s.seed = seed;
  return s;
}

Tensor create(const std::vector<int64_t>& shape, const InitSpec& init) {
  validate_shape(shape);
  Tensor t(shape);
  switch (init.kind) {
    case InitSpec::Kind::Zeros:
      break;
    case InitSpec::Kind::Constant:
      t.fill(init.value);
      break;
    case InitSpec::Kind::Uniform: {
      RngStream rng(init.seed);
      for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.uniform(init.lo, init.hi);
      }
      break;
    }
    case InitSpec::Kind::KaimingNormal: {
      if (init.fan_in < 1) {
        throw ValueError("kaiming_normal requires fan_in >= 1");
      }
      RngStream rng(init.seed);
      const double stddev = std::sqrt(2.0 / static_cast<double>(init.fan_in));
      for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = rng.normal(0.0, stddev);
      }
      break;
    }
  }
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul requires rank-2 tensors, got " + a.shape_str() +
                     " x " + b.shape_str());
  }
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions differ: " + a.shape_str() +
                     " x " + b.shape_str());
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::matmul_nn(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError("transpose2d requires a rank-2 tensor, got " +
                     x.shape_str());
  }
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor y({n, m});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      y[j * m + i] = x[i * n + j];
    }
  }
  return y;
}

std::pair<Tensor, Tensor> channel_moments(const Tensor& x) {
  if (x.rank() != 4) {
    throw ShapeError("channel_moments requires an NCHW tensor, got " +
                     x.shape_str());
  }
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t per_channel = n * h * w;
  Tensor mean({c});
  Tensor var({c});
  const int64_t plane = h * w;
  const int64_t sample = c * plane;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* p = x.data() + ni * sample + ch * plane;
      for (int64_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mu = sum / static_cast<double>(per_channel);
    double acc = 0.0;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* p = x.data() + ni * sample + ch * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double d = p[i] - mu;
        acc += d * d;
      }
    }
    mean[ch] = mu;
    var[ch] = acc / static_cast<double>(per_channel);
  }
  return {std::move(mean), std::move(var)};
}

}  // namespace msinet
