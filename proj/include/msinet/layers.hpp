#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msinet/autograd.hpp"
#include "msinet/tensor.hpp"

namespace msinet {

struct Conv2dSpec {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kh = 3, kw = 3;
  int64_t sh = 1, sw = 1;
  int64_t ph = 0, pw = 0;
  bool bias = true;

  // floor((in + 2p - k)/s) + 1 per axis
  std::array<int64_t, 2> out_hw(int64_t h, int64_t w) const;
  void validate(const Tensor& x) const;
};

struct BatchNorm2dSpec {
  int64_t channels = 0;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

struct LinearSpec {
  int64_t in_features = 0;
  int64_t out_features = 0;
  bool bias = true;
};

struct DropoutSpec {
  double rate = 0.5;
};

// Free-function forms of the layer math. Cross-correlation convention
// throughout (no kernel flip).

// im2col + GEMM convolution. weight is [out_c, in_c, kh, kw].
Tensor conv2d_forward(const Tensor& x, const Conv2dSpec& spec,
                      const Tensor& weight, const Tensor* bias = nullptr);

// Direct nested-loop convolution; the serial reference the fast path is
// tested and benchmarked against. Never used in training paths.
Tensor conv2d_naive(const Tensor& x, const Conv2dSpec& spec,
                    const Tensor& weight, const Tensor* bias = nullptr);

// 2x2/stride-2 max pooling; optionally reports the argmax input offset per
// output element (first occurrence in row-major window order on ties).
Tensor maxpool2d(const Tensor& x, std::vector<int64_t>* argmax = nullptr);

// Global average pool to (1,1).
Tensor adaptive_avgpool2d(const Tensor& x);

// y = x * W^T + b with x [N,in], W [out,in].
Tensor linear(const Tensor& x, const LinearSpec& spec, const Tensor& weight,
              const Tensor* bias = nullptr);

// Inverted dropout; eval mode and rate 0 are the identity. The applied
// per-element scale (0 or 1/(1-p)) is written to `mask` when given.
Tensor dropout(const Tensor& x, const DropoutSpec& spec, Mode mode,
               RngStream& rng, std::vector<double>* mask = nullptr);

Tensor relu(const Tensor& x);
// Overflow-safe split form; output strictly inside (0,1) for finite input.
Tensor sigmoid(const Tensor& x);
double sigmoid_scalar(double x);

// ---------------------------------------------------------------------------
// Layer objects
// ---------------------------------------------------------------------------

class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(Conv2dSpec spec, uint64_t init_seed);

  std::string_view kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
  void collect_parameters(const std::string& prefix,
                          std::vector<Parameter*>& out) override;
  int weight_layer_count() const override { return 1; }

  const Conv2dSpec& spec() const { return spec_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Conv2dSpec spec_;
  Parameter weight_;
  Parameter bias_;
};

class BatchNorm2dLayer final : public Layer {
 public:
  BatchNorm2dLayer(BatchNorm2dSpec spec);

  std::string_view kind() const override { return "batchnorm2d"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
  void collect_parameters(const std::string& prefix,
                          std::vector<Parameter*>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor*>>& out) override;

  const BatchNorm2dSpec& spec() const { return spec_; }
  void set_momentum(double momentum) { spec_.momentum = momentum; }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  BatchNorm2dSpec spec_;
  Parameter gamma_;
  Parameter beta_;
  Tensor running_mean_;
  Tensor running_var_;
};

class MaxPool2dLayer final : public Layer {
 public:
  std::string_view kind() const override { return "maxpool2d"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
};

class AdaptiveAvgPool2dLayer final : public Layer {
 public:
  std::string_view kind() const override { return "adaptive_avgpool2d"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
};

class LinearLayer final : public Layer {
 public:
  LinearLayer(LinearSpec spec, uint64_t init_seed);

  std::string_view kind() const override { return "linear"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
  void collect_parameters(const std::string& prefix,
                          std::vector<Parameter*>& out) override;
  int weight_layer_count() const override { return 1; }

  const LinearSpec& spec() const { return spec_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  LinearSpec spec_;
  Parameter weight_;
  Parameter bias_;
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(DropoutSpec spec);

  std::string_view kind() const override { return "dropout"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;

  const DropoutSpec& spec() const { return spec_; }

 private:
  DropoutSpec spec_;
};

class ReluLayer final : public Layer {
 public:
  std::string_view kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
};

class SigmoidLayer final : public Layer {
 public:
  std::string_view kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
};

// [N,...] -> [N, prod(rest)]
class FlattenLayer final : public Layer {
 public:
  std::string_view kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
};

enum class BlockKind { Basic, Bottleneck };

// Residual unit. Bottleneck: 1x1(mid) -> 3x3(mid, stride) -> 1x1(out);
// basic: 3x3(out, stride) -> 3x3(out). Batchnorm after every conv, ReLU
// after all but the last, and ReLU again after the residual addition.
// A 1x1 conv + batchnorm projection matches the shortcut when stride != 1
// or in_channels != out_channels.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(BlockKind block_kind, int64_t in_channels, int64_t mid_channels,
                int64_t out_channels, int64_t stride, uint64_t init_seed);

  std::string_view kind() const override {
    return block_kind_ == BlockKind::Bottleneck ? "bottleneck" : "basic";
  }
  Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                 StatePtr& saved) override;
  Tensor backward(const Tensor& grad_out, LayerState& saved) override;
  void collect_parameters(const std::string& prefix,
                          std::vector<Parameter*>& out) override;
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor*>>& out) override;
  int weight_layer_count() const override {
    return block_kind_ == BlockKind::Bottleneck ? 3 : 2;
  }

  bool has_projection() const { return !projection_.empty(); }
  std::vector<std::unique_ptr<Layer>>& main_path() { return main_; }
  std::vector<std::unique_ptr<Layer>>& projection() { return projection_; }

 private:
  BlockKind block_kind_;
  std::vector<std::unique_ptr<Layer>> main_;
  std::vector<std::unique_ptr<Layer>> projection_;
};

}  // namespace msinet
