#include "msinet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msinet/errors.hpp"
#include "msinet/kernels.hpp"

namespace msinet {

std::array<int64_t, 2> Conv2dSpec::out_hw(int64_t h, int64_t w) const {
  return {(h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1};
}

void Conv2dSpec::validate(const Tensor& x) const {
  if (x.rank() != 4) {
    throw ShapeError("conv2d expects NCHW input, got " + x.shape_str());
  }
  if (x.dim(1) != in_channels) {
    throw ShapeError("conv2d channel mismatch: input has " +
                     std::to_string(x.dim(1)) + ", spec expects " +
                     std::to_string(in_channels));
  }
  if (x.dim(2) + 2 * ph < kh || x.dim(3) + 2 * pw < kw) {
    throw ShapeError("conv2d kernel larger than padded input");
  }
}

Tensor conv2d_forward(const Tensor& x, const Conv2dSpec& spec,
                      const Tensor& weight, const Tensor* bias) {
  spec.validate(x);
  const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const auto [oh, ow] = spec.out_hw(h, w);
  const int64_t rows = spec.in_channels * spec.kh * spec.kw;
  const int64_t cols_n = n * oh * ow;

  Tensor cols({rows, cols_n});
  kernels::im2col(x.data(), n, spec.in_channels, h, w, spec.kh, spec.kw,
                  spec.sh, spec.sw, spec.ph, spec.pw, cols.data());

  // weight [out_c, in_c, kh, kw] is already the [out_c, rows] matrix.
  Tensor out_mat({spec.out_channels, cols_n});
  kernels::matmul_nn(weight.data(), cols.data(), out_mat.data(),
                     spec.out_channels, rows, cols_n);

  Tensor y({n, spec.out_channels, oh, ow});
  const int64_t plane = oh * ow;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t oc = 0; oc < spec.out_channels; ++oc) {
    const double b = bias != nullptr ? (*bias)[oc] : 0.0;
    const double* src = out_mat.data() + oc * cols_n;
    for (int64_t ni = 0; ni < n; ++ni) {
      double* dst = y.data() + (ni * spec.out_channels + oc) * plane;
      const double* s = src + ni * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = s[i] + b;
    }
  }
  return y;
}

Tensor conv2d_naive(const Tensor& x, const Conv2dSpec& spec,
                    const Tensor& weight, const Tensor* bias) {
  spec.validate(x);
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto [oh, ow] = spec.out_hw(h, w);
  Tensor y({n, spec.out_channels, oh, ow});
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t oc = 0; oc < spec.out_channels; ++oc) {
      for (int64_t oi = 0; oi < oh; ++oi) {
        for (int64_t oj = 0; oj < ow; ++oj) {
          double acc = bias != nullptr ? (*bias)[oc] : 0.0;
          for (int64_t ci = 0; ci < c; ++ci) {
            for (int64_t ki = 0; ki < spec.kh; ++ki) {
              for (int64_t kj = 0; kj < spec.kw; ++kj) {
                const int64_t ih = oi * spec.sh + ki - spec.ph;
                const int64_t iw = oj * spec.sw + kj - spec.pw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                acc += x.at4(ni, ci, ih, iw) * weight.at4(oc, ci, ki, kj);
              }
            }
          }
          y.at4(ni, oc, oi, oj) = acc;
        }
      }
    }
  }
  return y;
}

Tensor maxpool2d(const Tensor& x, std::vector<int64_t>* argmax) {
  if (x.rank() != 4) {
    throw ShapeError("maxpool2d expects NCHW input, got " + x.shape_str());
  }
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) {
    throw ShapeError("maxpool2d window larger than input " + x.shape_str());
  }
  const int64_t oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  if (argmax != nullptr) {
    argmax->assign(static_cast<size_t>(y.numel()), 0);
  }
  const int64_t planes = n * c;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < planes; ++p) {
    const double* in = x.data() + p * h * w;
    double* out = y.data() + p * oh * ow;
    for (int64_t oi = 0; oi < oh; ++oi) {
      for (int64_t oj = 0; oj < ow; ++oj) {
        // first occurrence in row-major window order wins ties
        int64_t best = (2 * oi) * w + 2 * oj;
        double best_v = in[best];
        const int64_t cands[3] = {(2 * oi) * w + 2 * oj + 1,
                                  (2 * oi + 1) * w + 2 * oj,
                                  (2 * oi + 1) * w + 2 * oj + 1};
        for (int64_t cand : cands) {
          if (in[cand] > best_v) {
            best_v = in[cand];
            best = cand;
          }
        }
        out[oi * ow + oj] = best_v;
        if (argmax != nullptr) {
          (*argmax)[static_cast<size_t>(p * oh * ow + oi * ow + oj)] =
              p * h * w + best;
        }
      }
    }
  }
  return y;
}

Tensor adaptive_avgpool2d(const Tensor& x) {
  if (x.rank() != 4) {
    throw ShapeError("adaptive_avgpool2d expects NCHW input, got " +
                     x.shape_str());
  }
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, 1, 1});
  const int64_t plane = h * w;
  const int64_t planes = n * c;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t p = 0; p < planes; ++p) {
    const double* in = x.data() + p * plane;
    double s = 0.0;
    for (int64_t i = 0; i < plane; ++i) s += in[i];
    y[p] = s / static_cast<double>(plane);
  }
  return y;
}

Tensor linear(const Tensor& x, const LinearSpec& spec, const Tensor& weight,
              const Tensor* bias) {
  if (x.rank() != 2) {
    throw ShapeError("linear expects [N,features] input, got " +
                     x.shape_str());
  }
  if (x.dim(1) != spec.in_features) {
    throw ShapeError("linear feature mismatch: input has " +
                     std::to_string(x.dim(1)) + ", spec expects " +
                     std::to_string(spec.in_features));
  }
  const int64_t n = x.dim(0);
  Tensor y({n, spec.out_features});
  kernels::matmul_nt(x.data(), weight.data(), y.data(), n, spec.in_features,
                     spec.out_features);
  if (bias != nullptr) {
    for (int64_t i = 0; i < n; ++i) {
      double* row = y.data() + i * spec.out_features;
      for (int64_t j = 0; j < spec.out_features; ++j) row[j] += (*bias)[j];
    }
  }
  return y;
}

Tensor dropout(const Tensor& x, const DropoutSpec& spec, Mode mode,
               RngStream& rng, std::vector<double>* mask) {
  if (spec.rate < 0.0 || spec.rate >= 1.0) {
    throw ValueError("dropout rate must be in [0,1), got " +
                     std::to_string(spec.rate));
  }
  if (mode == Mode::Eval || spec.rate == 0.0) {
    if (mask != nullptr) mask->clear();
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - spec.rate);
  Tensor y(x.shape());
  if (mask != nullptr) mask->assign(static_cast<size_t>(x.numel()), 0.0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double scale = rng.uniform() < spec.rate ? 0.0 : keep_scale;
    y[i] = x[i] * scale;
    if (mask != nullptr) (*mask)[static_cast<size_t>(i)] = scale;
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

double sigmoid_scalar(double x) {
  double v;
  if (x >= 0.0) {
    v = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    v = e / (1.0 + e);
  }
  // keep strictly inside (0,1) even where exp underflows
  v = std::max(v, std::numeric_limits<double>::min());
  v = std::min(v, 1.0 - std::numeric_limits<double>::epsilon() / 2.0);
  return v;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

// ---------------------------------------------------------------------------
// Conv2dLayer
// ---------------------------------------------------------------------------

namespace {

struct ConvState final : LayerState {
  Tensor cols;  // [in_c*kh*kw, N*OH*OW]
  std::vector<int64_t> in_shape;
  int64_t oh = 0, ow = 0;
};

struct BnState final : LayerState {
  Tensor xhat;
  Tensor inv_std;  // [C]
  bool train = false;
};

struct MaxPoolState final : LayerState {
  std::vector<int64_t> argmax;
  std::vector<int64_t> in_shape;
};

struct AvgPoolState final : LayerState {
  std::vector<int64_t> in_shape;
};

struct LinearState final : LayerState {
  Tensor input;
};

struct DropoutState final : LayerState {
  std::vector<double> mask;  // empty means identity
};

struct MaskState final : LayerState {
  std::vector<uint8_t> mask;
};

struct SigmoidState final : LayerState {
  Tensor output;
};

struct FlattenState final : LayerState {
  std::vector<int64_t> in_shape;
};

struct BlockState final : LayerState {
  std::vector<StatePtr> main_states;
  std::vector<StatePtr> proj_states;
  std::vector<uint8_t> relu_mask;
};

}  // namespace

Conv2dLayer::Conv2dLayer(Conv2dSpec spec, uint64_t init_seed) : spec_(spec) {
  const int64_t fan_in = spec_.in_channels * spec_.kh * spec_.kw;
  weight_.value = create({spec_.out_channels, spec_.in_channels, spec_.kh,
                          spec_.kw},
                         InitSpec::kaiming_normal(fan_in, init_seed));
  weight_.grad = Tensor(weight_.value.shape());
  if (spec_.bias) {
    bias_.value = Tensor({spec_.out_channels});
    bias_.grad = Tensor({spec_.out_channels});
  }
}

Tensor Conv2dLayer::forward(const Tensor& x, Mode, RngStream&,
                            StatePtr& saved) {
  spec_.validate(x);
  const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const auto [oh, ow] = spec_.out_hw(h, w);
  const int64_t rows = spec_.in_channels * spec_.kh * spec_.kw;
  const int64_t cols_n = n * oh * ow;

  auto state = std::make_unique<ConvState>();
  state->cols = Tensor({rows, cols_n});
  state->in_shape = x.shape();
  state->oh = oh;
  state->ow = ow;
  kernels::im2col(x.data(), n, spec_.in_channels, h, w, spec_.kh, spec_.kw,
                  spec_.sh, spec_.sw, spec_.ph, spec_.pw, state->cols.data());

  Tensor out_mat({spec_.out_channels, cols_n});
  kernels::matmul_nn(weight_.value.data(), state->cols.data(), out_mat.data(),
                     spec_.out_channels, rows, cols_n);

  Tensor y({n, spec_.out_channels, oh, ow});
  const int64_t plane = oh * ow;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t oc = 0; oc < spec_.out_channels; ++oc) {
    const double b = spec_.bias ? bias_.value[oc] : 0.0;
    const double* src = out_mat.data() + oc * cols_n;
    for (int64_t ni = 0; ni < n; ++ni) {
      double* dst = y.data() + (ni * spec_.out_channels + oc) * plane;
      const double* s = src + ni * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = s[i] + b;
    }
  }
  saved = std::move(state);
  return y;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<ConvState&>(saved);
  const int64_t n = state.in_shape[0], h = state.in_shape[2],
                w = state.in_shape[3];
  const int64_t oh = state.oh, ow = state.ow;
  const int64_t rows = spec_.in_channels * spec_.kh * spec_.kw;
  const int64_t cols_n = n * oh * ow;
  const int64_t plane = oh * ow;

  // gather dy into [out_c, N*OH*OW] to match the forward GEMM layout
  Tensor dy_mat({spec_.out_channels, cols_n});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t oc = 0; oc < spec_.out_channels; ++oc) {
    double* dst = dy_mat.data() + oc * cols_n;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* src =
          grad_out.data() + (ni * spec_.out_channels + oc) * plane;
      double* d = dst + ni * plane;
      for (int64_t i = 0; i < plane; ++i) d[i] = src[i];
    }
  }

  Tensor dw({spec_.out_channels, rows});
  kernels::matmul_nt(dy_mat.data(), state.cols.data(), dw.data(),
                     spec_.out_channels, cols_n, rows);
  for (int64_t i = 0; i < dw.numel(); ++i) weight_.grad[i] += dw[i];

  if (spec_.bias) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t oc = 0; oc < spec_.out_channels; ++oc) {
      const double* src = dy_mat.data() + oc * cols_n;
      double s = 0.0;
      for (int64_t i = 0; i < cols_n; ++i) s += src[i];
      bias_.grad[oc] += s;
    }
  }

  Tensor dcols({rows, cols_n});
  kernels::matmul_tn(weight_.value.data(), dy_mat.data(), dcols.data(), rows,
                     spec_.out_channels, cols_n);
  Tensor dx(state.in_shape);
  kernels::col2im(dcols.data(), n, spec_.in_channels, h, w, spec_.kh, spec_.kw,
                  spec_.sh, spec_.sw, spec_.ph, spec_.pw, dx.data());
  return dx;
}

void Conv2dLayer::collect_parameters(const std::string& prefix,
                                     std::vector<Parameter*>& out) {
  weight_.name = prefix + ".weight";
  out.push_back(&weight_);
  if (spec_.bias) {
    bias_.name = prefix + ".bias";
    out.push_back(&bias_);
  }
}

// ---------------------------------------------------------------------------
// BatchNorm2dLayer
// ---------------------------------------------------------------------------

BatchNorm2dLayer::BatchNorm2dLayer(BatchNorm2dSpec spec) : spec_(spec) {
  if (spec_.channels < 1) {
    throw ValueError("batchnorm requires channels >= 1");
  }
  if (spec_.momentum <= 0.0 || spec_.momentum > 1.0) {
    throw ValueError("batchnorm momentum must be in (0,1]");
  }
  gamma_.value = create({spec_.channels}, InitSpec::constant(1.0));
  gamma_.grad = Tensor({spec_.channels});
  beta_.value = Tensor({spec_.channels});
  beta_.grad = Tensor({spec_.channels});
  running_mean_ = Tensor({spec_.channels});
  running_var_ = create({spec_.channels}, InitSpec::constant(1.0));
}

Tensor BatchNorm2dLayer::forward(const Tensor& x, Mode mode, RngStream&,
                                 StatePtr& saved) {
  if (x.rank() != 4 || x.dim(1) != spec_.channels) {
    throw ShapeError("batchnorm2d channel mismatch for input " +
                     x.shape_str());
  }
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t plane = h * w;
  const int64_t sample = c * plane;

  Tensor mean, var;
  if (mode == Mode::Train) {
    if (n * plane < 2) {
      throw ValueError("batchnorm train mode needs N*H*W >= 2 per channel");
    }
    std::tie(mean, var) = channel_moments(x);
    for (int64_t ch = 0; ch < c; ++ch) {
      running_mean_[ch] =
          (1.0 - spec_.momentum) * running_mean_[ch] + spec_.momentum * mean[ch];
      running_var_[ch] =
          (1.0 - spec_.momentum) * running_var_[ch] + spec_.momentum * var[ch];
    }
  } else {
    mean = running_mean_;
    var = running_var_;
  }

  auto state = std::make_unique<BnState>();
  state->train = mode == Mode::Train;
  state->xhat = Tensor(x.shape());
  state->inv_std = Tensor({c});
  Tensor y(x.shape());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[ch] + spec_.epsilon);
    state->inv_std[ch] = inv;
    const double mu = mean[ch];
    const double g = gamma_.value[ch], b = beta_.value[ch];
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* in = x.data() + ni * sample + ch * plane;
      double* xh = state->xhat.data() + ni * sample + ch * plane;
      double* out = y.data() + ni * sample + ch * plane;
      for (int64_t i = 0; i < plane; ++i) {
        xh[i] = (in[i] - mu) * inv;
        out[i] = g * xh[i] + b;
      }
    }
  }
  saved = std::move(state);
  return y;
}

Tensor BatchNorm2dLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<BnState&>(saved);
  const auto& shape = state.xhat.shape();
  const int64_t n = shape[0], c = shape[1], h = shape[2], w = shape[3];
  const int64_t plane = h * w;
  const int64_t sample = c * plane;
  const double m = static_cast<double>(n * plane);

  Tensor dx(state.xhat.shape());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* dy = grad_out.data() + ni * sample + ch * plane;
      const double* xh = state.xhat.data() + ni * sample + ch * plane;
      for (int64_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    gamma_.grad[ch] += sum_dy_xhat;
    beta_.grad[ch] += sum_dy;

    const double g_inv = gamma_.value[ch] * state.inv_std[ch];
    if (state.train) {
      // dx = g*inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
      const double mean_dy = sum_dy / m;
      const double mean_dy_xhat = sum_dy_xhat / m;
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* dy = grad_out.data() + ni * sample + ch * plane;
        const double* xh = state.xhat.data() + ni * sample + ch * plane;
        double* out = dx.data() + ni * sample + ch * plane;
        for (int64_t i = 0; i < plane; ++i) {
          out[i] = g_inv * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
        }
      }
    } else {
      // frozen statistics: the layer is a per-channel affine map
      for (int64_t ni = 0; ni < n; ++ni) {
        const double* dy = grad_out.data() + ni * sample + ch * plane;
        double* out = dx.data() + ni * sample + ch * plane;
        for (int64_t i = 0; i < plane; ++i) out[i] = g_inv * dy[i];
      }
    }
  }
  return dx;
}

void BatchNorm2dLayer::collect_parameters(const std::string& prefix,
                                          std::vector<Parameter*>& out) {
  gamma_.name = prefix + ".gamma";
  out.push_back(&gamma_);
  beta_.name = prefix + ".beta";
  out.push_back(&beta_);
}

void BatchNorm2dLayer::collect_buffers(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(prefix + ".running_mean", &running_mean_);
  out.emplace_back(prefix + ".running_var", &running_var_);
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Tensor MaxPool2dLayer::forward(const Tensor& x, Mode, RngStream&,
                               StatePtr& saved) {
  auto state = std::make_unique<MaxPoolState>();
  state->in_shape = x.shape();
  Tensor y = maxpool2d(x, &state->argmax);
  saved = std::move(state);
  return y;
}

Tensor MaxPool2dLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<MaxPoolState&>(saved);
  Tensor dx(state.in_shape);
  for (int64_t i = 0; i < grad_out.numel(); ++i) {
    dx[state.argmax[static_cast<size_t>(i)]] += grad_out[i];
  }
  return dx;
}

Tensor AdaptiveAvgPool2dLayer::forward(const Tensor& x, Mode, RngStream&,
                                       StatePtr& saved) {
  auto state = std::make_unique<AvgPoolState>();
  state->in_shape = x.shape();
  saved = std::move(state);
  return adaptive_avgpool2d(x);
}

Tensor AdaptiveAvgPool2dLayer::backward(const Tensor& grad_out,
                                        LayerState& saved) {
  auto& state = static_cast<AvgPoolState&>(saved);
  const int64_t n = state.in_shape[0], c = state.in_shape[1],
                h = state.in_shape[2], w = state.in_shape[3];
  const int64_t plane = h * w;
  Tensor dx(state.in_shape);
  const double inv = 1.0 / static_cast<double>(plane);
  for (int64_t p = 0; p < n * c; ++p) {
    const double g = grad_out[p] * inv;
    double* out = dx.data() + p * plane;
    for (int64_t i = 0; i < plane; ++i) out[i] = g;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LinearLayer
// ---------------------------------------------------------------------------

LinearLayer::LinearLayer(LinearSpec spec, uint64_t init_seed) : spec_(spec) {
  weight_.value = create({spec_.out_features, spec_.in_features},
                         InitSpec::kaiming_normal(spec_.in_features, init_seed));
  weight_.grad = Tensor(weight_.value.shape());
  if (spec_.bias) {
    bias_.value = Tensor({spec_.out_features});
    bias_.grad = Tensor({spec_.out_features});
  }
}

Tensor LinearLayer::forward(const Tensor& x, Mode, RngStream&,
                            StatePtr& saved) {
  auto state = std::make_unique<LinearState>();
  state->input = x;
  Tensor y = linear(x, spec_, weight_.value,
                    spec_.bias ? &bias_.value : nullptr);
  saved = std::move(state);
  return y;
}

Tensor LinearLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<LinearState&>(saved);
  const int64_t n = state.input.dim(0);

  Tensor dw({spec_.out_features, spec_.in_features});
  kernels::matmul_tn(grad_out.data(), state.input.data(), dw.data(),
                     spec_.out_features, n, spec_.in_features);
  for (int64_t i = 0; i < dw.numel(); ++i) weight_.grad[i] += dw[i];

  if (spec_.bias) {
    for (int64_t i = 0; i < n; ++i) {
      const double* row = grad_out.data() + i * spec_.out_features;
      for (int64_t j = 0; j < spec_.out_features; ++j) bias_.grad[j] += row[j];
    }
  }

  Tensor dx({n, spec_.in_features});
  kernels::matmul_nn(grad_out.data(), weight_.value.data(), dx.data(), n,
                     spec_.out_features, spec_.in_features);
  return dx;
}

void LinearLayer::collect_parameters(const std::string& prefix,
                                     std::vector<Parameter*>& out) {
  weight_.name = prefix + ".weight";
  out.push_back(&weight_);
  if (spec_.bias) {
    bias_.name = prefix + ".bias";
    out.push_back(&bias_);
  }
}

// ---------------------------------------------------------------------------
// Dropout / activations / flatten
// ---------------------------------------------------------------------------

DropoutLayer::DropoutLayer(DropoutSpec spec) : spec_(spec) {
  if (spec_.rate < 0.0 || spec_.rate >= 1.0) {
    throw ValueError("dropout rate must be in [0,1), got " +
                     std::to_string(spec_.rate));
  }
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode, RngStream& rng,
                             StatePtr& saved) {
  auto state = std::make_unique<DropoutState>();
  Tensor y = dropout(x, spec_, mode, rng, &state->mask);
  saved = std::move(state);
  return y;
}

Tensor DropoutLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<DropoutState&>(saved);
  if (state.mask.empty()) {
    return grad_out;
  }
  Tensor dx(grad_out.shape());
  for (int64_t i = 0; i < grad_out.numel(); ++i) {
    dx[i] = grad_out[i] * state.mask[static_cast<size_t>(i)];
  }
  return dx;
}

Tensor ReluLayer::forward(const Tensor& x, Mode, RngStream&, StatePtr& saved) {
  auto state = std::make_unique<MaskState>();
  state->mask.assign(static_cast<size_t>(x.numel()), 0);
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (x[i] > 0.0) {
      y[i] = x[i];
      state->mask[static_cast<size_t>(i)] = 1;
    }
  }
  saved = std::move(state);
  return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<MaskState&>(saved);
  Tensor dx(grad_out.shape());
  for (int64_t i = 0; i < grad_out.numel(); ++i) {
    dx[i] = state.mask[static_cast<size_t>(i)] ? grad_out[i] : 0.0;
  }
  return dx;
}

Tensor SigmoidLayer::forward(const Tensor& x, Mode, RngStream&,
                             StatePtr& saved) {
  auto state = std::make_unique<SigmoidState>();
  state->output = sigmoid(x);
  Tensor y = state->output;
  saved = std::move(state);
  return y;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<SigmoidState&>(saved);
  Tensor dx(grad_out.shape());
  for (int64_t i = 0; i < grad_out.numel(); ++i) {
    const double y = state.output[i];
    dx[i] = grad_out[i] * y * (1.0 - y);
  }
  return dx;
}

Tensor FlattenLayer::forward(const Tensor& x, Mode, RngStream&,
                             StatePtr& saved) {
  auto state = std::make_unique<FlattenState>();
  state->in_shape = x.shape();
  saved = std::move(state);
  return x.reshaped({x.dim(0), x.numel() / x.dim(0)});
}

Tensor FlattenLayer::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<FlattenState&>(saved);
  return grad_out.reshaped(state.in_shape);
}

// ---------------------------------------------------------------------------
// ResidualBlock
// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(BlockKind block_kind, int64_t in_channels,
                             int64_t mid_channels, int64_t out_channels,
                             int64_t stride, uint64_t init_seed)
    : block_kind_(block_kind) {
  auto conv = [&](int64_t in, int64_t out, int64_t k, int64_t s, int64_t p,
                  uint64_t salt) {
    Conv2dSpec spec;
    spec.in_channels = in;
    spec.out_channels = out;
    spec.kh = spec.kw = k;
    spec.sh = spec.sw = s;
    spec.ph = spec.pw = p;
    spec.bias = false;
    return std::make_unique<Conv2dLayer>(spec, mix_seed(init_seed, salt));
  };
  auto bn = [&](int64_t channels) {
    return std::make_unique<BatchNorm2dLayer>(BatchNorm2dSpec{channels});
  };
  auto named = [](std::unique_ptr<Layer> layer, std::string n) {
    layer->set_name(std::move(n));
    return layer;
  };

  if (block_kind_ == BlockKind::Bottleneck) {
    // stride lives on the 3x3 conv
    main_.push_back(named(conv(in_channels, mid_channels, 1, 1, 0, 1), "conv1"));
    main_.push_back(named(bn(mid_channels), "bn1"));
    main_.push_back(named(std::make_unique<ReluLayer>(), "relu1"));
    main_.push_back(
        named(conv(mid_channels, mid_channels, 3, stride, 1, 2), "conv2"));
    main_.push_back(named(bn(mid_channels), "bn2"));
    main_.push_back(named(std::make_unique<ReluLayer>(), "relu2"));
    main_.push_back(named(conv(mid_channels, out_channels, 1, 1, 0, 3), "conv3"));
    main_.push_back(named(bn(out_channels), "bn3"));
  } else {
    main_.push_back(
        named(conv(in_channels, out_channels, 3, stride, 1, 1), "conv1"));
    main_.push_back(named(bn(out_channels), "bn1"));
    main_.push_back(named(std::make_unique<ReluLayer>(), "relu1"));
    main_.push_back(named(conv(out_channels, out_channels, 3, 1, 1, 2), "conv2"));
    main_.push_back(named(bn(out_channels), "bn2"));
  }

  if (stride != 1 || in_channels != out_channels) {
    projection_.push_back(
        named(conv(in_channels, out_channels, 1, stride, 0, 9), "proj_conv"));
    projection_.push_back(named(bn(out_channels), "proj_bn"));
  }
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode, RngStream& rng,
                              StatePtr& saved) {
  auto state = std::make_unique<BlockState>();
  state->main_states.resize(main_.size());
  state->proj_states.resize(projection_.size());

  Tensor r = x;
  for (size_t i = 0; i < main_.size(); ++i) {
    r = main_[i]->forward(r, mode, rng, state->main_states[i]);
  }
  Tensor skip = x;
  for (size_t i = 0; i < projection_.size(); ++i) {
    skip = projection_[i]->forward(skip, mode, rng, state->proj_states[i]);
  }
  if (!r.same_shape(skip)) {
    throw ShapeError("residual branch " + r.shape_str() +
                     " does not match shortcut " + skip.shape_str());
  }

  Tensor y(r.shape());
  state->relu_mask.assign(static_cast<size_t>(r.numel()), 0);
  for (int64_t i = 0; i < r.numel(); ++i) {
    const double s = r[i] + skip[i];
    if (s > 0.0) {
      y[i] = s;
      state->relu_mask[static_cast<size_t>(i)] = 1;
    }
  }
  saved = std::move(state);
  return y;
}

Tensor ResidualBlock::backward(const Tensor& grad_out, LayerState& saved) {
  auto& state = static_cast<BlockState&>(saved);
  Tensor dsum(grad_out.shape());
  for (int64_t i = 0; i < grad_out.numel(); ++i) {
    dsum[i] = state.relu_mask[static_cast<size_t>(i)] ? grad_out[i] : 0.0;
  }

  Tensor d_main = dsum;
  for (size_t i = main_.size(); i-- > 0;) {
    d_main = main_[i]->backward(d_main, *state.main_states[i]);
  }
  Tensor d_skip = dsum;
  for (size_t i = projection_.size(); i-- > 0;) {
    d_skip = projection_[i]->backward(d_skip, *state.proj_states[i]);
  }

  Tensor dx(d_main.shape());
  for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = d_main[i] + d_skip[i];
  return dx;
}

void ResidualBlock::collect_parameters(const std::string& prefix,
                                       std::vector<Parameter*>& out) {
  for (auto& layer : main_) {
    layer->collect_parameters(prefix + "." + layer->name(), out);
  }
  for (auto& layer : projection_) {
    layer->collect_parameters(prefix + "." + layer->name(), out);
  }
}

void ResidualBlock::collect_buffers(
    const std::string& prefix,
    std::vector<std::pair<std::string, Tensor*>>& out) {
  for (auto& layer : main_) {
    layer->collect_buffers(prefix + "." + layer->name(), out);
  }
  for (auto& layer : projection_) {
    layer->collect_buffers(prefix + "." + layer->name(), out);
  }
}

}  // namespace msinet
