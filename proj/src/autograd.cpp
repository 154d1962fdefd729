#include "msinet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "msinet/errors.hpp"

namespace msinet {

void Layer::collect_parameters(const std::string&, std::vector<Parameter*>&) {}

void Layer::collect_buffers(const std::string&,
                            std::vector<std::pair<std::string, Tensor*>>&) {}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers) {
    layer->collect_parameters(layer->name(), out);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& layer : layers) {
    layer->collect_buffers(layer->name(), out);
  }
  return out;
}

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

int64_t Model::parameter_count() {
  int64_t total = 0;
  for (Parameter* p : parameters()) total += p->value.numel();
  return total;
}

std::pair<Tensor, Tape> forward_record(Model& model, const Tensor& input,
                                       Mode mode, uint64_t rng_seed) {
  Tape tape;
  tape.model = &model;
  tape.mode = mode;
  tape.states.resize(model.layers.size());
  RngStream rng(rng_seed);
  Tensor x = input;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    try {
      x = model.layers[i]->forward(x, mode, rng, tape.states[i]);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" +
                       std::string(model.layers[i]->kind()) +
                       "): " + e.what());
    }
  }
  return {std::move(x), std::move(tape)};
}

Tensor backward(Tape& tape, const Tensor& loss_grad) {
  if (tape.model == nullptr) {
    throw StateError("backward on an empty tape");
  }
  if (tape.consumed) {
    throw StateError("backward called twice on one tape");
  }
  tape.consumed = true;
  Model& model = *tape.model;
  Tensor g = loss_grad;
  for (size_t i = model.layers.size(); i-- > 0;) {
    if (!tape.states[i]) {
      throw StateError("layer " + std::to_string(i) +
                       " has no recorded state");
    }
    g = model.layers[i]->backward(g, *tape.states[i]);
  }
  // Gradient shapes must mirror parameter shapes after every pass.
  for (Parameter* p : model.parameters()) {
    if (!p->grad.same_shape(p->value)) {
      throw ShapeError("gradient shape " + p->grad.shape_str() +
                       " != parameter shape " + p->value.shape_str() +
                       " for " + p->name);
    }
  }
  tape.input_grad = g;
  return tape.input_grad;
}

namespace {

constexpr double kBceClamp = 1e-12;

Tensor bce_labels(const Tensor& y, uint64_t seed) {
  RngStream rng(mix_seed(seed, 0x6c61626cULL));
  Tensor labels(y.shape());
  for (int64_t i = 0; i < labels.numel(); ++i) {
    labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  return labels;
}

Tensor sum_weights(const Tensor& y, uint64_t seed) {
  RngStream rng(mix_seed(seed, 0x77656967ULL));
  Tensor w(y.shape());
  for (int64_t i = 0; i < w.numel(); ++i) {
    w[i] = rng.uniform(-1.0, 1.0);
  }
  return w;
}

}  // namespace

double loss_value(const Tensor& y, const LossSpec& spec) {
  switch (spec.kind) {
    case LossSpec::Kind::Sum: {
      double s = 0.0;
      for (int64_t i = 0; i < y.numel(); ++i) s += y[i];
      return s;
    }
    case LossSpec::Kind::WeightedSum: {
      const Tensor w = sum_weights(y, spec.seed);
      double s = 0.0;
      for (int64_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
      return s;
    }
    case LossSpec::Kind::Bce: {
      const Tensor labels = bce_labels(y, spec.seed);
      double s = 0.0;
      for (int64_t i = 0; i < y.numel(); ++i) {
        const double p = std::clamp(y[i], kBceClamp, 1.0 - kBceClamp);
        s += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
      }
      return s / static_cast<double>(y.numel());
    }
  }
  throw ValueError("unknown loss kind");
}

Tensor loss_grad(const Tensor& y, const LossSpec& spec) {
  Tensor g(y.shape());
  switch (spec.kind) {
    case LossSpec::Kind::Sum:
      g.fill(1.0);
      return g;
    case LossSpec::Kind::WeightedSum:
      return sum_weights(y, spec.seed);
    case LossSpec::Kind::Bce: {
      const Tensor labels = bce_labels(y, spec.seed);
      const double inv_n = 1.0 / static_cast<double>(y.numel());
      for (int64_t i = 0; i < y.numel(); ++i) {
        const double p = std::clamp(y[i], kBceClamp, 1.0 - kBceClamp);
        g[i] = (p - labels[i]) / (p * (1.0 - p)) * inv_n;
      }
      return g;
    }
  }
  throw ValueError("unknown loss kind");
}

bool GradReport::pass() const {
  for (const auto& e : entries) {
    if (!e.finite || e.max_rel_err >= tolerance) return false;
  }
  return true;
}

double GradReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

GradReport grad_check(Model& model, const Tensor& input, const LossSpec& loss,
                      double tolerance, Mode mode, uint64_t rng_seed,
                      int64_t max_per_param) {
  GradReport report;
  report.tolerance = tolerance;

  // One analytic pass; the same rng_seed replays the identical dropout masks
  // in every finite-difference evaluation below.
  model.zero_grad();
  auto [y0, tape] = forward_record(model, input, mode, rng_seed);
  backward(tape, loss_grad(y0, loss));

  auto eval_loss = [&]() {
    auto [y, t] = forward_record(model, input, mode, rng_seed);
    return loss_value(y, loss);
  };

  for (Parameter* p : model.parameters()) {
    GradReportEntry entry;
    entry.param = p->name;

    std::vector<int64_t> indices;
    if (p->value.numel() <= max_per_param) {
      indices.resize(static_cast<size_t>(p->value.numel()));
      for (int64_t i = 0; i < p->value.numel(); ++i) indices[i] = i;
    } else {
      RngStream pick(mix_seed(rng_seed, mix_seed(0x70696b6bULL,
                                                 std::hash<std::string>{}(p->name))));
      indices.reserve(static_cast<size_t>(max_per_param));
      for (int64_t i = 0; i < max_per_param; ++i) {
        indices.push_back(pick.bounded(p->value.numel()));
      }
    }

    for (int64_t idx : indices) {
      const double theta = p->value[idx];
      const double h = 1e-5 * std::max(1.0, std::abs(theta));
      p->value[idx] = theta + h;
      const double lp = eval_loss();
      p->value[idx] = theta - h;
      const double lm = eval_loss();
      p->value[idx] = theta;

      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = p->grad[idx];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        entry.finite = false;
        entry.worst_index = idx;
        entry.max_rel_err = std::numeric_limits<double>::infinity();
        break;
      }
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = idx;
      }
      ++entry.checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace msinet
