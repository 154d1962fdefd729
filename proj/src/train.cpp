#include "msinet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "msinet/errors.hpp"
#include "msinet/kernels.hpp"

namespace msinet {

namespace {
constexpr double kProbClamp = 1e-12;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ValueError("learning_rate must be > 0");
  if (grad_clip <= 0.0) throw ValueError("grad_clip must be > 0");
  if (weight_decay < 0.0) throw ValueError("weight_decay must be >= 0");
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (epochs < 0) throw ValueError("epochs must be >= 0");
  if (clip_mode != "value" && clip_mode != "norm") {
    throw ValueError("clip_mode must be 'value' or 'norm', got '" + clip_mode +
                     "'");
  }
}

std::string TrainConfig::to_text(const std::string& prefix) const {
  std::ostringstream os;
  os.precision(17);
  os << prefix << "learning_rate=" << learning_rate << '\n';
  os << prefix << "grad_clip=" << grad_clip << '\n';
  os << prefix << "clip_mode=" << clip_mode << '\n';
  os << prefix << "weight_decay=" << weight_decay << '\n';
  os << prefix << "decoupled_weight_decay=" << (decoupled_weight_decay ? 1 : 0)
     << '\n';
  os << prefix << "beta1=" << beta1 << '\n';
  os << prefix << "beta2=" << beta2 << '\n';
  os << prefix << "adam_epsilon=" << adam_epsilon << '\n';
  os << prefix << "batch_size=" << batch_size << '\n';
  os << prefix << "epochs=" << epochs << '\n';
  os << prefix << "seed=" << seed << '\n';
  os << prefix << "thread_count=" << thread_count << '\n';
  return os.str();
}

bool TrainConfig::apply_kv(const std::string& key, const std::string& value) {
  try {
    if (key == "learning_rate") learning_rate = std::stod(value);
    else if (key == "grad_clip") grad_clip = std::stod(value);
    else if (key == "clip_mode") clip_mode = value;
    else if (key == "weight_decay") weight_decay = std::stod(value);
    else if (key == "decoupled_weight_decay")
      decoupled_weight_decay = std::stoll(value) != 0;
    else if (key == "beta1") beta1 = std::stod(value);
    else if (key == "beta2") beta2 = std::stod(value);
    else if (key == "adam_epsilon") adam_epsilon = std::stod(value);
    else if (key == "batch_size") batch_size = std::stoll(value);
    else if (key == "epochs") epochs = std::stoll(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "thread_count") thread_count = std::stoi(value);
    else return false;
  } catch (const std::exception&) {
    throw ValueError("bad value '" + value + "' for config key '" + key + "'");
  }
  return true;
}

AdamState AdamState::init_like(const std::vector<Parameter*>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Parameter* p : params) {
    state.m.emplace_back(p->value.shape());
    state.v.emplace_back(p->value.shape());
  }
  return state;
}

double bce_loss(const Tensor& prob, const Tensor& labels) {
  if (!prob.same_shape(labels)) {
    throw ShapeError("bce_loss shapes differ: " + prob.shape_str() + " vs " +
                     labels.shape_str());
  }
  double sum = 0.0;
  for (int64_t i = 0; i < prob.numel(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) {
      throw ValueError("bce_loss labels must be 0 or 1, got " +
                       std::to_string(y));
    }
    const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(prob.numel());
}

Tensor bce_grad(const Tensor& prob, const Tensor& labels) {
  if (!prob.same_shape(labels)) {
    throw ShapeError("bce_grad shapes differ");
  }
  Tensor g(prob.shape());
  const double inv_n = 1.0 / static_cast<double>(prob.numel());
  for (int64_t i = 0; i < prob.numel(); ++i) {
    const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
    g[i] = (p - labels[i]) / (p * (1.0 - p)) * inv_n;
  }
  return g;
}

void clip_value(Tensor& grad, double threshold) {
  if (threshold <= 0.0) throw ValueError("clip threshold must be > 0");
  for (int64_t i = 0; i < grad.numel(); ++i) {
    grad[i] = std::clamp(grad[i], -threshold, threshold);
  }
}

void clip_norm(std::vector<Parameter*>& params, double threshold) {
  if (threshold <= 0.0) throw ValueError("clip threshold must be > 0");
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (int64_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (norm <= threshold) return;
  const double scale = threshold / norm;
  for (Parameter* p : params) {
    for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= scale;
  }
}

void clip_gradients(std::vector<Parameter*>& params, const TrainConfig& cfg) {
  if (cfg.clip_mode == "norm") {
    clip_norm(params, cfg.grad_clip);
    return;
  }
  for (Parameter* p : params) {
    clip_value(p->grad, cfg.grad_clip);
  }
}

void adam_step(std::vector<Parameter*>& params, AdamState& state,
               const TrainConfig& cfg) {
  if (state.m.size() != params.size()) {
    throw ValueError("adam state does not match parameter list");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      double g = p.grad[i];
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in " + p.name + " at index " +
                           std::to_string(i));
      }
      if (!cfg.decoupled_weight_decay) {
        g += cfg.weight_decay * p.value[i];
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double update = cfg.learning_rate * m_hat /
                      (std::sqrt(v_hat) + cfg.adam_epsilon);
      if (cfg.decoupled_weight_decay) {
        update += cfg.learning_rate * cfg.weight_decay * p.value[i];
      }
      p.value[i] -= update;
    }
  }
}

std::string epoch_csv_text(const std::vector<EpochRecord>& records) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f\n",
                  static_cast<long long>(r.epoch), r.train_loss, r.val_loss);
    out += buf;
  }
  return out;
}

namespace {

void flush_epoch_csv(const std::string& path,
                     const std::vector<EpochRecord>& records) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write epoch csv: " + path);
  os << epoch_csv_text(records);
  os.flush();
}

}  // namespace

double evaluate_loss(Model& model, const Dataset& data, int64_t batch_size) {
  if (data.empty()) throw ValueError("evaluate_loss on an empty dataset");
  double sum = 0.0;
  size_t pos = 0;
  while (pos < data.size()) {
    const size_t take =
        std::min(static_cast<size_t>(batch_size), data.size() - pos);
    std::vector<size_t> idx(take);
    for (size_t i = 0; i < take; ++i) idx[i] = pos + i;
    auto [x, y] = assemble_batch(data, idx);
    auto [prob, tape] = forward_record(model, x, Mode::Eval);
    sum += bce_loss(prob, y) * static_cast<double>(take);
    pos += take;
  }
  return sum / static_cast<double>(data.size());
}

std::pair<std::vector<int>, std::vector<int>> predict_dataset(
    Model& model, const Dataset& data, int64_t batch_size) {
  std::vector<int> pred, actual;
  pred.reserve(data.size());
  actual.reserve(data.size());
  size_t pos = 0;
  while (pos < data.size()) {
    const size_t take =
        std::min(static_cast<size_t>(batch_size), data.size() - pos);
    std::vector<size_t> idx(take);
    for (size_t i = 0; i < take; ++i) idx[i] = pos + i;
    auto [x, y] = assemble_batch(data, idx);
    auto [prob, classes] = forward_classify(model, x);
    for (size_t i = 0; i < take; ++i) {
      pred.push_back(classes[i]);
      actual.push_back(data[pos + i].label);
    }
    pos += take;
  }
  return {std::move(pred), std::move(actual)};
}

std::vector<EpochRecord> fit(Model& model, const Dataset& train_set,
                             const Dataset& val_set, const TrainConfig& cfg,
                             AdamState* state, const std::string& epoch_csv,
                             const EpochObserver& observer) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw ValueError("fit requires non-empty train and validation sets");
  }
  kernels::set_thread_count(cfg.thread_count);

  auto params = model.parameters();
  AdamState local_state;
  if (state == nullptr) {
    local_state = AdamState::init_like(params);
    state = &local_state;
  } else if (state->empty()) {
    *state = AdamState::init_like(params);
  }

  std::vector<EpochRecord> records;
  uint64_t step = 0;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches =
        make_batches(train_set.size(), cfg.batch_size,
                     mix_seed(cfg.seed, 0x65706f63ULL + epoch), false);
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      auto [x, y] = assemble_batch(train_set, batches[bi]);
      auto [prob, tape] = forward_record(model, x, Mode::Train,
                                         mix_seed(cfg.seed, 0x64726f70ULL + step));
      const double loss = bce_loss(prob, y);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(bi));
      }
      loss_sum += loss * static_cast<double>(batches[bi].size());
      seen += static_cast<int64_t>(batches[bi].size());

      model.zero_grad();
      backward(tape, bce_grad(prob, y));
      clip_gradients(params, cfg);
      adam_step(params, *state, cfg);
      ++step;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(seen);
    record.val_loss = evaluate_loss(model, val_set, cfg.batch_size);
    records.push_back(record);
    flush_epoch_csv(epoch_csv, records);
    if (observer && !observer(record, model)) {
      break;
    }
  }
  return records;
}

}  // namespace msinet
