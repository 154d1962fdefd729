#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "msinet/autograd.hpp"
#include "msinet/data.hpp"
#include "msinet/models.hpp"
#include "msinet/tensor.hpp"

namespace msinet {

struct TrainConfig {
  double learning_rate = 0.001;
  double grad_clip = 0.1;
  std::string clip_mode = "value";  // value | norm
  double weight_decay = 1e-4;
  bool decoupled_weight_decay = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int64_t batch_size = 32;
  int64_t epochs = 10;
  uint64_t seed = 0;
  int thread_count = 0;

  void validate() const;
  // One `key=value` line per field, keyed by the field names above.
  std::string to_text(const std::string& prefix = "") const;
  // Returns false when the key is not a TrainConfig field.
  bool apply_kv(const std::string& key, const std::string& value);
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t = 0;

  static AdamState init_like(const std::vector<Parameter*>& params);
  bool empty() const { return m.empty(); }
};

// Mean over the batch of -(y ln p + (1-y) ln(1-p)), p clamped to
// [1e-12, 1-1e-12]. Labels must be exactly 0 or 1.
double bce_loss(const Tensor& prob, const Tensor& labels);
// dL/dp = (p - y) / (p (1 - p)) / N at the clamped p.
Tensor bce_grad(const Tensor& prob, const Tensor& labels);

// Elementwise clamp into [-threshold, threshold].
void clip_value(Tensor& grad, double threshold);
// Scales the concatenated gradient to threshold when its L2 norm exceeds it.
void clip_norm(std::vector<Parameter*>& params, double threshold);
// Applies the configured clip mode to every parameter gradient.
void clip_gradients(std::vector<Parameter*>& params, const TrainConfig& cfg);

// One Adam update with coupled L2 weight decay (g' = g + wd*theta feeds the
// moments); decoupled decay applies lr*wd*theta separately when configured.
// Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(std::vector<Parameter*>& params, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Called after every epoch; return false to stop training early.
using EpochObserver = std::function<bool(const EpochRecord&, Model&)>;

// The epoch loop: seeded shuffle, forward (train mode) -> BCE -> backward ->
// clip -> adam per batch, then a full eval-mode validation pass. When
// epoch_csv is non-empty the file is rewritten and flushed after every epoch
// (header `epoch,train_loss,val_loss`, 6 decimal places).
std::vector<EpochRecord> fit(Model& model, const Dataset& train_set,
                             const Dataset& val_set, const TrainConfig& cfg,
                             AdamState* state = nullptr,
                             const std::string& epoch_csv = "",
                             const EpochObserver& observer = nullptr);

// Mean BCE over a dataset in manifest order, eval mode.
double evaluate_loss(Model& model, const Dataset& data, int64_t batch_size);

// Eval-mode predictions: (predicted class, actual label) per record.
std::pair<std::vector<int>, std::vector<int>> predict_dataset(
    Model& model, const Dataset& data, int64_t batch_size);

std::string epoch_csv_text(const std::vector<EpochRecord>& records);

// ---------------------------------------------------------------------------
// Checkpoints: magic "NNCK", version u16, length-prefixed descriptor text,
// then named tensors (u16 name length + bytes, dtype u8 = 0 for f64, rank u8,
// u64 dims, raw little-endian doubles).
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_checkpoint_raw(const std::filesystem::path& path,
                          const std::string& text,
                          const std::vector<NamedTensor>& tensors);
std::pair<std::string, std::vector<NamedTensor>> read_checkpoint_raw(
    const std::filesystem::path& path);

void save_checkpoint(Model& model, const AdamState* state,
                     const TrainConfig& cfg,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  BuiltModel built;
  AdamState state;
  TrainConfig cfg;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msinet
