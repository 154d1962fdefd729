#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msinet/tensor.hpp"

namespace msinet {

enum class Mode { Train, Eval };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

// Per-call intermediates a layer saves for its backward rule; owned by the
// tape, one slot per layer invocation.
struct LayerState {
  virtual ~LayerState() = default;
};

using StatePtr = std::unique_ptr<LayerState>;

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const = 0;

  // Computes the output and stows whatever backward needs into `saved`.
  // Stochastic layers draw from `rng`, so a fixed seed fixes the realization.
  virtual Tensor forward(const Tensor& x, Mode mode, RngStream& rng,
                         StatePtr& saved) = 0;

  // Consumes `saved`, accumulates parameter gradients, returns dL/dx.
  virtual Tensor backward(const Tensor& grad_out, LayerState& saved) = 0;

  // Appends parameter pointers with hierarchical names under `prefix`.
  virtual void collect_parameters(const std::string& prefix,
                                  std::vector<Parameter*>& out);

  // Non-trainable persistent tensors (batchnorm running statistics).
  virtual void collect_buffers(const std::string& prefix,
                               std::vector<std::pair<std::string, Tensor*>>& out);

  // Conv/linear layers on the main path count as weight layers; projection
  // shortcuts and batchnorms do not.
  virtual int weight_layer_count() const { return 0; }

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

 protected:
  std::string name_;
};

// Ordered composition of layers built from an architecture descriptor.
class Model {
 public:
  std::vector<std::unique_ptr<Layer>> layers;
  Mode mode = Mode::Train;
  std::vector<int64_t> input_shape;  // [C,H,W]
  std::string descriptor_text;       // key=value block stored in checkpoints

  void set_mode(Mode m) { mode = m; }

  // Parameter pointers in a stable order; names are prefixed by layer path.
  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> buffers();
  void zero_grad();
  int64_t parameter_count();
};

// Records one forward pass so backward can replay it exactly.
class Tape {
 public:
  Model* model = nullptr;
  Mode mode = Mode::Train;
  std::vector<StatePtr> states;  // parallel to model->layers
  bool consumed = false;
  Tensor input_grad;  // populated by backward()
};

// Runs the model on `input`, recording per-layer state. Dropout masks and
// any other random draws are derived from `rng_seed`, so equal seeds replay
// the identical stochastic realization.
std::pair<Tensor, Tape> forward_record(Model& model, const Tensor& input,
                                       Mode mode, uint64_t rng_seed = 0);

// Reverse pass over a recorded tape. Parameter gradients accumulate into
// Parameter::grad; the input gradient is returned (and kept on the tape).
Tensor backward(Tape& tape, const Tensor& loss_grad);

// Loss functions the gradient checker drives models with.
struct LossSpec {
  enum class Kind {
    Sum,          // L = sum(y)
    WeightedSum,  // L = sum(w .* y), fixed random w from `seed`
    Bce           // mean binary cross entropy vs random {0,1} labels
  };
  Kind kind = Kind::WeightedSum;
  uint64_t seed = 0;
};

double loss_value(const Tensor& y, const LossSpec& spec);
Tensor loss_grad(const Tensor& y, const LossSpec& spec);

struct GradReportEntry {
  std::string param;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  int64_t checked = 0;
  bool finite = true;
};

// Per-parameter maximum relative error |a-n| / max(|a|,|n|,1e-8) between the
// analytic and central-difference gradients.
struct GradReport {
  std::vector<GradReportEntry> entries;
  double tolerance = 1e-4;

  bool pass() const;
  double worst() const;
};

// Central-difference check with relative step 1e-5*max(1,|theta|). Every
// parameter element is visited when the tensor has at most `max_per_param`
// elements; larger tensors use a seeded subsample of that size.
GradReport grad_check(Model& model, const Tensor& input, const LossSpec& loss,
                      double tolerance, Mode mode = Mode::Train,
                      uint64_t rng_seed = 0, int64_t max_per_param = 200);

}  // namespace msinet
