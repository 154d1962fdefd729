#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msinet/autograd.hpp"
#include "msinet/layers.hpp"

namespace msinet {

struct StageSpec {
  BlockKind kind = BlockKind::Bottleneck;
  int count = 0;
  int64_t mid_channels = 0;
  int64_t out_channels = 0;
  int64_t stride = 1;
};

// Everything needed to rebuild a network and predict its shape trace.
struct ArchDescriptor {
  std::string name;
  int64_t in_channels = 3;
  int64_t input_hw = 224;
  double width_mult = 1.0;
  std::vector<double> fc_dropout;  // rates after each hidden FC (may be empty)

  // Derived structural plan, filled by the builders.
  std::vector<StageSpec> stages;
  std::vector<int64_t> fc_widths;  // output width of each FC in the head

  std::string to_text() const;
  // Parses the key=value block and rebuilds the plan via the named builder.
  static ArchDescriptor from_text(const std::string& text);
};

struct BuiltModel {
  Model model;
  ArchDescriptor descriptor;
};

// Table-like bottleneck network: 3x3/64 stride-2 stem conv + 2x2 max pool,
// bottleneck stages with multiplicities (2,3,5,2) and strides (1,2,2,2),
// adaptive average pool and an FC head 2048-512-128-1 ending in a sigmoid.
BuiltModel build_modified_resnet(double width_mult = 1.0,
                                 int64_t input_hw = 224, uint64_t seed = 0,
                                 std::vector<double> fc_dropout = {0.5, 0.3,
                                                                   0.2});

// Standard depths; basic blocks for 18/34, bottleneck for 50/101/152. The
// head is a single-logit sigmoid classifier.
BuiltModel build_resnet_family(int depth, int64_t input_hw = 224,
                               uint64_t seed = 0);

// kind: "logreg", "ffnn4" or "cnn5".
BuiltModel build_baseline(const std::string& kind, int64_t input_hw = 224,
                          uint64_t seed = 0);

// Dispatch by architecture name ("modified-resnet", "resnet18".."resnet152",
// "logreg", "ffnn4", "cnn5").
BuiltModel build_model(const std::string& name, double width_mult,
                       int64_t input_hw, uint64_t seed,
                       std::vector<double> fc_dropout = {});
BuiltModel build_model(const ArchDescriptor& desc, uint64_t seed = 0);

bool is_known_arch(const std::string& name);

// Arithmetic per-layer output shapes for a batch of `n` (no forward pass).
std::vector<std::vector<int64_t>> compute_trace(const Model& model, int64_t n);

// Eval-mode forward returning every top-level layer's output shape.
std::vector<std::vector<int64_t>> forward_trace(Model& model, const Tensor& x);

// Sigmoid probability of class 1 (MSS) plus thresholded class per row.
std::pair<Tensor, std::vector<int>> forward_classify(Model& model,
                                                     const Tensor& batch);

inline int predicted_class(double prob) { return prob >= 0.5 ? 1 : 0; }

// Conv + linear layers on the main path; projection shortcuts and
// batchnorms are not counted.
int count_weight_layers(const Model& model);

}  // namespace msinet
