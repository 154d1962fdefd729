#include "msinet/models.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "msinet/errors.hpp"

namespace msinet {

namespace {

int64_t scaled(int64_t channels, double width_mult) {
  return std::max<int64_t>(1, std::llround(channels * width_mult));
}

std::unique_ptr<Conv2dLayer> make_conv(std::string name, int64_t in,
                                       int64_t out, int64_t k, int64_t s,
                                       int64_t p, bool bias, uint64_t seed) {
  Conv2dSpec spec;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.kh = spec.kw = k;
  spec.sh = spec.sw = s;
  spec.ph = spec.pw = p;
  spec.bias = bias;
  auto layer = std::make_unique<Conv2dLayer>(spec, seed);
  layer->set_name(std::move(name));
  return layer;
}

std::unique_ptr<LinearLayer> make_linear(std::string name, int64_t in,
                                         int64_t out, uint64_t seed) {
  auto layer = std::make_unique<LinearLayer>(LinearSpec{in, out, true}, seed);
  layer->set_name(std::move(name));
  return layer;
}

std::unique_ptr<Layer> named(std::unique_ptr<Layer> layer, std::string n) {
  layer->set_name(std::move(n));
  return layer;
}

std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

std::string ArchDescriptor::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "arch=" << name << '\n';
  os << "width_mult=" << width_mult << '\n';
  os << "input_hw=" << input_hw << '\n';
  if (!fc_dropout.empty()) {
    os << "fc_dropout=" << join_doubles(fc_dropout) << '\n';
  }
  return os.str();
}

ArchDescriptor ArchDescriptor::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!kv.count("arch")) {
    throw ParseError("descriptor text missing 'arch' key");
  }
  const std::string name = kv["arch"];
  const double width = kv.count("width_mult") ? std::stod(kv["width_mult"]) : 1.0;
  const int64_t hw = kv.count("input_hw") ? std::stoll(kv["input_hw"]) : 224;
  std::vector<double> drops;
  if (kv.count("fc_dropout")) drops = split_doubles(kv["fc_dropout"]);
  return build_model(name, width, hw, 0, drops).descriptor;
}

BuiltModel build_modified_resnet(double width_mult, int64_t input_hw,
                                 uint64_t seed,
                                 std::vector<double> fc_dropout) {
  if (input_hw < 32 || input_hw % 32 != 0) {
    throw ShapeError("modified-resnet input size must be a positive multiple "
                     "of 32, got " + std::to_string(input_hw));
  }
  if (fc_dropout.size() != 3) {
    throw ValueError("modified-resnet expects 3 FC dropout rates");
  }

  ArchDescriptor desc;
  desc.name = "modified-resnet";
  desc.input_hw = input_hw;
  desc.width_mult = width_mult;
  desc.fc_dropout = fc_dropout;
  const int counts[4] = {2, 3, 5, 2};
  const int64_t mids[4] = {64, 128, 256, 512};
  const int64_t outs[4] = {256, 512, 1024, 2048};
  const int64_t strides[4] = {1, 2, 2, 2};
  for (int i = 0; i < 4; ++i) {
    desc.stages.push_back({BlockKind::Bottleneck, counts[i],
                           scaled(mids[i], width_mult),
                           scaled(outs[i], width_mult), strides[i]});
  }
  const int64_t stem_out = scaled(64, width_mult);
  const int64_t fc1 = scaled(2048, width_mult);
  const int64_t fc2 = scaled(512, width_mult);
  const int64_t fc3 = scaled(128, width_mult);
  desc.fc_widths = {fc1, fc2, fc3, 1};

  BuiltModel built;
  Model& m = built.model;
  m.input_shape = {3, input_hw, input_hw};
  uint64_t salt = 0;
  auto next_seed = [&] { return mix_seed(seed, salt++); };

  m.layers.push_back(make_conv("stem.conv", 3, stem_out, 3, 2, 1, false,
                               next_seed()));
  m.layers.push_back(named(std::make_unique<BatchNorm2dLayer>(
                               BatchNorm2dSpec{stem_out}),
                           "stem.bn"));
  m.layers.push_back(named(std::make_unique<ReluLayer>(), "stem.relu"));
  m.layers.push_back(named(std::make_unique<MaxPool2dLayer>(), "stem.pool"));

  int64_t in_ch = stem_out;
  for (int s = 0; s < 4; ++s) {
    const auto& stage = desc.stages[s];
    for (int b = 0; b < stage.count; ++b) {
      const int64_t stride = b == 0 ? stage.stride : 1;
      auto block = std::make_unique<ResidualBlock>(
          BlockKind::Bottleneck, in_ch, stage.mid_channels, stage.out_channels,
          stride, next_seed());
      block->set_name("stage" + std::to_string(s + 1) + ".block" +
                      std::to_string(b));
      m.layers.push_back(std::move(block));
      in_ch = stage.out_channels;
    }
  }

  m.layers.push_back(
      named(std::make_unique<AdaptiveAvgPool2dLayer>(), "head.avgpool"));
  m.layers.push_back(named(std::make_unique<FlattenLayer>(), "head.flatten"));
  const int64_t fc_ins[4] = {in_ch, fc1, fc2, fc3};
  for (int i = 0; i < 4; ++i) {
    m.layers.push_back(make_linear("head.fc" + std::to_string(i + 1),
                                   fc_ins[i], desc.fc_widths[i], next_seed()));
    if (i < 3) {
      m.layers.push_back(named(std::make_unique<ReluLayer>(),
                               "head.relu" + std::to_string(i + 1)));
      m.layers.push_back(named(std::make_unique<DropoutLayer>(
                                   DropoutSpec{fc_dropout[i]}),
                               "head.drop" + std::to_string(i + 1)));
    }
  }
  m.layers.push_back(named(std::make_unique<SigmoidLayer>(), "head.sigmoid"));

  m.descriptor_text = desc.to_text();
  built.descriptor = std::move(desc);
  return built;
}

BuiltModel build_resnet_family(int depth, int64_t input_hw, uint64_t seed) {
  struct Plan {
    BlockKind kind;
    int counts[4];
  };
  static const std::map<int, Plan> plans = {
      {18, {BlockKind::Basic, {2, 2, 2, 2}}},
      {34, {BlockKind::Basic, {3, 4, 6, 3}}},
      {50, {BlockKind::Bottleneck, {3, 4, 6, 3}}},
      {101, {BlockKind::Bottleneck, {3, 4, 23, 3}}},
      {152, {BlockKind::Bottleneck, {3, 8, 36, 3}}},
  };
  const auto it = plans.find(depth);
  if (it == plans.end()) {
    throw ValueError("unsupported resnet depth " + std::to_string(depth) +
                     " (expected 18, 34, 50, 101 or 152)");
  }
  if (input_hw < 32 || input_hw % 32 != 0) {
    throw ShapeError("resnet input size must be a positive multiple of 32, "
                     "got " + std::to_string(input_hw));
  }
  const Plan& plan = it->second;
  const bool bottleneck = plan.kind == BlockKind::Bottleneck;

  ArchDescriptor desc;
  desc.name = "resnet" + std::to_string(depth);
  desc.input_hw = input_hw;
  const int64_t mids[4] = {64, 128, 256, 512};
  const int64_t strides[4] = {1, 2, 2, 2};
  for (int i = 0; i < 4; ++i) {
    desc.stages.push_back({plan.kind, plan.counts[i], mids[i],
                           bottleneck ? mids[i] * 4 : mids[i], strides[i]});
  }
  desc.fc_widths = {1};

  BuiltModel built;
  Model& m = built.model;
  m.input_shape = {3, input_hw, input_hw};
  uint64_t salt = 0;
  auto next_seed = [&] { return mix_seed(seed, salt++); };

  m.layers.push_back(make_conv("stem.conv", 3, 64, 7, 2, 3, false,
                               next_seed()));
  m.layers.push_back(
      named(std::make_unique<BatchNorm2dLayer>(BatchNorm2dSpec{64}),
            "stem.bn"));
  m.layers.push_back(named(std::make_unique<ReluLayer>(), "stem.relu"));
  m.layers.push_back(named(std::make_unique<MaxPool2dLayer>(), "stem.pool"));

  int64_t in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    const auto& stage = desc.stages[s];
    for (int b = 0; b < stage.count; ++b) {
      const int64_t stride = b == 0 ? stage.stride : 1;
      auto block = std::make_unique<ResidualBlock>(stage.kind, in_ch,
                                                   stage.mid_channels,
                                                   stage.out_channels, stride,
                                                   next_seed());
      block->set_name("stage" + std::to_string(s + 1) + ".block" +
                      std::to_string(b));
      m.layers.push_back(std::move(block));
      in_ch = stage.out_channels;
    }
  }

  m.layers.push_back(
      named(std::make_unique<AdaptiveAvgPool2dLayer>(), "head.avgpool"));
  m.layers.push_back(named(std::make_unique<FlattenLayer>(), "head.flatten"));
  m.layers.push_back(make_linear("head.fc", in_ch, 1, next_seed()));
  m.layers.push_back(named(std::make_unique<SigmoidLayer>(), "head.sigmoid"));

  m.descriptor_text = desc.to_text();
  built.descriptor = std::move(desc);
  return built;
}

BuiltModel build_baseline(const std::string& kind, int64_t input_hw,
                          uint64_t seed) {
  ArchDescriptor desc;
  desc.name = kind;
  desc.input_hw = input_hw;

  BuiltModel built;
  Model& m = built.model;
  m.input_shape = {3, input_hw, input_hw};
  uint64_t salt = 0;
  auto next_seed = [&] { return mix_seed(seed, salt++); };
  const int64_t flat = 3 * input_hw * input_hw;

  if (kind == "logreg") {
    desc.fc_widths = {1};
    m.layers.push_back(named(std::make_unique<FlattenLayer>(), "flatten"));
    m.layers.push_back(make_linear("fc", flat, 1, next_seed()));
    m.layers.push_back(named(std::make_unique<SigmoidLayer>(), "sigmoid"));
  } else if (kind == "ffnn4") {
    desc.fc_widths = {512, 128, 32, 1};
    m.layers.push_back(named(std::make_unique<FlattenLayer>(), "flatten"));
    int64_t in = flat;
    for (size_t i = 0; i < desc.fc_widths.size(); ++i) {
      m.layers.push_back(make_linear("fc" + std::to_string(i + 1), in,
                                     desc.fc_widths[i], next_seed()));
      in = desc.fc_widths[i];
      if (i + 1 < desc.fc_widths.size()) {
        m.layers.push_back(named(std::make_unique<ReluLayer>(),
                                 "relu" + std::to_string(i + 1)));
      }
    }
    m.layers.push_back(named(std::make_unique<SigmoidLayer>(), "sigmoid"));
  } else if (kind == "cnn5") {
    if (input_hw < 32) {
      throw ShapeError("cnn5 needs input >= 32 for five pooling stages");
    }
    desc.fc_dropout = {0.5};
    const int64_t channels[5] = {16, 32, 64, 128, 256};
    int64_t in_ch = 3;
    int64_t hw = input_hw;
    for (int i = 0; i < 5; ++i) {
      const std::string idx = std::to_string(i + 1);
      m.layers.push_back(make_conv("conv" + idx, in_ch, channels[i], 3, 1, 1,
                                   false, next_seed()));
      m.layers.push_back(named(std::make_unique<BatchNorm2dLayer>(
                                   BatchNorm2dSpec{channels[i]}),
                               "bn" + idx));
      m.layers.push_back(named(std::make_unique<ReluLayer>(), "relu" + idx));
      m.layers.push_back(named(std::make_unique<MaxPool2dLayer>(),
                               "pool" + idx));
      in_ch = channels[i];
      hw /= 2;
    }
    desc.fc_widths = {512, 1};
    m.layers.push_back(named(std::make_unique<FlattenLayer>(), "flatten"));
    m.layers.push_back(make_linear("fc1", in_ch * hw * hw, 512, next_seed()));
    m.layers.push_back(named(std::make_unique<ReluLayer>(), "fc_relu"));
    m.layers.push_back(named(std::make_unique<DropoutLayer>(DropoutSpec{0.5}),
                             "fc_drop"));
    m.layers.push_back(make_linear("fc2", 512, 1, next_seed()));
    m.layers.push_back(named(std::make_unique<SigmoidLayer>(), "sigmoid"));
  } else {
    throw ValueError("unknown baseline kind '" + kind +
                     "' (expected logreg, ffnn4 or cnn5)");
  }

  m.descriptor_text = desc.to_text();
  built.descriptor = std::move(desc);
  return built;
}

bool is_known_arch(const std::string& name) {
  static const std::vector<std::string> known = {
      "modified-resnet", "resnet18", "resnet34", "resnet50",
      "resnet101",       "resnet152", "logreg",  "ffnn4",
      "cnn5"};
  for (const auto& k : known) {
    if (k == name) return true;
  }
  return false;
}

BuiltModel build_model(const std::string& name, double width_mult,
                       int64_t input_hw, uint64_t seed,
                       std::vector<double> fc_dropout) {
  if (name == "modified-resnet") {
    if (fc_dropout.empty()) fc_dropout = {0.5, 0.3, 0.2};
    return build_modified_resnet(width_mult, input_hw, seed, fc_dropout);
  }
  if (name.rfind("resnet", 0) == 0) {
    const int depth = std::stoi(name.substr(6));
    return build_resnet_family(depth, input_hw, seed);
  }
  return build_baseline(name, input_hw, seed);
}

BuiltModel build_model(const ArchDescriptor& desc, uint64_t seed) {
  return build_model(desc.name, desc.width_mult, desc.input_hw, seed,
                     desc.fc_dropout);
}

std::vector<std::vector<int64_t>> compute_trace(const Model& model,
                                                int64_t n) {
  std::vector<std::vector<int64_t>> trace;
  std::vector<int64_t> shape = {n, model.input_shape[0], model.input_shape[1],
                                model.input_shape[2]};
  for (const auto& layer : model.layers) {
    if (auto* conv = dynamic_cast<const Conv2dLayer*>(layer.get())) {
      const auto [oh, ow] = conv->spec().out_hw(shape[2], shape[3]);
      shape = {shape[0], conv->spec().out_channels, oh, ow};
    } else if (dynamic_cast<const MaxPool2dLayer*>(layer.get())) {
      shape = {shape[0], shape[1], shape[2] / 2, shape[3] / 2};
    } else if (dynamic_cast<const AdaptiveAvgPool2dLayer*>(layer.get())) {
      shape = {shape[0], shape[1], 1, 1};
    } else if (dynamic_cast<const FlattenLayer*>(layer.get())) {
      shape = {shape[0],
               Tensor::shape_numel(shape) / shape[0]};
    } else if (auto* block =
                   dynamic_cast<const ResidualBlock*>(layer.get())) {
      auto* self = const_cast<ResidualBlock*>(block);
      int64_t out_c = shape[1];
      int64_t stride = 1;
      for (auto& child : self->main_path()) {
        if (auto* c = dynamic_cast<Conv2dLayer*>(child.get())) {
          out_c = c->spec().out_channels;
          if (c->spec().sh != 1) stride = c->spec().sh;
        }
      }
      shape = {shape[0], out_c, shape[2] / stride, shape[3] / stride};
    } else if (auto* fc = dynamic_cast<const LinearLayer*>(layer.get())) {
      shape = {shape[0], fc->spec().out_features};
    }
    // batchnorm, relu, sigmoid, dropout keep their input shape
    trace.push_back(shape);
  }
  return trace;
}

std::vector<std::vector<int64_t>> forward_trace(Model& model,
                                                const Tensor& x) {
  std::vector<std::vector<int64_t>> trace;
  RngStream rng(0);
  Tensor cur = x;
  for (auto& layer : model.layers) {
    StatePtr state;
    cur = layer->forward(cur, Mode::Eval, rng, state);
    trace.push_back(cur.shape());
  }
  return trace;
}

std::pair<Tensor, std::vector<int>> forward_classify(Model& model,
                                                     const Tensor& batch) {
  auto [prob, tape] = forward_record(model, batch, Mode::Eval);
  std::vector<int> classes(static_cast<size_t>(prob.numel()));
  for (int64_t i = 0; i < prob.numel(); ++i) {
    classes[static_cast<size_t>(i)] = predicted_class(prob[i]);
  }
  return {std::move(prob), std::move(classes)};
}

int count_weight_layers(const Model& model) {
  int count = 0;
  for (const auto& layer : model.layers) {
    count += layer->weight_layer_count();
  }
  return count;
}

}  // namespace msinet
