#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "msinet/models.hpp"

using namespace msinet;

TEST_CASE("modified resnet computed trace reproduces the architecture table") {
  BuiltModel built = build_modified_resnet(1.0, 224, 0);
  const auto trace = compute_trace(built.model, 1);
  const auto& layers = built.model.layers;
  REQUIRE(trace.size() == layers.size());

  auto shape_after = [&](const std::string& name) {
    for (size_t i = 0; i < layers.size(); ++i) {
      if (layers[i]->name() == name) return trace[i];
    }
    FAIL("no layer named ", name);
    return std::vector<int64_t>{};
  };

  CHECK(shape_after("stem.conv") == std::vector<int64_t>{1, 64, 112, 112});
  CHECK(shape_after("stem.pool") == std::vector<int64_t>{1, 64, 56, 56});
  CHECK(shape_after("stage1.block1") == std::vector<int64_t>{1, 256, 56, 56});
  CHECK(shape_after("stage2.block2") == std::vector<int64_t>{1, 512, 28, 28});
  CHECK(shape_after("stage3.block4") == std::vector<int64_t>{1, 1024, 14, 14});
  CHECK(shape_after("stage4.block1") == std::vector<int64_t>{1, 2048, 7, 7});
  CHECK(shape_after("head.avgpool") == std::vector<int64_t>{1, 2048, 1, 1});
  CHECK(shape_after("head.fc1") == std::vector<int64_t>{1, 2048});
  CHECK(shape_after("head.fc2") == std::vector<int64_t>{1, 512});
  CHECK(shape_after("head.fc3") == std::vector<int64_t>{1, 128});
  CHECK(shape_after("head.fc4") == std::vector<int64_t>{1, 1});
}

TEST_CASE("block multiplicities are (2,3,5,2)") {
  BuiltModel built = build_modified_resnet(0.25, 64, 0);
  REQUIRE(built.descriptor.stages.size() == 4);
  CHECK(built.descriptor.stages[0].count == 2);
  CHECK(built.descriptor.stages[1].count == 3);
  CHECK(built.descriptor.stages[2].count == 5);
  CHECK(built.descriptor.stages[3].count == 2);
  for (const auto& s : built.descriptor.stages) {
    CHECK(s.kind == BlockKind::Bottleneck);
  }
}

TEST_CASE("modified resnet counts 41 weight layers") {
  BuiltModel built = build_modified_resnet(0.25, 64, 0);
  CHECK(count_weight_layers(built.model) == 41);
}

TEST_CASE("forward pass reproduces the computed trace") {
  // executable form of the architecture table at desk scale
  BuiltModel built = build_modified_resnet(0.25, 64, 1);
  const Tensor x = create({2, 3, 64, 64}, InitSpec::uniform(-1, 1, 2));
  const auto expected = compute_trace(built.model, 2);
  const auto actual = forward_trace(built.model, x);
  REQUIRE(expected.size() == actual.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(expected[i] == actual[i]);
  }
}

TEST_CASE("resnet family traces match their computed shapes") {
  for (int depth : {18, 50}) {
    BuiltModel built = build_resnet_family(depth, 64, 3);
    const Tensor x = create({1, 3, 64, 64}, InitSpec::uniform(-1, 1, 4));
    const auto expected = compute_trace(built.model, 1);
    const auto actual = forward_trace(built.model, x);
    REQUIRE(expected.size() == actual.size());
    for (size_t i = 0; i < expected.size(); ++i) {
      CHECK(expected[i] == actual[i]);
    }
  }
}

TEST_CASE("modified resnet rejects bad input sizes") {
  CHECK_THROWS_AS(build_modified_resnet(1.0, 100, 0), ShapeError);
  CHECK_THROWS_AS(build_modified_resnet(1.0, 0, 0), ShapeError);
}

TEST_CASE("width multiplier scales channels and keeps the spatial trace") {
  BuiltModel full = build_modified_resnet(1.0, 224, 0);
  BuiltModel quarter = build_modified_resnet(0.25, 224, 0);
  const auto t_full = compute_trace(full.model, 1);
  const auto t_quarter = compute_trace(quarter.model, 1);
  REQUIRE(t_full.size() == t_quarter.size());
  for (size_t i = 0; i < t_full.size(); ++i) {
    REQUIRE(t_full[i].size() == t_quarter[i].size());
    if (t_full[i].size() == 4) {
      CHECK(t_full[i][2] == t_quarter[i][2]);  // spatial unchanged
      CHECK(t_full[i][3] == t_quarter[i][3]);
      if (t_full[i][1] >= 4) {
        CHECK(t_quarter[i][1] * 4 == t_full[i][1]);
      }
    }
  }
  for (size_t s = 0; s < 4; ++s) {
    CHECK(quarter.descriptor.stages[s].out_channels * 4 ==
          full.descriptor.stages[s].out_channels);
  }
}

TEST_CASE("resnet-18: basic blocks, counts (2,2,2,2)") {
  BuiltModel built = build_resnet_family(18, 64, 0);
  REQUIRE(built.descriptor.stages.size() == 4);
  for (const auto& s : built.descriptor.stages) {
    CHECK(s.kind == BlockKind::Basic);
    CHECK(s.count == 2);
  }
  CHECK(count_weight_layers(built.model) == 18);
}

TEST_CASE("resnet-50: bottleneck blocks, counts (3,4,6,3)") {
  BuiltModel built = build_resnet_family(50, 64, 0);
  const int expected[4] = {3, 4, 6, 3};
  for (int i = 0; i < 4; ++i) {
    CHECK(built.descriptor.stages[i].kind == BlockKind::Bottleneck);
    CHECK(built.descriptor.stages[i].count == expected[i]);
  }
  CHECK(count_weight_layers(built.model) == 50);
}

TEST_CASE("family depth arithmetic matches the weight-layer count") {
  // depth = 1 stem conv + convs-per-block * blocks + 1 fc
  struct Case { int depth; int convs_per_block; int blocks; };
  for (const auto& c : std::initializer_list<Case>{
           {18, 2, 8}, {34, 2, 16}, {50, 3, 16}, {101, 3, 33}, {152, 3, 50}}) {
    BuiltModel built = build_resnet_family(c.depth, 32, 0);
    CHECK(count_weight_layers(built.model) ==
          1 + c.convs_per_block * c.blocks + 1);
    CHECK(count_weight_layers(built.model) == c.depth);
  }
}

TEST_CASE("unsupported family depth") {
  CHECK_THROWS_AS(build_resnet_family(20, 224, 0), ValueError);
}

TEST_CASE("unknown baseline kind") {
  CHECK_THROWS_AS(build_baseline("vgg16", 224, 0), ValueError);
}

TEST_CASE("logreg parameter count is 150528 + 1 at full input size") {
  BuiltModel built = build_baseline("logreg", 224, 0);
  CHECK(built.model.parameter_count() == 150529);
  CHECK(count_weight_layers(built.model) == 1);
}

TEST_CASE("cnn5 has five convs, each followed by a batchnorm") {
  BuiltModel built = build_baseline("cnn5", 64, 0);
  int convs = 0, linears = 0;
  const auto& layers = built.model.layers;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (dynamic_cast<Conv2dLayer*>(layers[i].get()) != nullptr) {
      ++convs;
      REQUIRE(i + 1 < layers.size());
      CHECK(dynamic_cast<BatchNorm2dLayer*>(layers[i + 1].get()) != nullptr);
    }
    if (dynamic_cast<LinearLayer*>(layers[i].get()) != nullptr) ++linears;
  }
  CHECK(convs == 5);
  CHECK(linears == 2);
}

TEST_CASE("ffnn4 has exactly four linear layers") {
  BuiltModel built = build_baseline("ffnn4", 64, 0);
  int linears = 0;
  for (const auto& layer : built.model.layers) {
    if (dynamic_cast<LinearLayer*>(layer.get()) != nullptr) ++linears;
  }
  CHECK(linears == 4);
}

TEST_CASE("forward_classify thresholds at 0.5") {
  CHECK(predicted_class(0.7) == 1);
  CHECK(predicted_class(0.2) == 0);
  CHECK(predicted_class(0.5) == 1);

  BuiltModel built = build_baseline("logreg", 16, 5);
  const Tensor x = create({4, 3, 16, 16}, InitSpec::uniform(-1, 1, 6));
  auto [prob, classes] = forward_classify(built.model, x);
  CHECK(prob.shape() == std::vector<int64_t>{4, 1});
  REQUIRE(classes.size() == 4);
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(prob[i] > 0.0);
    CHECK(prob[i] < 1.0);
    CHECK(classes[i] == predicted_class(prob[i]));
  }
}

TEST_CASE("zeroed residual branch reduces a block to relu(identity)") {
  // stride 1, equal channels: no projection
  ResidualBlock block(BlockKind::Bottleneck, 6, 3, 6, 1, 7);
  REQUIRE_FALSE(block.has_projection());
  std::vector<Parameter*> params;
  block.collect_parameters("block", params);
  for (Parameter* p : params) {
    if (p->name.find("weight") != std::string::npos ||
        p->name.find("gamma") != std::string::npos) {
      p->value.fill(0.0);
    }
  }
  const Tensor x = create({2, 6, 5, 5}, InitSpec::uniform(-2, 2, 8));
  RngStream rng(0);
  StatePtr state;
  const Tensor y = block.forward(x, Mode::Eval, rng, state);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y[i] == doctest::Approx(x[i] > 0.0 ? x[i] : 0.0));
  }
}

TEST_CASE("eval mode is deterministic, train mode resamples dropout") {
  BuiltModel built = build_modified_resnet(0.25, 32, 9);
  const Tensor x = create({1, 3, 32, 32}, InitSpec::uniform(-1, 1, 10));
  auto [e1, t1] = forward_record(built.model, x, Mode::Eval, 1);
  auto [e2, t2] = forward_record(built.model, x, Mode::Eval, 2);
  for (int64_t i = 0; i < e1.numel(); ++i) CHECK(e1[i] == e2[i]);

  auto [a, ta] = forward_record(built.model, x, Mode::Train, 1);
  auto [b, tb] = forward_record(built.model, x, Mode::Train, 2);
  bool differs = false;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (a[i] != b[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("descriptor text round trip") {
  BuiltModel built = build_modified_resnet(0.25, 64, 11, {0.4, 0.2, 0.1});
  const ArchDescriptor restored =
      ArchDescriptor::from_text(built.model.descriptor_text);
  CHECK(restored.name == "modified-resnet");
  CHECK(restored.width_mult == 0.25);
  CHECK(restored.input_hw == 64);
  REQUIRE(restored.fc_dropout.size() == 3);
  CHECK(restored.fc_dropout[0] == 0.4);
  CHECK(restored.stages.size() == 4);
  CHECK(restored.fc_widths == built.descriptor.fc_widths);
}
