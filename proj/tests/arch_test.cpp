#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "ikshana/arch.hpp"
#include "ikshana/tape.hpp"

using namespace ikshana;

namespace {

// Closed-form parameter total, summed layer by layer from the block
// definitions: glance convs (c -> 32 -> 32 -> 32) with batchnorm, optional
// projection (C -> C three times) with batchnorm, side 1x1 conv with
// batchnorm, and a biased 1x1 decoder when there is more than one scale.
std::int64_t closed_form_params(int scales, int glances, bool projection, std::int64_t k) {
  std::int64_t total = 0;
  std::int64_t carried = 0;
  for (int s = 0; s < scales; ++s) {
    const std::int64_t first_in = carried + 3;
    for (int g = 0; g < glances; ++g) {
      const std::int64_t cin = first_in + 32 * g;
      total += 9 * 32 * cin + 2 * 9 * 32 * 32 + 3 * 2 * 32;
    }
    const std::int64_t c = carried + 32 * glances;
    if (projection) total += 3 * (9 * c * c + 2 * c);
    total += k * c + 2 * k;
    carried = c;
  }
  if (scales > 1) total += scales * k * k + k;
  return total;
}

std::int64_t glance_conv_weights(const Network& net) {
  std::int64_t total = 0;
  for (const auto& p : net.params.params()) {
    if (p.role == ParamRole::kConvWeight && p.name.find(".g") != std::string::npos) total += p.value.numel();
  }
  return total;
}

Tensor random_image(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = d(rng);
  return Tensor::from_data(s, std::move(v));
}

const std::vector<std::string> kAllPresets{"main", "3G", "6G", "12G", "1S-6G", "2S-3G", "3S-2G"};

}  // namespace

TEST(Presets, ResolveToDocumentedShapes) {
  auto p = preset("3S-2G");
  EXPECT_EQ(p.scales, 3);
  EXPECT_EQ(p.glances_per_scale, 2);
  EXPECT_FALSE(p.with_projection);
  EXPECT_EQ(p.dilation_cycle, (std::vector<int>{1, 2}));

  p = preset("main");
  EXPECT_EQ(p.scales, 3);
  EXPECT_EQ(p.glances_per_scale, 3);
  EXPECT_TRUE(p.with_projection);

  EXPECT_EQ(preset("1s6g").scales, 1);
  EXPECT_EQ(preset("2s3g").scales, 2);
  EXPECT_EQ(preset("12g").glances_per_scale, 12);
  EXPECT_EQ(preset("6G").dilation_cycle, (std::vector<int>{1, 2, 3, 1, 2, 3}));
  EXPECT_EQ(canonical_preset_name("3s2g"), "3S-2G");
}

TEST(Presets, ListHasSevenEntries) {
  const auto all = list_presets();
  ASSERT_EQ(all.size(), 7u);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].name, kAllPresets[i]);
}

TEST(Presets, RejectsUnknownNamesAndTooFewClasses) {
  EXPECT_THROW(preset("4S-1G"), std::invalid_argument);
  EXPECT_THROW(preset(""), std::invalid_argument);
  EXPECT_THROW(preset("main", 1), std::invalid_argument);
}

TEST(Presets, CyclicDilations) {
  EXPECT_EQ(cyclic_dilations(1), (std::vector<int>{1}));
  EXPECT_EQ(cyclic_dilations(12), (std::vector<int>{1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3}));
}

TEST(Graph, MainChannelWalk) {
  const auto walk = build_graph(preset("main")).channel_walk();
  std::vector<std::int64_t> channels;
  for (const auto& step : walk) channels.push_back(step.channels);
  EXPECT_EQ(channels, (std::vector<std::int64_t>{35, 67, 99, 96, 99, 131, 163, 195, 192, 195, 227, 259, 291, 288,
                                                 20, 20, 20, 60, 20}));
}

TEST(Graph, GlanceInputsFollowBufferArithmetic) {
  for (const auto& spec : list_presets()) {
    const auto g = build_graph(spec);
    std::int64_t carried = 0;
    for (int s = 0; s < spec.scales; ++s) {
      for (int k = 0; k < spec.glances_per_scale; ++k) {
        const std::string name = "s" + std::to_string(s + 1) + ".g" + std::to_string(k + 1) + ".conv1";
        bool found = false;
        for (const auto& n : g.nodes) {
          if (n.name != name) continue;
          found = true;
          EXPECT_EQ(n.in_channels, carried + 3 + 32 * k) << spec.name << " " << name;
          EXPECT_EQ(n.dilation, spec.dilation_cycle[static_cast<std::size_t>(k)]);
          EXPECT_EQ(n.padding, n.dilation);
        }
        EXPECT_TRUE(found) << name;
      }
      carried += 32 * spec.glances_per_scale;
    }
  }
}

TEST(Graph, OneScaleHasNoPoolingOrDecoder) {
  const auto g = build_graph(preset("1S-6G"));
  for (const auto& n : g.nodes) {
    EXPECT_NE(n.kind, LayerKind::kAvgPool) << n.name;
    EXPECT_NE(n.kind, LayerKind::kResize) << n.name;
    EXPECT_EQ(n.name.rfind("decoder", 0), std::string::npos);
  }
  ASSERT_EQ(g.side_outputs.size(), 1u);
  EXPECT_EQ(g.output, g.side_outputs.front());
}

TEST(Params, MatchClosedForm) {
  for (int k : {12, 20}) {
    for (const auto& spec : list_presets(k)) {
      const Network net = build_network(spec, 1);
      EXPECT_EQ(net.params.count(),
                closed_form_params(spec.scales, spec.glances_per_scale, spec.with_projection, k))
          << spec.name << " K=" << k;
    }
  }
}

TEST(Params, MainIsFourMillion) {
  const auto n = build_network(preset("main"), 1).params.count();
  EXPECT_NEAR(static_cast<double>(n), 4.0e6, 0.03 * 4.0e6);
}

TEST(Params, TwelveGlanceConvWeights) {
  const Network net = build_network(preset("12G"), 1);
  // 9 * 32 * sum(c_in) + 2 * 9 * 32 * 32 per glance, over all 36 glances.
  std::int64_t expected = 0;
  for (int s = 0; s < 3; ++s) {
    for (int k = 0; k < 12; ++k) expected += 9 * 32 * (s * 384 + 3 + 32 * k) + 2 * 9 * 32 * 32;
  }
  EXPECT_EQ(expected, 6500736);
  EXPECT_EQ(glance_conv_weights(net), expected);
  EXPECT_NEAR(static_cast<double>(net.params.count()), 6.5e6, 0.03 * 6.5e6);
}

TEST(Params, ImageReinjectionContributesThreeChannelsPerGlance) {
  for (const auto& spec : list_presets()) {
    ArchSpec without = spec;
    without.reinject_image = false;
    const auto with_count = build_network(spec, 1).params.count();
    const auto without_count = build_network(without, 1).params.count();
    const std::int64_t glances = spec.scales * spec.glances_per_scale;
    EXPECT_EQ(with_count - without_count, 9 * 32 * 3 * (glances - 1)) << spec.name;
  }
}

TEST(Params, BuffersHoldFreshRunningStats) {
  const Network net = build_network(preset("3S-2G"), 3);
  ASSERT_FALSE(net.params.buffers().empty());
  for (const auto& b : net.params.buffers()) {
    const bool is_var = b.name.ends_with(".running_var");
    for (float v : b.value.data()) EXPECT_EQ(v, is_var ? 1.0f : 0.0f) << b.name;
  }
}

TEST(Forward, OutputMatchesInputSizeForEveryPreset) {
  for (const auto& spec : list_presets()) {
    const Network net = build_network(spec, 2);
    const auto r = forward(net, random_image({2, 3, 16, 24}, 9));
    EXPECT_EQ(r.output.shape(), (Shape{2, 20, 16, 24})) << spec.name;
    ASSERT_EQ(static_cast<int>(r.side_outputs.size()), spec.scales);
    for (int s = 0; s < spec.scales; ++s) {
      EXPECT_EQ(r.side_outputs[static_cast<std::size_t>(s)].shape(), (Shape{2, 20, 16 >> s, 24 >> s}));
    }
    EXPECT_TRUE(r.output.all_finite());
  }
}

TEST(Forward, MainAtFullCityscapesResolution) {
  const Network net = build_network(preset("main"), 2);
  const auto r = forward(net, random_image({1, 3, 512, 1024}, 4));
  EXPECT_EQ(r.output.shape(), (Shape{1, 20, 512, 1024}));
  EXPECT_TRUE(r.output.all_finite());
}

TEST(Forward, RejectsBadInputs) {
  const Network net = build_network(preset("main"), 2);
  EXPECT_THROW(forward(net, random_image({1, 3, 18, 16}, 1)), std::invalid_argument);
  EXPECT_THROW(forward(net, random_image({1, 1, 16, 16}, 1)), std::invalid_argument);
  const Network single = build_network(preset("1S-6G"), 2);
  EXPECT_NO_THROW(forward(single, random_image({1, 3, 7, 5}, 1)));
}

TEST(Forward, EvalIsDeterministicAndPure) {
  const Network net = build_network(preset("main"), 11);
  const Tensor image = random_image({1, 3, 32, 32}, 5);
  const auto a = forward(net, image).output;
  const auto b = forward(net, image).output;
  ASSERT_EQ(a.numel(), b.numel());
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()), 0);
  EXPECT_TRUE(bitwise_equal(net.params, build_network(preset("main"), 11).params));
}

TEST(Forward, TrainModeUpdatesRunningStats) {
  Network net = build_network(preset("3S-2G"), 11);
  forward(net, random_image({2, 3, 16, 16}, 5), Mode::kTrain);
  EXPECT_NE(net.params.buffer("s1.g1.bn1.running_mean").data()[0], 0.0f);
}

TEST(Backward, EveryParameterReceivesGradient) {
  for (const auto& spec : list_presets()) {
    Network net = build_network(spec, 21);
    const Tensor image = random_image({2, 3, 16, 16}, 8);
    ClassIndexMap target = ClassIndexMap::zeros(2, 16, 16);
    std::mt19937 rng(3);
    for (auto& v : target.values) v = static_cast<std::int32_t>(rng() % 20);

    GradTape<float> tape;
    {
      GradTape<float>::Scope scope(tape);
      const auto r = forward(net, image, Mode::kTrain);
      tape.backward(softmax_cross_entropy(r.output, target));
    }
    for (const auto& p : net.params.params()) {
      ASSERT_TRUE(p.value.has_grad()) << spec.name << " " << p.name;
      bool nonzero = false;
      for (float g : p.value.grad()) nonzero = nonzero || g != 0.0f;
      EXPECT_TRUE(nonzero) << spec.name << " " << p.name;
    }
  }
}
