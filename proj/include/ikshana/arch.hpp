#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ikshana/ops.hpp"
#include "ikshana/params.hpp"
#include "ikshana/tensor.hpp"

namespace ikshana {

/// Declarative description of one IkshanaNet variant.
struct ArchSpec {
  std::string name = "main";
  int scales = 3;
  int glances_per_scale = 3;
  bool with_projection = true;
  int glance_width = 32;
  int num_classes = 20;
  /// Dilation of each glance within a scale.
  std::vector<int> dilation_cycle{1, 2, 3};
  /// When false, the image feeds only the very first glance and is never
  /// concatenated into the feature buffer (ablation of image re-injection).
  bool reinject_image = true;

  bool operator==(const ArchSpec&) const = default;
};

/// (1, 2, 3) repeated and truncated to `glances`.
std::vector<int> cyclic_dilations(int glances);

/// Canonical preset name ("main", "3G", ..., "3S-2G") for any accepted
/// spelling such as "3s2g" or "12g". Throws std::invalid_argument.
std::string canonical_preset_name(std::string_view name);

/// Named preset. Throws std::invalid_argument for unknown names or fewer
/// than two classes.
ArchSpec preset(std::string_view name, int num_classes = 20);

/// All seven presets in a fixed order.
std::vector<ArchSpec> list_presets(int num_classes = 20);

void validate(const ArchSpec& spec);

enum class LayerKind {
  kInput,
  kResize,
  kConv,
  kBatchNorm,
  kReLU,
  kConcat,
  kSlice,
  kAvgPool,
};

std::string_view to_string(LayerKind kind);

/// One node of the layer DAG. Spatial size of the node's output is the
/// network input size divided by 2^level.
struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::kInput;
  std::vector<int> inputs;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  int kernel = 0;
  int dilation = 1;
  int padding = 0;
  bool bias = false;
  int level = 0;
  std::int64_t slice_from = 0;
  std::int64_t slice_to = 0;
};

struct ChannelStep {
  std::string node;
  std::int64_t channels;
};

/// Topologically ordered layer DAG.
struct LayerGraph {
  std::vector<LayerNode> nodes;
  int output = -1;
  std::vector<int> side_outputs;
  int max_level = 0;

  std::vector<ParamDecl> param_decls() const;
  /// Buffer sizes along the encoder (every concatenation and slice), then
  /// the side outputs, the fused decoder input and the network output.
  std::vector<ChannelStep> channel_walk() const;
};

LayerGraph build_graph(const ArchSpec& spec);

struct Network {
  ArchSpec spec;
  LayerGraph graph;
  ParamSet params;
};

/// Builds the graph and initialises its parameters (see init_params) plus
/// batchnorm running statistics (mean 0, variance 1).
Network build_network(const ArchSpec& spec, std::uint64_t seed);

struct ForwardResult {
  Tensor output;
  std::vector<Tensor> side_outputs;
};

/// Runs the network on an (n, 3, h, w) image batch. h and w must be
/// divisible by 2^(scales - 1). Train mode updates batchnorm running
/// statistics; record on a GradTape to train.
ForwardResult forward(Network& net, const Tensor& image, Mode mode);

/// Eval-mode forward; leaves the network untouched.
ForwardResult forward(const Network& net, const Tensor& image);

}  // namespace ikshana
