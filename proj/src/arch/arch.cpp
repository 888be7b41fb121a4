#include "ikshana/arch.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace ikshana {

namespace {

constexpr std::int64_t kImageChannels = 3;

struct PresetRow {
  const char* name;
  const char* key;  // lower-case, dash-free spelling
  int scales;
  int glances;
  bool projection;
};

constexpr PresetRow kPresets[] = {
    {"main", "main", 3, 3, true},    {"3G", "3g", 3, 3, false},
    {"6G", "6g", 3, 6, false},       {"12G", "12g", 3, 12, false},
    {"1S-6G", "1s6g", 1, 6, false},  {"2S-3G", "2s3g", 2, 3, false},
    {"3S-2G", "3s2g", 3, 2, false},
};

std::string normalize(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return key;
}

const PresetRow& find_preset(std::string_view name) {
  const std::string key = normalize(name);
  for (const auto& row : kPresets) {
    if (key == row.key) return row;
  }
  throw std::invalid_argument("unknown architecture preset '" + std::string(name) +
                              "' (expected main, 3g, 6g, 12g, 1s6g, 2s3g or 3s2g)");
}

class GraphBuilder {
 public:
  explicit GraphBuilder(LayerGraph& g) : g_(g) {}

  int add(LayerNode node) {
    g_.nodes.push_back(std::move(node));
    return static_cast<int>(g_.nodes.size()) - 1;
  }

  const LayerNode& at(int id) const { return g_.nodes[static_cast<std::size_t>(id)]; }

  int conv(const std::string& name, int input, std::int64_t out, int kernel, int dilation, bool bias) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::kConv;
    n.inputs = {input};
    n.in_channels = at(input).out_channels;
    n.out_channels = out;
    n.kernel = kernel;
    n.dilation = dilation;
    n.padding = kernel == 3 ? dilation : 0;
    n.bias = bias;
    n.level = at(input).level;
    return add(std::move(n));
  }

  int unary(const std::string& name, LayerKind kind, int input) {
    LayerNode n;
    n.name = name;
    n.kind = kind;
    n.inputs = {input};
    n.in_channels = n.out_channels = at(input).out_channels;
    n.level = at(input).level + (kind == LayerKind::kAvgPool ? 1 : 0);
    return add(std::move(n));
  }

  // conv -> batchnorm -> relu
  int conv_bn_relu(const std::string& prefix, const std::string& suffix, int input, std::int64_t out,
                   int kernel, int dilation) {
    int x = conv(prefix + "conv" + suffix, input, out, kernel, dilation, false);
    x = unary(prefix + "bn" + suffix, LayerKind::kBatchNorm, x);
    return unary(prefix + "relu" + suffix, LayerKind::kReLU, x);
  }

  int concat(const std::string& name, const std::vector<int>& parts) {
    if (parts.size() == 1) return parts.front();
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::kConcat;
    n.inputs = parts;
    for (int p : parts) n.out_channels += at(p).out_channels;
    n.in_channels = n.out_channels;
    n.level = at(parts.front()).level;
    return add(std::move(n));
  }

  int slice(const std::string& name, int input, std::int64_t from, std::int64_t to) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::kSlice;
    n.inputs = {input};
    n.in_channels = at(input).out_channels;
    n.out_channels = to - from;
    n.slice_from = from;
    n.slice_to = to;
    n.level = at(input).level;
    return add(std::move(n));
  }

  int resize(const std::string& name, int input, int level) {
    LayerNode n;
    n.name = name;
    n.kind = LayerKind::kResize;
    n.inputs = {input};
    n.in_channels = n.out_channels = at(input).out_channels;
    n.level = level;
    return add(std::move(n));
  }

 private:
  LayerGraph& g_;
};

}  // namespace

std::vector<int> cyclic_dilations(int glances) {
  std::vector<int> d;
  for (int i = 0; i < glances; ++i) d.push_back(1 + i % 3);
  return d;
}

std::string canonical_preset_name(std::string_view name) { return find_preset(name).name; }

ArchSpec preset(std::string_view name, int num_classes) {
  const PresetRow& row = find_preset(name);
  ArchSpec spec;
  spec.name = row.name;
  spec.scales = row.scales;
  spec.glances_per_scale = row.glances;
  spec.with_projection = row.projection;
  spec.num_classes = num_classes;
  spec.dilation_cycle = cyclic_dilations(row.glances);
  validate(spec);
  return spec;
}

std::vector<ArchSpec> list_presets(int num_classes) {
  std::vector<ArchSpec> out;
  for (const auto& row : kPresets) out.push_back(preset(row.name, num_classes));
  return out;
}

void validate(const ArchSpec& spec) {
  if (spec.scales < 1 || spec.scales > 3) throw std::invalid_argument("scales must be 1, 2 or 3");
  if (spec.glances_per_scale < 1) throw std::invalid_argument("need at least one glance per scale");
  if (spec.glance_width < 1) throw std::invalid_argument("glance width must be positive");
  if (spec.num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
  if (static_cast<int>(spec.dilation_cycle.size()) != spec.glances_per_scale) {
    throw std::invalid_argument("dilation_cycle needs one entry per glance");
  }
  for (int d : spec.dilation_cycle) {
    if (d < 1) throw std::invalid_argument("dilations must be positive");
  }
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "input";
    case LayerKind::kResize: return "resize";
    case LayerKind::kConv: return "conv";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kReLU: return "relu";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kSlice: return "slice";
    case LayerKind::kAvgPool: return "avgpool";
  }
  return "?";
}

LayerGraph build_graph(const ArchSpec& spec) {
  validate(spec);
  LayerGraph g;
  GraphBuilder b(g);
  const std::int64_t width = spec.glance_width;

  LayerNode input;
  input.name = "image";
  input.kind = LayerKind::kInput;
  input.in_channels = input.out_channels = kImageChannels;
  const int image = b.add(input);

  int pooled = -1;  // features handed down from the previous scale
  for (int s = 0; s < spec.scales; ++s) {
    const std::string scale = "s" + std::to_string(s + 1) + ".";
    const int scaled_image = s == 0 ? image : b.resize(scale + "image", image, s);
    const bool with_image = spec.reinject_image || s == 0;

    // Feature buffer: incoming features, then each glance's output, with the
    // image kept last so it can be sliced off.
    std::vector<int> features;
    if (pooled >= 0) features.push_back(pooled);
    auto buffer = [&](const std::string& name, bool image_last) {
      std::vector<int> parts = features;
      if (image_last) parts.push_back(scaled_image);
      return b.concat(name, parts);
    };

    int current = buffer(scale + "concat0", with_image);
    for (int k = 0; k < spec.glances_per_scale; ++k) {
      const std::string glance = scale + "g" + std::to_string(k + 1) + ".";
      const int dilation = spec.dilation_cycle[static_cast<std::size_t>(k)];
      int x = current;
      for (int layer = 1; layer <= 3; ++layer) {
        x = b.conv_bn_relu(glance, std::to_string(layer), x, width, 3, dilation);
      }
      features.push_back(x);
      current = buffer(scale + "concat" + std::to_string(k + 1), spec.reinject_image);
    }

    const std::int64_t feature_channels = b.at(current).out_channels -
                                          (spec.reinject_image ? kImageChannels : 0);
    int refined = spec.reinject_image ? b.slice(scale + "slice", current, 0, feature_channels) : current;
    if (spec.with_projection) {
      for (int layer = 1; layer <= 3; ++layer) {
        refined = b.conv_bn_relu(scale + "proj.", std::to_string(layer), refined, feature_channels, 3, 1);
      }
    }
    g.side_outputs.push_back(b.conv_bn_relu(scale + "side.", "", refined, spec.num_classes, 1, 1));
    if (s + 1 < spec.scales) pooled = b.unary(scale + "pool", LayerKind::kAvgPool, refined);
  }
  g.max_level = spec.scales - 1;

  if (spec.scales == 1) {
    g.output = g.side_outputs.front();
  } else {
    std::vector<int> parts{g.side_outputs.front()};
    for (int s = 1; s < spec.scales; ++s) {
      parts.push_back(b.resize("decoder.up" + std::to_string(s + 1),
                               g.side_outputs[static_cast<std::size_t>(s)], 0));
    }
    const int fused = b.concat("decoder.concat", parts);
    g.output = b.conv("decoder.conv", fused, spec.num_classes, 1, 1, true);
  }
  return g;
}

std::vector<ParamDecl> LayerGraph::param_decls() const {
  std::vector<ParamDecl> decls;
  for (const auto& n : nodes) {
    if (n.kind == LayerKind::kConv) {
      decls.push_back({n.name + ".weight", {n.out_channels, n.in_channels, n.kernel, n.kernel},
                       ParamRole::kConvWeight});
      if (n.bias) decls.push_back({n.name + ".bias", channel_vector(n.out_channels), ParamRole::kBias});
    } else if (n.kind == LayerKind::kBatchNorm) {
      decls.push_back({n.name + ".gamma", channel_vector(n.out_channels), ParamRole::kGamma});
      decls.push_back({n.name + ".beta", channel_vector(n.out_channels), ParamRole::kBeta});
    }
  }
  return decls;
}

std::vector<ChannelStep> LayerGraph::channel_walk() const {
  std::vector<ChannelStep> walk;
  for (const auto& n : nodes) {
    if ((n.kind == LayerKind::kConcat || n.kind == LayerKind::kSlice) && n.name.rfind("decoder.", 0) != 0) {
      walk.push_back({n.name, n.out_channels});
    }
  }
  for (int s : side_outputs) walk.push_back({nodes[static_cast<std::size_t>(s)].name, nodes[static_cast<std::size_t>(s)].out_channels});
  for (const auto& n : nodes) {
    if (n.kind == LayerKind::kConcat && n.name == "decoder.concat") walk.push_back({n.name, n.out_channels});
  }
  if (side_outputs.size() > 1) {
    walk.push_back({nodes[static_cast<std::size_t>(output)].name, nodes[static_cast<std::size_t>(output)].out_channels});
  }
  return walk;
}

Network build_network(const ArchSpec& spec, std::uint64_t seed) {
  Network net{spec, build_graph(spec), {}};
  const auto decls = net.graph.param_decls();
  net.params = init_params(decls, seed);
  for (const auto& n : net.graph.nodes) {
    if (n.kind != LayerKind::kBatchNorm) continue;
    net.params.add_buffer(n.name + ".running_mean", Tensor::zeros(channel_vector(n.out_channels)));
    net.params.add_buffer(n.name + ".running_var", Tensor::full(channel_vector(n.out_channels), 1.0f));
  }
  return net;
}

namespace {

ForwardResult run_graph(const LayerGraph& graph, const ParamSet& params, const Tensor& image, Mode mode,
                        int max_level) {
  const Shape& in = image.shape();
  if (in.c != kImageChannels) {
    throw std::invalid_argument("network input must have 3 channels, got " + std::to_string(in.c));
  }
  const std::int64_t divisor = std::int64_t{1} << max_level;
  if (in.h <= 0 || in.w <= 0 || in.h % divisor != 0 || in.w % divisor != 0) {
    throw std::invalid_argument("input resolution " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                                " is not divisible by " + std::to_string(divisor));
  }

  const auto& nodes = graph.nodes;
  std::vector<std::size_t> last_use(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int j : nodes[i].inputs) last_use[static_cast<std::size_t>(j)] = i;
  }
  std::vector<bool> keep(nodes.size(), false);
  keep[static_cast<std::size_t>(graph.output)] = true;
  for (int s : graph.side_outputs) keep[static_cast<std::size_t>(s)] = true;

  std::vector<Tensor> values(nodes.size());
  auto value = [&](int id) -> const Tensor& { return values[static_cast<std::size_t>(id)]; };

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const LayerNode& n = nodes[i];
    Tensor out;
    switch (n.kind) {
      case LayerKind::kInput:
        out = image;
        break;
      case LayerKind::kResize:
        out = bilinear_resize(value(n.inputs[0]), in.h >> n.level, in.w >> n.level);
        break;
      case LayerKind::kConv:
        out = conv2d(value(n.inputs[0]), params.at(n.name + ".weight").value,
                     n.bias ? params.at(n.name + ".bias").value : Tensor{}, n.dilation, n.padding);
        break;
      case LayerKind::kBatchNorm: {
        RunningStats<float> stats{params.buffer(n.name + ".running_mean"), params.buffer(n.name + ".running_var")};
        out = batchnorm2d(value(n.inputs[0]), params.at(n.name + ".gamma").value,
                          params.at(n.name + ".beta").value, stats, mode);
        break;
      }
      case LayerKind::kReLU:
        out = relu(value(n.inputs[0]));
        break;
      case LayerKind::kConcat: {
        std::vector<Tensor> parts;
        for (int j : n.inputs) parts.push_back(value(j));
        out = concat_channels<float>(parts);
        break;
      }
      case LayerKind::kSlice:
        out = slice_channels(value(n.inputs[0]), n.slice_from, n.slice_to);
        break;
      case LayerKind::kAvgPool:
        out = avgpool2x2(value(n.inputs[0]));
        break;
    }
    const Shape& s = out.shape();
    if (s.c != n.out_channels || s.h != (in.h >> n.level) || s.w != (in.w >> n.level)) {
      throw std::logic_error("layer " + n.name + " produced " + s.str() + ", expected " +
                             std::to_string(n.out_channels) + " channels at level " + std::to_string(n.level));
    }
    values[i] = std::move(out);
    for (int j : n.inputs) {
      const auto ju = static_cast<std::size_t>(j);
      if (last_use[ju] == i && !keep[ju]) values[ju] = Tensor{};
    }
  }

  ForwardResult result;
  result.output = values[static_cast<std::size_t>(graph.output)];
  for (int s : graph.side_outputs) result.side_outputs.push_back(values[static_cast<std::size_t>(s)]);
  return result;
}

}  // namespace

ForwardResult forward(Network& net, const Tensor& image, Mode mode) {
  return run_graph(net.graph, net.params, image, mode, net.graph.max_level);
}

ForwardResult forward(const Network& net, const Tensor& image) {
  return run_graph(net.graph, net.params, image, Mode::kEval, net.graph.max_level);
}

}  // namespace ikshana
