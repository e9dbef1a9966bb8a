#include "threshnet/network_graph.hpp"

#include <sstream>

#include "threshnet/error.hpp"

namespace threshnet {

std::string ShapeToString(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

std::string_view OpName(const Op& o) {
  static constexpr std::string_view kNames[] = {
      "input",         "conv",   "batchnorm",      "relu",   "maxpool",
      "avgpool",       "globalavgpool", "concat", "fullyconnected", "softmax"};
  return kNames[o.index()];
}

NetworkGraph::NetworkGraph(std::string name, std::vector<Node> nodes,
                           std::vector<BlockInfo> blocks,
                           std::vector<StageInfo> stages)
    : name_(std::move(name)),
      nodes_(std::move(nodes)),
      blocks_(std::move(blocks)),
      stages_(std::move(stages)) {}

const Shape& NetworkGraph::input_shape(int id, size_t slot) const {
  const Node& n = node(id);
  if (slot >= n.inputs.size()) {
    throw Error(ErrorKind::kGraphValidation, "missing input slot", id);
  }
  return node(n.inputs[slot]).output_shape;
}

int WindowOutput(int in, int kernel, int stride, int pad) {
  if (stride < 1 || in + 2 * pad < kernel) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------

int GraphBuilder::Add(std::string name, Op o, std::vector<int> inputs, Shape shape) {
  Node n;
  n.id = static_cast<int>(nodes_.size());
  n.name = std::move(name);
  n.op = o;
  n.inputs = std::move(inputs);
  n.output_shape = shape;
  n.block = block_;
  n.layer = layer_;
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

int GraphBuilder::Input(const Shape& s, std::string name) {
  return Add(std::move(name), op::Input{}, {}, s);
}

int GraphBuilder::Conv(int src, int out_channels, int kernel, int stride, int pad,
                       bool has_bias, std::string name) {
  const Shape in = shape(src);
  const Shape out{out_channels, WindowOutput(in.height, kernel, stride, pad),
                  WindowOutput(in.width, kernel, stride, pad)};
  return Add(std::move(name),
             op::Conv{kernel, kernel, stride, pad, in.channels, out_channels, has_bias},
             {src}, out);
}

int GraphBuilder::BatchNorm(int src, std::string name) {
  return Add(std::move(name), op::BatchNorm{shape(src).channels}, {src}, shape(src));
}

int GraphBuilder::Relu(int src, std::string name) {
  return Add(std::move(name), op::Relu{}, {src}, shape(src));
}

int GraphBuilder::MaxPool(int src, int kernel, int stride, int pad, std::string name) {
  const Shape in = shape(src);
  return Add(std::move(name), op::MaxPool{kernel, stride, pad}, {src},
             {in.channels, WindowOutput(in.height, kernel, stride, pad),
              WindowOutput(in.width, kernel, stride, pad)});
}

int GraphBuilder::AvgPool(int src, int kernel, int stride, int pad, std::string name) {
  const Shape in = shape(src);
  return Add(std::move(name), op::AvgPool{kernel, stride, pad}, {src},
             {in.channels, WindowOutput(in.height, kernel, stride, pad),
              WindowOutput(in.width, kernel, stride, pad)});
}

int GraphBuilder::GlobalAvgPool(int src, std::string name) {
  return Add(std::move(name), op::GlobalAvgPool{}, {src}, {shape(src).channels, 1, 1});
}

int GraphBuilder::Concat(const std::vector<int>& srcs, std::string name) {
  Shape out{0, 0, 0};
  for (int s : srcs) out.channels += shape(s).channels;
  if (!srcs.empty()) {
    out.height = shape(srcs.front()).height;
    out.width = shape(srcs.front()).width;
  }
  return Add(std::move(name), op::Concat{}, srcs, out);
}

int GraphBuilder::FullyConnected(int src, int out_features, bool has_bias,
                                 std::string name) {
  const auto in = static_cast<int>(shape(src).elements());
  return Add(std::move(name), op::FullyConnected{in, out_features, has_bias}, {src},
             {out_features, 1, 1});
}

int GraphBuilder::Softmax(int src, std::string name) {
  return Add(std::move(name), op::Softmax{}, {src}, shape(src));
}

NetworkGraph GraphBuilder::Build() && {
  return NetworkGraph(std::move(name_), std::move(nodes_), std::move(blocks_),
                      std::move(stages_));
}

// ---------------------------------------------------------------------------

namespace {

class Validator {
 public:
  explicit Validator(const NetworkGraph& g) : g_(g) {}

  std::vector<Violation> Run() {
    const auto& nodes = g_.nodes();
    if (nodes.empty()) {
      Report(-1, "graph is empty");
      return out_;
    }
    for (size_t k = 0; k < nodes.size(); ++k) CheckNode(nodes[k], static_cast<int>(k));
    if (!out_.empty()) return out_;
    CheckReachability();
    return out_;
  }

 private:
  void Report(int id, std::string msg) { out_.push_back({id, std::move(msg)}); }

  void CheckNode(const Node& n, int position) {
    if (n.id != position) {
      Report(position, "node id " + std::to_string(n.id) + " does not match position");
      return;
    }
    for (int in : n.inputs) {
      if (in < 0 || in >= n.id) {
        Report(n.id, "input " + std::to_string(in) +
                         " is not an earlier node (cycle or bad order)");
        return;
      }
    }
    if (!n.output_shape.resolved()) {
      Report(n.id, "unresolved output shape " + ShapeToString(n.output_shape));
      return;
    }
    const bool is_input = std::holds_alternative<op::Input>(n.op);
    const bool is_concat = std::holds_alternative<op::Concat>(n.op);
    if (is_input && !n.inputs.empty()) {
      Report(n.id, "input node has inputs");
      return;
    }
    if (is_concat && n.inputs.empty()) {
      Report(n.id, "concat without inputs");
      return;
    }
    if (!is_input && !is_concat && n.inputs.size() != 1) {
      Report(n.id, std::string(OpName(n.op)) + " expects exactly one input");
      return;
    }
    std::visit([&](const auto& o) { Check(n, o); }, n.op);
  }

  const Shape& In(const Node& n, size_t slot = 0) const {
    return g_.node(n.inputs[slot]).output_shape;
  }

  void ExpectShape(const Node& n, const Shape& expected) {
    if (!(n.output_shape == expected)) {
      Report(n.id, "shape mismatch: declared " + ShapeToString(n.output_shape) +
                       ", expected " + ShapeToString(expected));
    }
  }

  void Check(const Node&, const op::Input&) {}

  void Check(const Node& n, const op::Conv& c) {
    const Shape& in = In(n);
    if (c.kernel_h < 1 || c.kernel_w < 1 || c.stride < 1 || c.pad < 0 ||
        c.out_channels < 1) {
      Report(n.id, "invalid conv parameters");
      return;
    }
    if (c.in_channels != in.channels) {
      Report(n.id, "channel mismatch: conv in_ch " + std::to_string(c.in_channels) +
                       " but producer has " + std::to_string(in.channels));
      return;
    }
    ExpectShape(n, {c.out_channels, WindowOutput(in.height, c.kernel_h, c.stride, c.pad),
                    WindowOutput(in.width, c.kernel_w, c.stride, c.pad)});
  }

  void Check(const Node& n, const op::BatchNorm& b) {
    if (b.channels != In(n).channels) {
      Report(n.id, "channel mismatch: batchnorm over " + std::to_string(b.channels) +
                       " channels but producer has " + std::to_string(In(n).channels));
      return;
    }
    ExpectShape(n, In(n));
  }

  void Check(const Node& n, const op::Relu&) { ExpectShape(n, In(n)); }
  void Check(const Node& n, const op::Softmax&) { ExpectShape(n, In(n)); }

  template <typename Pool>
  void CheckPool(const Node& n, const Pool& p) {
    if (p.kernel < 1 || p.stride < 1 || p.pad < 0 || 2 * p.pad > p.kernel) {
      Report(n.id, "invalid pool parameters");
      return;
    }
    const Shape& in = In(n);
    ExpectShape(n, {in.channels, WindowOutput(in.height, p.kernel, p.stride, p.pad),
                    WindowOutput(in.width, p.kernel, p.stride, p.pad)});
  }
  void Check(const Node& n, const op::MaxPool& p) { CheckPool(n, p); }
  void Check(const Node& n, const op::AvgPool& p) { CheckPool(n, p); }

  void Check(const Node& n, const op::GlobalAvgPool&) {
    ExpectShape(n, {In(n).channels, 1, 1});
  }

  void Check(const Node& n, const op::Concat&) {
    int channels = 0;
    const Shape& first = In(n, 0);
    for (size_t s = 0; s < n.inputs.size(); ++s) {
      const Shape& in = In(n, s);
      if (in.height != first.height || in.width != first.width) {
        Report(n.id, "spatial mismatch: concat input " + std::to_string(n.inputs[s]) +
                         " is " + ShapeToString(in) + ", first input is " +
                         ShapeToString(first));
        return;
      }
      channels += in.channels;
    }
    if (n.output_shape.channels != channels) {
      Report(n.id, "channel mismatch: concat declares " +
                       std::to_string(n.output_shape.channels) +
                       " channels, inputs sum to " + std::to_string(channels));
      return;
    }
    ExpectShape(n, {channels, first.height, first.width});
  }

  void Check(const Node& n, const op::FullyConnected& f) {
    if (f.in_features != In(n).elements()) {
      Report(n.id, "channel mismatch: fc expects " + std::to_string(f.in_features) +
                       " features, producer has " + std::to_string(In(n).elements()));
      return;
    }
    ExpectShape(n, {f.out_features, 1, 1});
  }

  void CheckReachability() {
    const auto& nodes = g_.nodes();
    std::vector<char> from_input(nodes.size(), 0);
    for (const auto& n : nodes) {
      if (std::holds_alternative<op::Input>(n.op)) {
        from_input[static_cast<size_t>(n.id)] = 1;
        continue;
      }
      bool any = false;
      for (int in : n.inputs) any = any || from_input[static_cast<size_t>(in)];
      from_input[static_cast<size_t>(n.id)] = any;
    }
    std::vector<char> to_output(nodes.size(), 0);
    to_output.back() = 1;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
      if (!to_output[static_cast<size_t>(it->id)]) continue;
      for (int in : it->inputs) to_output[static_cast<size_t>(in)] = 1;
    }
    if (!from_input.back()) {
      Report(nodes.back().id, "output is not reachable from any input");
    }
    for (const auto& n : nodes) {
      if (!to_output[static_cast<size_t>(n.id)]) {
        Report(n.id, "node does not contribute to the output");
      }
    }
  }

  const NetworkGraph& g_;
  std::vector<Violation> out_;
};

}  // namespace

std::vector<Violation> ValidateGraph(const NetworkGraph& g) { return Validator(g).Run(); }

// ---------------------------------------------------------------------------

namespace {

// One in-block layer unit; returns the node producing x_i.
int AddLayerUnit(GraphBuilder& gb, const ArchConfig& cfg, int src, int out_channels,
                 int growth_rate, const std::string& prefix) {
  const int width = cfg.bottleneck_factor * growth_rate;
  if (cfg.layer_unit_order == LayerUnitOrder::kConvBnRelu) {
    int x = src;
    if (cfg.bottleneck) {
      x = gb.Conv(x, width, 1, 1, 0, false, prefix + "conv1x1");
      x = gb.BatchNorm(x, prefix + "bn1x1");
      x = gb.Relu(x, prefix + "relu1x1");
    }
    x = gb.Conv(x, out_channels, 3, 1, 1, false, prefix + "conv");
    x = gb.BatchNorm(x, prefix + "bn");
    return gb.Relu(x, prefix + "relu");
  }
  int x = gb.BatchNorm(src, prefix + "bn");
  x = gb.Relu(x, prefix + "relu");
  if (cfg.bottleneck) {
    x = gb.Conv(x, width, 1, 1, 0, false, prefix + "conv1x1");
    x = gb.BatchNorm(x, prefix + "bn3x3");
    x = gb.Relu(x, prefix + "relu3x3");
  }
  return gb.Conv(x, out_channels, 3, 1, 1, false, prefix + "conv");
}

}  // namespace

NetworkGraph BuildNetwork(const ArchConfig& cfg) {
  cfg.Validate();
  GraphBuilder gb(cfg.name);
  int x = gb.Input({cfg.input_channels, cfg.input_height, cfg.input_width});

  for (size_t s = 0; s < cfg.stem.size(); ++s) {
    const auto& c = cfg.stem[s];
    const std::string p = "stem.conv" + std::to_string(s + 1);
    x = gb.Conv(x, c.out_channels, c.kernel, c.stride, c.kernel / 2, false, p);
    x = gb.BatchNorm(x, p + ".bn");
    x = gb.Relu(x, p + ".relu");
    gb.AddStage(p, x);
  }
  if (cfg.stem_pool) {
    x = gb.MaxPool(x, cfg.stem_pool->kernel, cfg.stem_pool->stride,
                   cfg.stem_pool->pad, "stem.pool");
    gb.AddStage("stem.pool", x);
  }

  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& blk = cfg.blocks[b];
    const int index = static_cast<int>(b + 1);
    const std::string bp = "block" + std::to_string(index);
    BlockInfo info;
    info.index = index;
    info.mode = blk.mode;
    info.topology = BuildBlockTopology(blk.depth, blk.mode);
    info.input_node = x;
    info.layer_nodes = {x};

    for (LayerId i = 1; i <= blk.depth; ++i) {
      gb.SetContext(index, i);
      const std::string lp = bp + ".layer" + std::to_string(i) + ".";
      std::vector<int> srcs;
      for (LayerId j : info.topology.inputs(i)) {
        srcs.push_back(info.layer_nodes[static_cast<size_t>(j)]);
      }
      const int src = srcs.size() == 1 ? srcs.front() : gb.Concat(srcs, lp + "concat");
      const int out = LayerOutChannels(i, blk.mode, blk.growth_rate, blk.even_multiplier);
      info.layer_nodes.push_back(AddLayerUnit(gb, cfg, src, out, blk.growth_rate, lp));
    }

    gb.SetContext(index, -1);
    info.output_members = BlockOutputMembers(info.topology, blk.mode);
    std::vector<int> members;
    for (LayerId j : info.output_members) {
      members.push_back(info.layer_nodes[static_cast<size_t>(j)]);
    }
    x = members.size() == 1 ? members.front() : gb.Concat(members, bp + ".output");
    info.output_node = x;
    gb.AddStage(bp, x);
    gb.AddBlock(std::move(info));

    if (b + 1 == cfg.blocks.size()) break;
    const std::string tp = "transition" + std::to_string(index);
    const int cin = gb.shape(x).channels;
    const int cout = TransitionOutChannels(cin, blk.transition_reduction, cfg.reduction);
    if (cout < 1) {
      throw Error(ErrorKind::kConfig, tp + " reduces " + std::to_string(cin) +
                                          " channels to zero");
    }
    if (cfg.layer_unit_order == LayerUnitOrder::kConvBnRelu) {
      x = gb.Conv(x, cout, 1, 1, 0, false, tp + ".conv");
      x = gb.BatchNorm(x, tp + ".bn");
      x = gb.Relu(x, tp + ".relu");
    } else {
      x = gb.BatchNorm(x, tp + ".bn");
      x = gb.Relu(x, tp + ".relu");
      x = gb.Conv(x, cout, 1, 1, 0, false, tp + ".conv");
    }
    gb.AddStage(tp + ".conv", x);
    if (blk.transition_pool) {
      x = cfg.transition_pool_kind == PoolKind::kMax
              ? gb.MaxPool(x, 2, 2, 0, tp + ".pool")
              : gb.AvgPool(x, 2, 2, 0, tp + ".pool");
      gb.AddStage(tp + ".pool", x);
    }
  }

  gb.SetContext(-1, -1);
  if (cfg.layer_unit_order == LayerUnitOrder::kBnReluConv) {
    x = gb.BatchNorm(x, "final.bn");
    x = gb.Relu(x, "final.relu");
  }
  x = gb.GlobalAvgPool(x, "classifier.pool");
  gb.AddStage("classifier.pool", x);
  x = gb.FullyConnected(x, cfg.classifier_classes, true, "classifier.fc");
  x = gb.Softmax(x, "classifier.softmax");

  NetworkGraph g = std::move(gb).Build();
  const auto violations = ValidateGraph(g);
  if (!violations.empty()) {
    throw Error(ErrorKind::kGraphValidation, violations.front().message,
                violations.front().node_id);
  }
  return g;
}

int WeightedLayerCount(const NetworkGraph& g) {
  int count = 0;
  for (const auto& n : g.nodes()) {
    if (std::holds_alternative<op::Conv>(n.op) ||
        std::holds_alternative<op::FullyConnected>(n.op)) {
      ++count;
    }
  }
  return count;
}

}  // namespace threshnet
