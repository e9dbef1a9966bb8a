#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "threshnet/arch_config.hpp"
#include "threshnet/topology.hpp"

namespace threshnet {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::int64_t elements() const {
    return static_cast<std::int64_t>(channels) * height * width;
  }
  bool resolved() const { return channels > 0 && height > 0 && width > 0; }
  bool operator==(const Shape&) const = default;
};

std::string ShapeToString(const Shape& s);  // "64x56x56"

namespace op {
struct Input {
  bool operator==(const Input&) const = default;
};
struct Conv {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int in_channels = 0;
  int out_channels = 0;
  bool has_bias = false;
  bool operator==(const Conv&) const = default;
};
struct BatchNorm {
  int channels = 0;
  bool operator==(const BatchNorm&) const = default;
};
struct Relu {
  bool operator==(const Relu&) const = default;
};
struct MaxPool {
  int kernel = 2;
  int stride = 2;
  int pad = 0;
  bool operator==(const MaxPool&) const = default;
};
// Padding cells count toward the divisor (kernel * kernel).
struct AvgPool {
  int kernel = 2;
  int stride = 2;
  int pad = 0;
  bool operator==(const AvgPool&) const = default;
};
struct GlobalAvgPool {
  bool operator==(const GlobalAvgPool&) const = default;
};
struct Concat {
  bool operator==(const Concat&) const = default;
};
struct FullyConnected {
  int in_features = 0;
  int out_features = 0;
  bool has_bias = true;
  bool operator==(const FullyConnected&) const = default;
};
struct Softmax {
  bool operator==(const Softmax&) const = default;
};
}  // namespace op

using Op = std::variant<op::Input, op::Conv, op::BatchNorm, op::Relu, op::MaxPool,
                        op::AvgPool, op::GlobalAvgPool, op::Concat,
                        op::FullyConnected, op::Softmax>;

std::string_view OpName(const Op& op);

struct Node {
  int id = 0;
  std::string name;
  Op op;
  std::vector<int> inputs;
  Shape output_shape;
  // Block (1-based) and in-block layer the node belongs to; -1 when the node
  // sits outside any layer unit.
  int block = -1;
  int layer = -1;
};

struct BlockInfo {
  int index = 0;  // 1-based
  ConnectionMode mode;
  BlockTopology topology{{{0}}};
  int input_node = -1;
  // layer_nodes[i] is the node producing x_i (layer_nodes[0] == input_node).
  std::vector<int> layer_nodes;
  std::vector<LayerId> output_members;
  // Node producing the tensor handed to the next stage.
  int output_node = -1;
};

// Named checkpoint in the stage layout (stem convs, pool, blocks,
// transitions, classifier) with the tensor shape leaving it.
struct StageInfo {
  std::string name;
  int node = -1;
  Shape shape;
};

// Operator DAG stored in topological order: every input id is smaller than
// the consuming node's id, and node ids equal their position.
class NetworkGraph {
 public:
  NetworkGraph() = default;
  NetworkGraph(std::string name, std::vector<Node> nodes,
               std::vector<BlockInfo> blocks = {},
               std::vector<StageInfo> stages = {});

  const std::string& name() const { return name_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  size_t size() const { return nodes_.size(); }
  const std::vector<BlockInfo>& blocks() const { return blocks_; }
  const std::vector<StageInfo>& stages() const { return stages_; }
  int output_node() const { return nodes_.empty() ? -1 : nodes_.back().id; }
  // Shape of the tensor consumed by node `id` at input slot `slot`.
  const Shape& input_shape(int id, size_t slot = 0) const;

 private:
  std::string name_;
  std::vector<Node> nodes_;
  std::vector<BlockInfo> blocks_;
  std::vector<StageInfo> stages_;
};

// Incremental construction with shape inference. Build() does not validate;
// pair it with ValidateGraph.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string name = "graph") : name_(std::move(name)) {}

  void SetContext(int block, int layer) {
    block_ = block;
    layer_ = layer;
  }

  int Input(const Shape& shape, std::string name = "input");
  int Conv(int src, int out_channels, int kernel, int stride, int pad,
           bool has_bias, std::string name = "conv");
  int BatchNorm(int src, std::string name = "bn");
  int Relu(int src, std::string name = "relu");
  int MaxPool(int src, int kernel, int stride, int pad, std::string name = "maxpool");
  int AvgPool(int src, int kernel, int stride, int pad, std::string name = "avgpool");
  int GlobalAvgPool(int src, std::string name = "gap");
  int Concat(const std::vector<int>& srcs, std::string name = "concat");
  int FullyConnected(int src, int out_features, bool has_bias = true,
                     std::string name = "fc");
  int Softmax(int src, std::string name = "softmax");

  const Shape& shape(int id) const { return nodes_.at(static_cast<size_t>(id)).output_shape; }
  void AddBlock(BlockInfo info) { blocks_.push_back(std::move(info)); }
  void AddStage(std::string name, int node) {
    stages_.push_back({std::move(name), node, shape(node)});
  }

  NetworkGraph Build() &&;

 private:
  int Add(std::string name, Op op, std::vector<int> inputs, Shape shape);

  std::string name_;
  std::vector<Node> nodes_;
  std::vector<BlockInfo> blocks_;
  std::vector<StageInfo> stages_;
  int block_ = -1;
  int layer_ = -1;
};

// Output spatial extent of a window op; 0 when the window does not fit.
int WindowOutput(int in, int kernel, int stride, int pad);

struct Violation {
  int node_id = -1;
  std::string message;
};

// Checks ordering (hence acyclicity), arity, per-op shape arithmetic, concat
// channel sums and spatial agreement, and that every node feeds the output
// and descends from an input. Empty result means valid.
std::vector<Violation> ValidateGraph(const NetworkGraph& g);

// Throws kGraphValidation naming the first offending node.
NetworkGraph BuildNetwork(const ArchConfig& cfg);

// Conv + fully-connected node count (DenseNet's depth convention).
int WeightedLayerCount(const NetworkGraph& g);

}  // namespace threshnet
