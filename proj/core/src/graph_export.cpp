#include "threshnet/graph_export.hpp"

#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace threshnet {

namespace {

using nlohmann::json;

json OpParams(const Op& o) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, op::Conv>) {
          return {{"kernel_h", p.kernel_h}, {"kernel_w", p.kernel_w},
                  {"stride", p.stride},     {"pad", p.pad},
                  {"in_channels", p.in_channels},
                  {"out_channels", p.out_channels},
                  {"has_bias", p.has_bias}};
        } else if constexpr (std::is_same_v<T, op::BatchNorm>) {
          return {{"channels", p.channels}};
        } else if constexpr (std::is_same_v<T, op::MaxPool> ||
                             std::is_same_v<T, op::AvgPool>) {
          return {{"kernel", p.kernel}, {"stride", p.stride}, {"pad", p.pad}};
        } else if constexpr (std::is_same_v<T, op::FullyConnected>) {
          return {{"in_features", p.in_features},
                  {"out_features", p.out_features},
                  {"has_bias", p.has_bias}};
        } else {
          return json::object();
        }
      },
      o);
}

std::string OpDetail(const Op& o) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, op::Conv>) {
          return "conv" + std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w) +
                 "/" + std::to_string(p.stride);
        } else if constexpr (std::is_same_v<T, op::MaxPool>) {
          return "maxpool" + std::to_string(p.kernel) + "x" + std::to_string(p.kernel) +
                 "/" + std::to_string(p.stride);
        } else if constexpr (std::is_same_v<T, op::AvgPool>) {
          return "avgpool" + std::to_string(p.kernel) + "x" + std::to_string(p.kernel) +
                 "/" + std::to_string(p.stride);
        } else if constexpr (std::is_same_v<T, op::BatchNorm>) {
          return "bn";
        } else if constexpr (std::is_same_v<T, op::FullyConnected>) {
          return "fc" + std::to_string(p.out_features);
        } else {
          return std::string(OpName(T{}));
        }
      },
      o);
}

std::string Quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string GraphToJson(const NetworkGraph& g, int indent) {
  json j;
  j["name"] = g.name();
  json nodes = json::array();
  json edges = json::array();
  for (const auto& n : g.nodes()) {
    nodes.push_back({{"id", n.id},
                     {"name", n.name},
                     {"op", std::string(OpName(n.op))},
                     {"params", OpParams(n.op)},
                     {"inputs", n.inputs},
                     {"output_shape",
                      {n.output_shape.channels, n.output_shape.height,
                       n.output_shape.width}},
                     {"block", n.block},
                     {"layer", n.layer}});
    for (int in : n.inputs) edges.push_back({in, n.id});
  }
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  json blocks = json::array();
  for (const auto& b : g.blocks()) {
    blocks.push_back({{"index", b.index},
                      {"depth", b.topology.layer_count()},
                      {"mode", b.mode.ToString()},
                      {"connections", ConnectionCount(b.topology)},
                      {"inputs", b.topology.all_inputs()},
                      {"output_members", b.output_members},
                      {"input_node", b.input_node},
                      {"output_node", b.output_node}});
  }
  j["blocks"] = std::move(blocks);
  json stages = json::array();
  for (const auto& s : g.stages()) {
    stages.push_back({{"name", s.name},
                      {"node", s.node},
                      {"shape", {s.shape.channels, s.shape.height, s.shape.width}}});
  }
  j["stages"] = std::move(stages);
  return j.dump(indent);
}

std::string GraphToDot(const NetworkGraph& g) {
  auto block_of = [&](const Node& n) { return n.layer >= 1 ? n.block : -1; };
  auto dot_id = [&](const Node& n) {
    if (block_of(n) >= 1) {
      return "b" + std::to_string(n.block) + "_l" + std::to_string(n.layer);
    }
    return "n" + std::to_string(n.id);
  };
  auto x0_id = [](int block) { return "b" + std::to_string(block) + "_x0"; };

  // Composite layer nodes: op chain and final shape.
  std::map<std::string, std::pair<std::string, Shape>> units;
  std::vector<std::string> unit_order;
  for (const auto& n : g.nodes()) {
    if (block_of(n) < 1) continue;
    const std::string id = dot_id(n);
    auto [it, fresh] = units.try_emplace(id);
    if (fresh) unit_order.push_back(id);
    if (!it->second.first.empty()) it->second.first += "+";
    it->second.first += OpDetail(n.op);
    it->second.second = n.output_shape;
  }

  struct Edge {
    std::string src, dst;
    int channels;
  };
  std::map<int, std::vector<Edge>> intra;  // keyed by block
  std::vector<Edge> cross;
  std::set<std::pair<std::string, std::string>> seen;
  auto cluster_of = [&](const std::string& id) -> int {
    if (id.empty() || id[0] != 'b') return -1;
    return std::stoi(id.substr(1, id.find('_') - 1));
  };
  auto add_edge = [&](std::string src, std::string dst, int channels) {
    if (src == dst || !seen.emplace(src, dst).second) return;
    const int cs = cluster_of(src);
    if (cs >= 1 && cs == cluster_of(dst)) {
      intra[cs].push_back({std::move(src), std::move(dst), channels});
    } else {
      cross.push_back({std::move(src), std::move(dst), channels});
    }
  };

  for (const auto& b : g.blocks()) {
    add_edge(dot_id(g.node(b.input_node)), x0_id(b.index),
             g.node(b.input_node).output_shape.channels);
  }
  for (const auto& n : g.nodes()) {
    for (int in : n.inputs) {
      const Node& src = g.node(in);
      std::string src_id = dot_id(src);
      if (n.block >= 1 && static_cast<size_t>(n.block) <= g.blocks().size() &&
          g.blocks()[static_cast<size_t>(n.block - 1)].input_node == in) {
        src_id = x0_id(n.block);
      }
      add_edge(src_id, dot_id(n), src.output_shape.channels);
    }
  }

  std::ostringstream out;
  out << "digraph " << Quote(g.name()) << " {\n";
  out << "  rankdir=TB;\n";
  out << "  node [shape=box, fontsize=10];\n";
  for (const auto& n : g.nodes()) {
    if (block_of(n) >= 1) continue;
    out << "  " << dot_id(n) << " [label="
        << Quote(n.name + "\n" + OpDetail(n.op) + "\n" + ShapeToString(n.output_shape))
        << "];\n";
  }
  for (const auto& b : g.blocks()) {
    out << "  subgraph cluster_block" << b.index << " {\n";
    out << "    label=" << Quote("block " + std::to_string(b.index) + " (" +
                                 b.mode.ToString() + ", L=" +
                                 std::to_string(b.topology.layer_count()) + ")")
        << ";\n";
    out << "    " << x0_id(b.index) << " [shape=ellipse, label="
        << Quote("x0\n" + ShapeToString(g.node(b.input_node).output_shape)) << "];\n";
    const std::string prefix = "b" + std::to_string(b.index) + "_l";
    for (const auto& id : unit_order) {
      if (id.rfind(prefix, 0) != 0) continue;
      const auto& [ops, shape] = units.at(id);
      out << "    " << id << " [label="
          << Quote("layer " + id.substr(prefix.size()) + "\n" + ops + "\n" +
                   ShapeToString(shape))
          << "];\n";
    }
    for (const auto& e : intra[b.index]) {
      out << "    " << e.src << " -> " << e.dst << " [label=\"" << e.channels
          << "\"];\n";
    }
    out << "  }\n";
  }
  for (const auto& e : cross) {
    out << "  " << e.src << " -> " << e.dst << " [label=\"" << e.channels << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace threshnet
