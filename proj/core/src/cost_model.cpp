#include "threshnet/cost_model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "threshnet/error.hpp"

namespace threshnet {

namespace {

void RequireResolved(const NetworkGraph& g, int node_id) {
  const Node& n = g.node(node_id);
  if (!n.output_shape.resolved()) {
    throw Error(ErrorKind::kAccounting, "unresolved output shape", node_id);
  }
  for (int in : n.inputs) {
    if (!g.node(in).output_shape.resolved()) {
      throw Error(ErrorKind::kAccounting, "unresolved input shape", node_id);
    }
  }
}

}  // namespace

std::int64_t NodeParams(const NetworkGraph& g, int node_id) {
  RequireResolved(g, node_id);
  const Node& n = g.node(node_id);
  if (const auto* c = std::get_if<op::Conv>(&n.op)) {
    std::int64_t p = std::int64_t{c->in_channels} * c->out_channels * c->kernel_h *
                     c->kernel_w;
    return c->has_bias ? p + c->out_channels : p;
  }
  if (const auto* b = std::get_if<op::BatchNorm>(&n.op)) return 2 * std::int64_t{b->channels};
  if (const auto* f = std::get_if<op::FullyConnected>(&n.op)) {
    const std::int64_t p = std::int64_t{f->in_features} * f->out_features;
    return f->has_bias ? p + f->out_features : p;
  }
  return 0;
}

std::int64_t NodeMacs(const NetworkGraph& g, int node_id) {
  RequireResolved(g, node_id);
  const Node& n = g.node(node_id);
  if (const auto* c = std::get_if<op::Conv>(&n.op)) {
    return std::int64_t{c->in_channels} * c->out_channels * c->kernel_h * c->kernel_w *
           n.output_shape.height * n.output_shape.width;
  }
  if (const auto* f = std::get_if<op::FullyConnected>(&n.op)) {
    return std::int64_t{f->in_features} * f->out_features;
  }
  return 0;
}

std::int64_t NodeTraffic(const NetworkGraph& g, int node_id) {
  RequireResolved(g, node_id);
  const Node& n = g.node(node_id);
  if (!std::holds_alternative<op::Conv>(n.op)) return 0;
  return g.input_shape(node_id).elements() + n.output_shape.elements();
}

CostReport Summarize(const NetworkGraph& g) {
  CostReport r;
  r.name = g.name();
  r.per_node.reserve(g.size());
  for (const auto& n : g.nodes()) {
    NodeCost c;
    c.node_id = n.id;
    c.op = std::string(OpName(n.op));
    c.params = NodeParams(g, n.id);
    c.macs = NodeMacs(g, n.id);
    c.flops = 2 * c.macs;
    c.traffic_elements = NodeTraffic(g, n.id);
    r.totals.params += c.params;
    r.totals.macs += c.macs;
    r.totals.flops += c.flops;
    r.totals.traffic_elements += c.traffic_elements;
    r.per_node.push_back(std::move(c));
  }
  return r;
}

std::int64_t MemoryTraffic(const NetworkGraph& g) {
  std::int64_t total = 0;
  for (const auto& n : g.nodes()) total += NodeTraffic(g, n.id);
  return total;
}

std::vector<MetricDelta> CompareReports(const CostReport& a, const CostReport& b) {
  auto row = [](std::string name, std::int64_t x, std::int64_t y) {
    MetricDelta d;
    d.metric = std::move(name);
    d.a = x;
    d.b = y;
    d.delta = y - x;
    if (x != 0) {
      d.relative = static_cast<double>(y - x) / static_cast<double>(x);
    } else {
      d.relative = y == 0 ? 0.0 : std::copysign(INFINITY, static_cast<double>(y));
    }
    return d;
  };
  return {row("#Params", a.totals.params, b.totals.params),
          row("#MAdds", a.totals.macs, b.totals.macs),
          row("#FLOPs", a.totals.flops, b.totals.flops),
          row("Traffic", a.totals.traffic_elements, b.totals.traffic_elements)};
}

std::string FormatCount(std::int64_t value) {
  const double v = static_cast<double>(value);
  const double mag = std::fabs(v);
  char buf[64];
  if (mag >= 1e9) {
    std::snprintf(buf, sizeof(buf), "%.2fG", v / 1e9);
  } else if (mag >= 1e6) {
    std::snprintf(buf, sizeof(buf), "%.2fM", v / 1e6);
  } else if (mag >= 1e3) {
    std::snprintf(buf, sizeof(buf), "%.2fK", v / 1e3);
  } else {
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(value));
  }
  return buf;
}

std::string FormatPercent(double fraction) {
  if (std::isinf(fraction)) return fraction > 0 ? "+inf%" : "-inf%";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", fraction * 100.0);
  return buf;
}

std::string CostReportToJson(const CostReport& r, int indent) {
  nlohmann::json j;
  j["name"] = r.name;
  j["totals"] = {{"params", r.totals.params},
                 {"macs", r.totals.macs},
                 {"flops", r.totals.flops},
                 {"traffic_elements", r.totals.traffic_elements}};
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& c : r.per_node) {
    nodes.push_back({{"node_id", c.node_id},
                     {"op", c.op},
                     {"params", c.params},
                     {"macs", c.macs},
                     {"flops", c.flops},
                     {"traffic_elements", c.traffic_elements}});
  }
  j["per_node"] = std::move(nodes);
  return j.dump(indent);
}

std::string CostReportToCsv(const CostReport& r) {
  std::ostringstream out;
  out << "id,op,params,macs,flops,traffic\n";
  for (const auto& c : r.per_node) {
    out << c.node_id << "," << c.op << "," << c.params << "," << c.macs << ","
        << c.flops << "," << c.traffic_elements << "\n";
  }
  return out.str();
}

std::string CostReportToText(const CostReport& r, int element_bytes) {
  std::ostringstream out;
  out << "#Params " << FormatCount(r.totals.params) << "\n";
  out << "#MAdds " << FormatCount(r.totals.macs) << "\n";
  out << "#FLOPs " << FormatCount(r.totals.flops) << "\n";
  out << "Traffic " << FormatCount(r.totals.traffic_elements) << " elements ("
      << FormatCount(r.totals.traffic_elements * element_bytes) << "B at "
      << element_bytes << " B/element)\n";
  return out.str();
}

}  // namespace threshnet
