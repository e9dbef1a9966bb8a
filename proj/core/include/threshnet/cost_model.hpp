#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "threshnet/network_graph.hpp"

namespace threshnet {

struct CostTotals {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t flops = 0;
  std::int64_t traffic_elements = 0;
  bool operator==(const CostTotals&) const = default;
};

struct NodeCost {
  int node_id = 0;
  std::string op;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t flops = 0;
  std::int64_t traffic_elements = 0;
};

struct CostReport {
  std::string name;
  std::vector<NodeCost> per_node;
  CostTotals totals;
};

// Trainable scalars: conv weights (+bias), batchnorm scale and shift, fc
// weights and bias. Running statistics are state, not parameters.
std::int64_t NodeParams(const NetworkGraph& g, int node_id);
// Multiply-accumulates of conv and fc nodes; element-wise ops count zero.
std::int64_t NodeMacs(const NetworkGraph& g, int node_id);
// Elements read plus written by a conv node; zero for everything else.
std::int64_t NodeTraffic(const NetworkGraph& g, int node_id);

CostReport Summarize(const NetworkGraph& g);
std::int64_t MemoryTraffic(const NetworkGraph& g);
inline std::int64_t MemoryTrafficBytes(const NetworkGraph& g, int element_bytes = 4) {
  return MemoryTraffic(g) * element_bytes;
}

struct MetricDelta {
  std::string metric;  // "#Params", "#MAdds", "#FLOPs", "Traffic"
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t delta = 0;    // b - a
  double relative = 0.0;     // (b - a) / a, 0 when a == 0 and b == 0
};

std::vector<MetricDelta> CompareReports(const CostReport& a, const CostReport& b);

// Two decimals with K/M/G suffix: 7978856 -> "7.98M".
std::string FormatCount(std::int64_t value);
// Signed percentage with two decimals: "+10.00%".
std::string FormatPercent(double fraction);

std::string CostReportToJson(const CostReport& r, int indent = 2);
// id,op,params,macs,flops,traffic
std::string CostReportToCsv(const CostReport& r);
// Human summary: "#Params 7.98M" ... one metric per line.
std::string CostReportToText(const CostReport& r, int element_bytes = 4);

}  // namespace threshnet
