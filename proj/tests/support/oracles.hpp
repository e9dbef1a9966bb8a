#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "threshnet/arch_config.hpp"
#include "threshnet/network_graph.hpp"
#include "threshnet/tensor.hpp"

namespace threshnet::testing {

// Set-based restatement of the connection rules, written from the rule
// definitions rather than the library's head/tail helpers.
std::vector<int> OracleInputs(int i, const ConnectionMode& mode);

// Six nested loops over (n, oc, oh, ow, ic, kh, kw) with explicit bounds
// checks; weights laid out [out][in][kh][kw].
Tensor BruteForceConv(const Tensor& x, const std::vector<double>& weight,
                      const std::vector<double>& bias, int out_channels, int kernel,
                      int stride, int pad);

// DenseNet-BC parameter count from closed-form per-stage arithmetic.
std::int64_t DenseNetParamOracle(const std::vector<int>& depths, int growth, int stem,
                                 int classes);
// Matching conv/fc MAC count for a square input.
std::int64_t DenseNetMacOracle(const std::vector<int>& depths, int growth, int stem,
                               int classes, int resolution);

// Same graph with nodes renumbered in a different valid topological order.
NetworkGraph ShuffledTopologicalCopy(const NetworkGraph& g, std::uint64_t seed);

// Minimal DOT grammar check: digraph header, balanced braces, statements
// terminated by ';', quoted strings closed, edges between identifiers.
// Returns an empty string when valid, otherwise a description.
std::string CheckDotSyntax(const std::string& dot);

// Edges whose both endpoints sit in `subgraph cluster_<name> { ... }`.
int CountClusterEdges(const std::string& dot, const std::string& cluster);

// Random small but valid architecture.
ArchConfig RandomSmallConfig(std::uint64_t seed);

}  // namespace threshnet::testing
