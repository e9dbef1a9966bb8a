#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "threshnet/engine.hpp"

namespace threshnet {

struct Dataset {
  Tensor inputs;  // (N, C, H, W)
  std::vector<int> labels;
  int classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

inline constexpr int kMaxToySamples = 64;

// Standard-normal inputs, labels cycling through 0..classes-1.
Dataset MakeSyntheticDataset(int samples, int classes, const Shape& shape,
                             std::uint64_t seed);

// Full-batch SGD without momentum or weight decay. Entry s of the trace is the
// training-mode loss evaluated before update s. Throws kDivergence naming the
// step on a non-finite loss.
std::vector<double> TrainToy(ModelInstance& model, const Dataset& data, int steps,
                             double learning_rate);

// "step,loss" header then one row per step, losses printed round-trippable.
std::string LossTraceToCsv(const std::vector<double>& trace);

struct GradCheckOptions {
  double tolerance = 1e-4;
  double epsilon = 1e-5;
  std::uint64_t seed = 0;
  int batch = 2;
  FaultInjection fault;
};

struct NodeGradCheck {
  int node_id = -1;
  std::string name;
  std::string op;
  std::int64_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  double tolerance = 0.0;
  std::int64_t checked = 0;
  double max_rel_error = 0.0;
  int worst_node = -1;
  std::string worst_node_name;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::vector<NodeGradCheck> per_node;

  std::string ToText() const;
};

// |a - n| / max(|a|, |n|, 1e-6)
double GradRelativeError(double analytic, double numeric);

// Compares every analytic gradient against a central difference. Batchnorm
// runs on batch statistics and running state is left untouched.
GradCheckReport GradCheck(const NetworkGraph& graph, const GradCheckOptions& options);

// Small graphs that jointly exercise every operator: "conv-bn-relu-fc",
// "concat", "pools" and "all-ops".
std::vector<std::string> MicroGraphNames();
NetworkGraph MicroGraph(std::string_view name);

}  // namespace threshnet
