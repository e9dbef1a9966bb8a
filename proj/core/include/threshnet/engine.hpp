#pragma once

#include <cstdint>
#include <vector>

#include "threshnet/network_graph.hpp"
#include "threshnet/tensor.hpp"

namespace threshnet {

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Weights and batchnorm state of one graph. Per-node trainable layout:
//   conv: weight[out][in][kh][kw], then bias[out] if present
//   batchnorm: scale[ch], then shift[ch]
//   fullyconnected: weight[out][in], then bias[out] if present
class ModelInstance {
 public:
  // He-normal weights (variance 2/fan_in), zero biases, unit scale, zero
  // shift, running mean 0 and variance 1. Deterministic in `seed`.
  ModelInstance(NetworkGraph graph, std::uint64_t seed);

  const NetworkGraph& graph() const { return graph_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<double>& params(int node) { return params_.at(static_cast<size_t>(node)); }
  const std::vector<double>& params(int node) const {
    return params_.at(static_cast<size_t>(node));
  }
  std::vector<double>& running_mean(int node) {
    return running_mean_.at(static_cast<size_t>(node));
  }
  const std::vector<double>& running_mean(int node) const {
    return running_mean_.at(static_cast<size_t>(node));
  }
  std::vector<double>& running_var(int node) {
    return running_var_.at(static_cast<size_t>(node));
  }
  const std::vector<double>& running_var(int node) const {
    return running_var_.at(static_cast<size_t>(node));
  }
  double momentum() const { return momentum_; }

  // Allocated trainable scalars across all nodes.
  std::int64_t TrainableCount() const;

 private:
  NetworkGraph graph_;
  std::uint64_t seed_;
  double momentum_ = kBatchNormMomentum;
  std::vector<std::vector<double>> params_;
  std::vector<std::vector<double>> running_mean_;
  std::vector<std::vector<double>> running_var_;
};

inline ModelInstance InitWeights(const NetworkGraph& graph, std::uint64_t seed) {
  return ModelInstance(graph, seed);
}

// Indexed by node id, same layout as ModelInstance::params.
using Gradients = std::vector<std::vector<double>>;

// Test hook: scales the weight gradient of one conv node after its backward
// pass, to prove that gradient checking localizes a broken kernel.
struct FaultInjection {
  int node_id = -1;
  double weight_grad_scale = 1.0;
};

struct ExecutionOptions {
  // Batch statistics in batchnorm (otherwise running statistics).
  bool training = true;
  bool update_running_stats = true;
  FaultInjection fault;
};

// Node whose output is the network's logits: the softmax input when the graph
// ends in a softmax, the last node otherwise.
int LogitsNode(const NetworkGraph& g);

// Eval-mode forward; pure, safe to call concurrently on a shared model.
Tensor Forward(const ModelInstance& model, const Tensor& input);
// Training-mode forward when `training`; updates running statistics.
Tensor Forward(ModelInstance& model, const Tensor& input, bool training);

// Row-wise softmax of rank-2 logits.
Tensor Softmax(const Tensor& logits);
// Mean softmax cross-entropy; throws kInvalidLabel on out-of-range labels.
double CrossEntropy(const Tensor& logits, const std::vector<int>& labels);

struct LossAndGrad {
  double loss = 0.0;
  Gradients gradients;
};

LossAndGrad ComputeLossAndGrad(ModelInstance& model, const Tensor& input,
                               const std::vector<int>& labels,
                               const ExecutionOptions& options = {});

// Loss only, without touching running statistics.
double ComputeLoss(const ModelInstance& model, const Tensor& input,
                   const std::vector<int>& labels, bool training = true);

}  // namespace threshnet
