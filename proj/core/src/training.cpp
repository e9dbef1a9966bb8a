#include "threshnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "threshnet/error.hpp"

namespace threshnet {

Dataset MakeSyntheticDataset(int samples, int classes, const Shape& shape,
                             std::uint64_t seed) {
  if (samples < 1 || classes < 1 || !shape.resolved()) {
    throw Error(ErrorKind::kConfig, "synthetic dataset needs samples, classes and a shape");
  }
  Dataset d;
  d.classes = classes;
  d.inputs = Tensor({samples, shape.channels, shape.height, shape.width});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : d.inputs.values()) v = dist(rng);
  d.labels.resize(static_cast<size_t>(samples));
  for (int s = 0; s < samples; ++s) d.labels[static_cast<size_t>(s)] = s % classes;
  return d;
}

std::vector<double> TrainToy(ModelInstance& model, const Dataset& data, int steps,
                             double learning_rate) {
  if (steps < 0) throw Error(ErrorKind::kConfig, "steps must be non-negative");
  if (data.size() < 1 || data.size() > kMaxToySamples) {
    throw Error(ErrorKind::kConfig,
                "toy training takes 1.." + std::to_string(kMaxToySamples) + " samples");
  }
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw Error(ErrorKind::kConfig, "learning rate must be finite and non-negative");
  }
  std::vector<double> trace;
  trace.reserve(static_cast<size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    LossAndGrad lg;
    try {
      lg = ComputeLossAndGrad(model, data.inputs, data.labels);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kExecution &&
          std::string_view(e.what()).find("non-finite") != std::string_view::npos) {
        throw Error(ErrorKind::kDivergence,
                    "non-finite activation at step " + std::to_string(step), e.node_id());
      }
      throw;
    }
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorKind::kDivergence, "non-finite loss at step " + std::to_string(step));
    }
    trace.push_back(lg.loss);
    for (const auto& n : model.graph().nodes()) {
      auto& p = model.params(n.id);
      const auto& g = lg.gradients[static_cast<size_t>(n.id)];
      for (size_t k = 0; k < p.size(); ++k) p[k] -= learning_rate * g[k];
    }
  }
  return trace;
}

std::string LossTraceToCsv(const std::vector<double>& trace) {
  std::string out = "step,loss\n";
  char buf[64];
  for (size_t s = 0; s < trace.size(); ++s) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", s, trace[s]);
    out += buf;
  }
  return out;
}

double GradRelativeError(double analytic, double numeric) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
  return std::fabs(analytic - numeric) / scale;
}

GradCheckReport GradCheck(const NetworkGraph& graph, const GradCheckOptions& options) {
  ModelInstance model(graph, options.seed);
  const Shape in = graph.node(0).output_shape;
  const Node& logits = graph.node(LogitsNode(graph));
  const int classes = logits.output_shape.channels;
  const Dataset data =
      MakeSyntheticDataset(options.batch, classes, in, options.seed ^ 0x9e3779b97f4a7c15ULL);

  ExecutionOptions exec;
  exec.training = true;
  exec.update_running_stats = false;
  exec.fault = options.fault;
  const LossAndGrad lg = ComputeLossAndGrad(model, data.inputs, data.labels, exec);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (const auto& n : graph.nodes()) {
    auto& p = model.params(n.id);
    if (p.empty()) continue;
    NodeGradCheck nc;
    nc.node_id = n.id;
    nc.name = n.name;
    nc.op = std::string(OpName(n.op));
    const auto& analytic = lg.gradients[static_cast<size_t>(n.id)];
    for (size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + options.epsilon;
      const double up = ComputeLoss(model, data.inputs, data.labels, true);
      p[k] = saved - options.epsilon;
      const double down = ComputeLoss(model, data.inputs, data.labels, true);
      p[k] = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double err = GradRelativeError(analytic[k], numeric);
      ++nc.checked;
      nc.max_rel_error = std::max(nc.max_rel_error, err);
      if (report.worst_node < 0 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_node = n.id;
        report.worst_node_name = n.name;
        report.worst_index = static_cast<std::int64_t>(k);
        report.worst_analytic = analytic[k];
        report.worst_numeric = numeric;
      }
    }
    report.checked += nc.checked;
    report.per_node.push_back(std::move(nc));
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

std::string GradCheckReport::ToText() const {
  std::ostringstream out;
  char buf[160];
  out << "node  op              scalars  max_rel_error  name\n";
  for (const auto& n : per_node) {
    std::snprintf(buf, sizeof(buf), "%4d  %-14s  %7lld  %13.3e  %s\n", n.node_id,
                  n.op.c_str(), static_cast<long long>(n.checked), n.max_rel_error,
                  n.name.c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "checked %lld scalars, max relative error %.3e (tol %.1e)\n",
                static_cast<long long>(checked), max_rel_error, tolerance);
  out << buf;
  if (worst_node >= 0) {
    std::snprintf(buf, sizeof(buf),
                  "worst: node %d (%s) index %lld analytic %.9e numeric %.9e\n", worst_node,
                  worst_node_name.c_str(), static_cast<long long>(worst_index),
                  worst_analytic, worst_numeric);
    out << buf;
  }
  out << (passed ? "PASS" : "FAIL") << "\n";
  return out.str();
}

std::vector<std::string> MicroGraphNames() {
  return {"conv-bn-relu-fc", "concat", "pools", "all-ops"};
}

NetworkGraph MicroGraph(std::string_view name) {
  GraphBuilder b{std::string(name)};
  if (name == "conv-bn-relu-fc") {
    int x = b.Input({3, 5, 5});
    x = b.Conv(x, 4, 3, 1, 1, true, "conv");
    x = b.BatchNorm(x, "bn");
    x = b.Relu(x, "relu");
    x = b.GlobalAvgPool(x, "gap");
    x = b.FullyConnected(x, 3, true, "fc");
    b.Softmax(x, "softmax");
  } else if (name == "concat") {
    const int x = b.Input({2, 4, 4});
    const int left = b.Conv(x, 3, 3, 1, 1, false, "left.conv");
    const int right = b.Conv(x, 2, 1, 1, 0, true, "right.conv");
    int y = b.Concat({left, right, x}, "concat");
    y = b.Conv(y, 3, 3, 2, 1, true, "merge.conv");
    y = b.GlobalAvgPool(y, "gap");
    y = b.FullyConnected(y, 3, true, "fc");
    b.Softmax(y, "softmax");
  } else if (name == "pools") {
    int x = b.Input({2, 6, 6});
    x = b.Conv(x, 3, 3, 1, 1, true, "conv");
    const int mp = b.MaxPool(x, 3, 2, 1, "maxpool");
    const int ap = b.AvgPool(x, 2, 2, 0, "avgpool");
    int y = b.Concat({mp, ap}, "concat");
    y = b.GlobalAvgPool(y, "gap");
    y = b.FullyConnected(y, 4, true, "fc");
    b.Softmax(y, "softmax");
  } else if (name == "all-ops") {
    int x = b.Input({3, 8, 8});
    x = b.Conv(x, 4, 3, 1, 1, false, "stem.conv");
    x = b.BatchNorm(x, "stem.bn");
    x = b.Relu(x, "stem.relu");
    const int a = b.MaxPool(x, 2, 2, 0, "branch_a.maxpool");
    int c = b.Conv(x, 3, 1, 1, 0, true, "branch_b.conv");
    c = b.AvgPool(c, 3, 2, 1, "branch_b.avgpool");
    int y = b.Concat({a, c}, "concat");
    y = b.BatchNorm(y, "merge.bn");
    y = b.Relu(y, "merge.relu");
    y = b.GlobalAvgPool(y, "gap");
    y = b.FullyConnected(y, 3, true, "fc");
    b.Softmax(y, "softmax");
  } else {
    throw Error(ErrorKind::kConfig, "unknown micro-graph '" + std::string(name) + "'");
  }
  NetworkGraph g = std::move(b).Build();
  const auto violations = ValidateGraph(g);
  if (!violations.empty()) {
    throw Error(ErrorKind::kGraphValidation, violations.front().message,
                violations.front().node_id);
  }
  return g;
}

}  // namespace threshnet
