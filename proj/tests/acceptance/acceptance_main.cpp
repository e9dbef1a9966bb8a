#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "threshnet/cost_model.hpp"
#include "threshnet/engine.hpp"
#include "threshnet/golden_tables.hpp"
#include "threshnet/training.hpp"

#ifndef THRESHNET_SOURCE_DIR
#define THRESHNET_SOURCE_DIR "."
#endif

namespace {

using namespace threshnet;

struct Outcome {
  bool ok = true;
  std::string detail;

  void Require(bool cond, const std::string& what) {
    if (!cond) {
      if (ok) detail.clear();
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string ReadFile(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<ConnectionMode> ModesUpTo(int layers) {
  std::vector<ConnectionMode> modes = {ConnectionMode::Dense(), ConnectionMode::Harmonic()};
  for (int t = 1; t <= layers; ++t) {
    if (t >= 2) modes.push_back(ConnectionMode::Sparse(t));
    modes.push_back(ConnectionMode::ThresholdAB(t));
    if (t >= 4) modes.push_back(ConnectionMode::ThresholdBC(t));
  }
  return modes;
}

Outcome GoldenTopologies() {
  Outcome o;
  for (const GoldenTable& t : GoldenTables()) {
    const TableVerification v = VerifyGoldenTable(t);
    o.detail += (o.detail.empty() ? "" : " | ") + v.Summary();
    if (t.name == "Table I") {
      bool n6 = false;
      for (const auto& r : v.rows) n6 |= (r.layer == 6 && r.documented && !r.match);
      o.Require(v.matched == 15 && v.documented == 1 && n6 && v.unexpected == 0,
                "Table I expected 15/16 with n=6 documented");
    } else {
      o.Require(v.matched == 16 && v.unexpected == 0, t.name + " expected 16/16");
    }
  }
  return o;
}

Outcome ConnectionTotals() {
  Outcome o;
  const long long bc8 = ConnectionCount(BuildBlockTopology(16, ConnectionMode::ThresholdBC(8)));
  const long long bc12 = ConnectionCount(BuildBlockTopology(16, ConnectionMode::ThresholdBC(12)));
  const long long dense = ConnectionCount(BuildBlockTopology(16, ConnectionMode::Dense()));
  o.Require(bc8 == 51, "BC(8) total " + std::to_string(bc8));
  o.Require(bc12 == 74, "BC(12) total " + std::to_string(bc12));
  o.Require(dense == 16 * 17 / 2, "dense total " + std::to_string(dense));
  std::string table1;
  for (const GoldenTable& t : GoldenTables()) {
    if (t.name != "Table I") continue;
    const TableVerification v = VerifyGoldenTable(t);
    table1 = "; Table I printed " + std::to_string(v.printed_total) + ", generated " +
             std::to_string(v.generated_total) + ", stated " + std::to_string(v.claimed_total) +
             " (logged discrepancy)";
  }
  if (o.ok) o.detail = "BC8=51 BC12=74 dense=136" + table1;
  return o;
}

Outcome DenseNetCosts() {
  Outcome o;
  const CostReport r = Summarize(BuildNetwork(Preset("densenet121")));
  const double params = static_cast<double>(r.totals.params);
  const double macs = static_cast<double>(r.totals.macs);
  const std::vector<int> depths = {6, 12, 24, 16};
  o.Require(r.totals.params == testing::DenseNetParamOracle(depths, 32, 64, 1000),
            "params differ from closed form");
  o.Require(r.totals.macs == testing::DenseNetMacOracle(depths, 32, 64, 1000, 224),
            "MACs differ from closed form");
  o.Require(std::abs(params - 7.97e6) <= 0.01 * 7.97e6, "params outside 1%");
  o.Require(std::abs(macs - 2.88e9) <= 0.02 * 2.88e9, "MACs outside 2%");
  if (o.ok) {
    o.detail = "params " + std::to_string(r.totals.params) + " (" +
               FormatPercent((params - 7.97e6) / 7.97e6) + "), MACs " +
               std::to_string(r.totals.macs) + " (" + FormatPercent((macs - 2.88e9) / 2.88e9) + ")";
  }
  return o;
}

Outcome ThresholdNetSensitivity() {
  Outcome o;
  for (const char* preset : {"thresholdnet_v1", "thresholdnet_v2"}) {
    std::ostringstream out, err;
    const int code = cli::RunCli({"compare", "densenet121", preset}, out, err);
    o.Require(code == 0, std::string("compare exit ") + std::to_string(code));
    const std::string text = out.str();
    o.Require(text.find(std::string("published ") + preset) != std::string::npos,
              std::string("no published line for ") + preset);
    o.Require(text.find('%') != std::string::npos, "no relative deltas");
  }
  const std::string committed =
      ReadFile(std::string(THRESHNET_SOURCE_DIR) + "/reports/sensitivity.md");
  const std::string generated = cli::SensitivitySweepMarkdown();
  o.Require(!committed.empty(), "reports/sensitivity.md missing");
  o.Require(committed == generated, "committed sweep is stale");
  for (const char* m : {"| 1 |", "| 1.6 |", "| 1.7 |", "| 1.9 |", "| keep |", "| reduce-by |"}) {
    o.Require(generated.find(m) != std::string::npos, std::string("sweep lacks ") + m);
  }
  if (o.ok) o.detail = "compare emits published vs computed; sweep report current";
  return o;
}

Outcome TopologyProperties() {
  Outcome o;
  long long checked = 0;
  for (int layers = 1; layers <= 64 && o.ok; ++layers) {
    for (const ConnectionMode& mode : ModesUpTo(layers)) {
      const BlockTopology t = BuildBlockTopology(layers, mode);
      for (LayerId i = 1; i <= layers; ++i) {
        const auto& in = t.inputs(i);
        const std::set<LayerId> s(in.begin(), in.end());
        o.Require(s.count(i - 1) == 1, mode.ToString() + ": missing predecessor");
        o.Require(!in.empty() && in.front() >= 0 && in.back() <= i - 1,
                  mode.ToString() + ": input out of range");
        o.Require(in == testing::OracleInputs(i, mode), mode.ToString() + ": oracle mismatch");
        ++checked;
      }
    }
    for (int t = layers; t <= layers + 2; ++t) {
      const auto ab = BuildBlockTopology(layers, ConnectionMode::ThresholdAB(t));
      const auto dense = BuildBlockTopology(layers, ConnectionMode::Dense());
      for (LayerId i = 1; i <= layers; ++i) {
        o.Require(ab.inputs(i) == dense.inputs(i), "AB(t>=L) differs from dense");
      }
    }
  }
  for (int n = 0; n <= 64; ++n) {
    const int overlap = 2 * (n / 4) + 1;
    for (LayerId i = 1; i <= 64; ++i) {
      const auto w = WindowInputs(i, n);
      const auto d = DenseInputs(i);
      o.Require((w == d) == (i <= overlap), "window/dense equivalence at n=" + std::to_string(n));
      if (i > overlap) {
        o.Require(static_cast<int>(d.size() - w.size()) == i - overlap,
                  "pruning delta at n=" + std::to_string(n));
      }
    }
  }
  std::vector<long long> bc;
  for (int t : {4, 8, 12}) {
    bc.push_back(ConnectionCount(BuildBlockTopology(16, ConnectionMode::ThresholdBC(t))));
  }
  o.Require(bc == std::vector<long long>({39, 51, 74}), "BC totals not 39 < 51 < 74");
  if (o.ok) o.detail = std::to_string(checked) + " rows checked";
  return o;
}

Outcome ParamCrossValidation() {
  Outcome o;
  int graphs = 0;
  auto check = [&](const ArchConfig& cfg) {
    const NetworkGraph g = BuildNetwork(cfg);
    const auto analytic = Summarize(g).totals.params;
    const auto allocated = ModelInstance(g, 0).TrainableCount();
    o.Require(analytic == allocated, cfg.name + ": " + std::to_string(analytic) +
                                         " != " + std::to_string(allocated));
    ++graphs;
  };
  for (PresetName p : AllPresets()) check(Preset(p));
  for (std::uint64_t seed = 1; seed <= 50; ++seed) check(testing::RandomSmallConfig(seed));
  if (o.ok) o.detail = std::to_string(graphs) + " graphs, exact";
  return o;
}

Outcome NumericalCertification() {
  Outcome o;
  std::set<std::string> ops;
  double worst = 0.0;
  for (const auto& name : MicroGraphNames()) {
    const NetworkGraph g = MicroGraph(name);
    for (const auto& n : g.nodes()) ops.insert(std::string(OpName(n.op)));
    GradCheckOptions opt;
    opt.tolerance = 1e-4;
    opt.epsilon = 1e-5;
    const GradCheckReport r = GradCheck(g, opt);
    o.Require(r.passed, name + " failed at " + r.worst_node_name);
    worst = std::max(worst, r.max_rel_error);
  }
  for (const char* op : {"conv", "batchnorm", "relu", "maxpool", "avgpool", "concat",
                         "fullyconnected"}) {
    o.Require(ops.count(op) == 1, std::string("no micro graph covers ") + op);
  }

  GraphBuilder b;
  const int x = b.Input({3, 5, 5});
  b.Conv(x, 4, 3, 1, 1, true);
  ModelInstance m(std::move(b).Build(), 17);
  const auto& p = m.params(1);
  const std::vector<double> weight(p.begin(), p.end() - 4);
  const std::vector<double> bias(p.end() - 4, p.end());
  Tensor in({1, 3, 5, 5});
  for (size_t k = 0; k < in.size(); ++k) in[k] = std::sin(0.37 * static_cast<double>(k));
  const Tensor want = testing::BruteForceConv(in, weight, bias, 4, 3, 1, 1);
  const Tensor got = Forward(static_cast<const ModelInstance&>(m), in);
  double diff = 0.0;
  for (size_t k = 0; k < want.size(); ++k) diff = std::max(diff, std::abs(want[k] - got[k]));
  o.Require(got.shape() == want.shape() && diff < 1e-12, "conv oracle diff " + std::to_string(diff));
  if (o.ok) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "max grad rel err %.2e, conv oracle diff %.1e", worst, diff);
    o.detail = buf;
  }
  return o;
}

Outcome Trainability() {
  Outcome o;
  const ArchConfig cfg = ToyConfig();
  o.Require(cfg.blocks.size() == 2 && cfg.blocks[0].depth == 2 && cfg.blocks[1].depth == 2,
            "toy blocks are not (2,2)");
  o.Require(cfg.blocks.size() == 2 && cfg.blocks[1].mode.is_harmonic(),
            "toy second block not harmonic");
  o.Require(cfg.input_height == 32 && cfg.input_width == 32, "toy input not 32x32");
  for (const auto& blk : cfg.blocks) o.Require(blk.growth_rate == 4, "toy growth rate not 4");
  const NetworkGraph g = BuildNetwork(cfg);
  const Dataset data = MakeSyntheticDataset(8, cfg.classifier_classes, g.node(0).output_shape, 7);
  ModelInstance a(g, 7), b(g, 7);
  const auto ta = TrainToy(a, data, 200, 0.05);
  const auto tb = TrainToy(b, data, 200, 0.05);
  o.Require(!ta.empty() && ta.back() < 0.05, "final loss " + std::to_string(ta.back()));
  o.Require(ta == tb, "traces differ between runs");
  if (o.ok) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "loss %.4f -> %.4f, deterministic", ta.front(), ta.back());
    o.detail = buf;
  }
  return o;
}

Outcome ShapeConformance() {
  Outcome o;
  const std::vector<std::pair<std::string, int>> expected = {
      {"stem.conv1", 112}, {"stem.pool", 56},         {"transition1.pool", 28},
      {"transition2.pool", 14}, {"transition3.conv", 14}, {"transition4.pool", 7},
      {"classifier.pool", 1}};
  const std::vector<std::pair<std::string, std::vector<int>>> presets = {
      {"thresholdnet_v1", {6, 8, 12, 16, 4}}, {"thresholdnet_v2", {6, 12, 16, 16, 4}}};
  for (const auto& [preset, depths] : presets) {
    const NetworkGraph g = BuildNetwork(Preset(preset));
    for (const auto& [stage, size] : expected) {
      bool found = false;
      for (const auto& s : g.stages()) {
        if (s.name != stage) continue;
        found = true;
        o.Require(s.shape.height == size && s.shape.width == size,
                  preset + " " + stage + " is " + ShapeToString(s.shape));
      }
      o.Require(found, preset + " lacks stage " + stage);
    }
    std::vector<int> got;
    for (const auto& blk : g.blocks()) got.push_back(blk.topology.layer_count());
    o.Require(got == depths, preset + " block depths differ");
  }
  if (o.ok) o.detail = "112 56 28 14 14 7 1; depths (6,8,12,16,4) / (6,12,16,16,4)";
  return o;
}

Outcome ExclusionDocumented() {
  Outcome o;
  const std::string readme = ReadFile(std::string(THRESHNET_SOURCE_DIR) + "/README.md");
  o.Require(readme.find("CIFAR-10") != std::string::npos, "README does not mention CIFAR-10");
  o.Require(readme.find("STL-10") != std::string::npos, "README does not mention STL-10");
  o.Require(readme.find("not reproduced") != std::string::npos,
            "README does not state the exclusion");
  if (o.ok) o.detail = "README documents the excluded error-rate and timing tables";
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "golden topology reproduction", 1, GoldenTopologies},
      {2, "connection totals", 1, ConnectionTotals},
      {3, "densenet121 cost oracle", 5, DenseNetCosts},
      {4, "thresholdnet cost sensitivity report", 30, ThresholdNetSensitivity},
      {5, "topology property suite", 10, TopologyProperties},
      {6, "builder/engine parameter cross-validation", 60, ParamCrossValidation},
      {7, "numerical certification", 60, NumericalCertification},
      {8, "trainability smoke test", 180, Trainability},
      {9, "shape conformance", 1, ShapeConformance},
      {10, "desk-scale exclusion documented", 1, ExclusionDocumented},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      o.ok = false;
      o.detail += "; over time budget";
    }
    if (!o.ok) ++failed;
    std::printf("%s criterion %d: %s (%.2fs / %.0fs) %s\n", o.ok ? "PASS" : "FAIL", c.id,
                c.title.c_str(), secs, c.budget_seconds, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
