#include <gtest/gtest.h>

#include "json.hpp"
#include "oracles.hpp"
#include "threshnet/cost_model.hpp"
#include "threshnet/error.hpp"

namespace threshnet {
namespace {

NetworkGraph SingleConv(int cin, int cout, int kernel, int size, bool bias = false) {
  GraphBuilder b;
  const int x = b.Input({cin, size, size});
  b.Conv(x, cout, kernel, 1, kernel / 2, bias);
  return std::move(b).Build();
}

ArchConfig SingleBlock(const ConnectionMode& mode) {
  ArchConfig cfg;
  cfg.input_height = cfg.input_width = 14;
  cfg.input_channels = 64;
  cfg.blocks = {BlockConfig{16, mode, 32, Ratio(1, 1), Ratio(1, 2), false}};
  return cfg;
}

std::int64_t ConvMacs(const NetworkGraph& g) {
  std::int64_t total = 0;
  for (const auto& n : g.nodes()) {
    if (std::holds_alternative<op::Conv>(n.op)) total += NodeMacs(g, n.id);
  }
  return total;
}

TEST(NodeCostTest, HandExamples) {
  const NetworkGraph unit = SingleConv(1, 1, 1, 1);
  EXPECT_EQ(NodeParams(unit, 1), 1);
  EXPECT_EQ(NodeMacs(unit, 1), 1);
  EXPECT_EQ(NodeTraffic(unit, 1), 2);
  EXPECT_EQ(NodeParams(SingleConv(64, 32, 3, 4), 1), 18432);
  EXPECT_EQ(NodeParams(SingleConv(64, 32, 3, 4, true), 1), 18432 + 32);

  GraphBuilder b;
  int x = b.Input({3, 224, 224});
  x = b.Conv(x, 32, 3, 2, 1, false);
  x = b.BatchNorm(x);
  x = b.GlobalAvgPool(x);
  b.FullyConnected(x, 1000);
  NetworkGraph g = std::move(b).Build();
  EXPECT_EQ(NodeMacs(g, 1), 10838016);
  EXPECT_EQ(NodeParams(g, 2), 64);
  EXPECT_EQ(NodeMacs(g, 2), 0);

  GraphBuilder f;
  const int v = f.Input({1024, 1, 1});
  f.FullyConnected(v, 1000);
  const NetworkGraph fc = std::move(f).Build();
  EXPECT_EQ(NodeMacs(fc, 1), 1024000);
  EXPECT_EQ(NodeParams(fc, 1), 1025000);
}

TEST(NodeCostTest, UnresolvedShapeIsAnAccountingError) {
  GraphBuilder b;
  const int x = b.Input({1, 4, 4});
  b.Conv(x, 1, 3, 1, 1, false);
  std::vector<Node> nodes = std::move(b).Build().nodes();
  nodes[1].output_shape = {};
  const NetworkGraph g("broken", nodes);
  try {
    NodeParams(g, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kAccounting);
    EXPECT_EQ(e.node_id(), 1);
  }
}

TEST(TrafficTest, SharedInputCountedPerConsumer) {
  GraphBuilder b;
  const int x = b.Input({1, 2, 2});
  const int a = b.Conv(x, 1, 1, 1, 0, false);
  const int c = b.Conv(x, 1, 1, 1, 0, false);
  b.Concat({a, c});
  EXPECT_EQ(MemoryTraffic(std::move(b).Build()), 16);
}

TEST(TrafficTest, DenseBlockMovesMoreThanThresholdBlock) {
  const auto dense = Summarize(BuildNetwork(SingleBlock(ConnectionMode::Dense())));
  const auto bc12 = Summarize(BuildNetwork(SingleBlock(ConnectionMode::ThresholdBC(12))));
  const auto bc8 = Summarize(BuildNetwork(SingleBlock(ConnectionMode::ThresholdBC(8))));
  EXPECT_GT(dense.totals.traffic_elements, bc8.totals.traffic_elements);
  EXPECT_GT(dense.totals.macs, bc12.totals.macs);
  EXPECT_GT(bc12.totals.macs, bc8.totals.macs);
}

TEST(SummaryTest, DenseNet121MatchesClosedFormOracle) {
  const NetworkGraph g = BuildNetwork(Preset("densenet121"));
  const CostReport r = Summarize(g);
  const std::vector<int> depths = {6, 12, 24, 16};
  EXPECT_EQ(r.totals.params, ::threshnet::testing::DenseNetParamOracle(depths, 32, 64, 1000));
  EXPECT_EQ(r.totals.macs, ::threshnet::testing::DenseNetMacOracle(depths, 32, 64, 1000, 224));
  EXPECT_EQ(r.totals.flops, 2 * r.totals.macs);
  EXPECT_NEAR(static_cast<double>(r.totals.params), 7.97e6, 0.01 * 7.97e6);
  EXPECT_NEAR(static_cast<double>(r.totals.macs), 2.88e9, 0.02 * 2.88e9);
}

TEST(SummaryTest, TotalsEqualSumOfNodes) {
  const CostReport r = Summarize(BuildNetwork(Preset("thresholdnet_v2")));
  CostTotals sum;
  for (const auto& n : r.per_node) {
    sum.params += n.params;
    sum.macs += n.macs;
    sum.flops += n.flops;
    sum.traffic_elements += n.traffic_elements;
    EXPECT_EQ(n.flops, 2 * n.macs);
  }
  EXPECT_EQ(sum, r.totals);
}

TEST(SummaryTest, InvariantUnderTopologicalReordering) {
  for (PresetName p : AllPresets()) {
    const NetworkGraph g = BuildNetwork(Preset(p));
    for (std::uint64_t seed : {1u, 2u}) {
      const NetworkGraph s = ::threshnet::testing::ShuffledTopologicalCopy(g, seed);
      ASSERT_TRUE(ValidateGraph(s).empty());
      EXPECT_EQ(Summarize(s).totals, Summarize(g).totals);
    }
  }
}

TEST(SummaryTest, DoublingResolutionQuadruplesConvMacs) {
  for (PresetName p : AllPresets()) {
    ArchConfig cfg = Preset(p);
    const NetworkGraph base = BuildNetwork(cfg);
    cfg.input_height = cfg.input_width = 448;
    const NetworkGraph big = BuildNetwork(cfg);
    EXPECT_EQ(ConvMacs(big), 4 * ConvMacs(base));
    EXPECT_EQ(Summarize(big).totals.params, Summarize(base).totals.params);
  }
}

TEST(CompareTest, DeltasAndSigns) {
  CostReport a, b;
  a.totals = {100, 10, 20, 5};
  b.totals = {110, 10, 20, 0};
  const auto d = CompareReports(a, b);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0].metric, "#Params");
  EXPECT_EQ(d[0].delta, 10);
  EXPECT_DOUBLE_EQ(d[0].relative, 0.10);
  EXPECT_EQ(FormatPercent(d[0].relative), "+10.00%");
  EXPECT_EQ(d[1].delta, 0);
  EXPECT_EQ(d[3].delta, -5);
  for (const auto& same : CompareReports(a, a)) {
    EXPECT_EQ(same.delta, 0);
    EXPECT_EQ(same.relative, 0.0);
  }
}

TEST(FormatTest, Suffixes) {
  EXPECT_EQ(FormatCount(7978856), "7.98M");
  EXPECT_EQ(FormatCount(2834161664), "2.83G");
  EXPECT_EQ(FormatCount(1500), "1.50K");
  EXPECT_EQ(FormatCount(12), "12");
}

TEST(SerializeTest, JsonAndCsvRows) {
  const NetworkGraph g = BuildNetwork(ToyConfig());
  const CostReport r = Summarize(g);
  const auto j = nlohmann::json::parse(CostReportToJson(r));
  EXPECT_EQ(j["totals"]["params"].get<std::int64_t>(), r.totals.params);
  EXPECT_EQ(j["per_node"].size(), g.size());
  const std::string csv = CostReportToCsv(r);
  EXPECT_EQ(csv.rfind("id,op,params,macs,flops,traffic\n", 0), 0u);
  EXPECT_EQ(static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')), g.size() + 1);
  const std::string text = CostReportToText(r);
  EXPECT_NE(text.find("#Params"), std::string::npos);
  EXPECT_NE(text.find("#MAdds"), std::string::npos);
}

}  // namespace
}  // namespace threshnet
