#include <gtest/gtest.h>

#include "json.hpp"
#include "oracles.hpp"
#include "threshnet/graph_export.hpp"

namespace threshnet {
namespace {

using ::threshnet::testing::CheckDotSyntax;
using ::threshnet::testing::CountClusterEdges;

ArchConfig SingleBlock(int depth, const ConnectionMode& mode) {
  ArchConfig cfg;
  cfg.name = "single";
  cfg.input_height = cfg.input_width = 8;
  cfg.input_channels = 4;
  cfg.blocks = {BlockConfig{depth, mode, 4, Ratio(17, 10), Ratio(1, 2), false}};
  cfg.classifier_classes = 3;
  return cfg;
}

TEST(DotTest, PresetsParse) {
  for (PresetName p : AllPresets()) {
    const std::string dot = GraphToDot(BuildNetwork(Preset(p)));
    EXPECT_EQ(CheckDotSyntax(dot), "") << PresetNameString(p);
  }
}

TEST(DotTest, DenseBlockOfFourHasTenIntraEdges) {
  const std::string dot = GraphToDot(BuildNetwork(SingleBlock(4, ConnectionMode::Dense())));
  EXPECT_EQ(CountClusterEdges(dot, "block1"), 10);
}

TEST(DotTest, IntraEdgesMatchConnectionCount) {
  for (const auto& mode : {ConnectionMode::Harmonic(), ConnectionMode::ThresholdBC(8),
                           ConnectionMode::ThresholdAB(4)}) {
    const NetworkGraph g = BuildNetwork(SingleBlock(16, mode));
    EXPECT_EQ(CountClusterEdges(GraphToDot(g), "block1"),
              ConnectionCount(g.blocks()[0].topology))
        << mode.ToString();
  }
}

TEST(DotTest, EdgesCarryChannelLabels) {
  const std::string dot = GraphToDot(BuildNetwork(SingleBlock(2, ConnectionMode::Dense())));
  EXPECT_NE(dot.find("b1_x0 -> b1_l1 [label=\"4\"]"), std::string::npos);
}

TEST(DotTest, ByteIdenticalAcrossRuns) {
  const ArchConfig cfg = Preset("thresholdnet_v1");
  EXPECT_EQ(GraphToDot(BuildNetwork(cfg)), GraphToDot(BuildNetwork(cfg)));
}

TEST(JsonTest, GraphJsonDescribesNodesAndBlocks) {
  const NetworkGraph g = BuildNetwork(Preset("thresholdnet_v1"));
  const auto j = nlohmann::json::parse(GraphToJson(g));
  EXPECT_EQ(j["name"], "thresholdnet_v1");
  EXPECT_EQ(j["nodes"].size(), g.size());
  ASSERT_EQ(j["blocks"].size(), 5u);
  std::vector<int> depths;
  for (const auto& b : j["blocks"]) depths.push_back(b["depth"].get<int>());
  EXPECT_EQ(depths, (std::vector<int>{6, 8, 12, 16, 4}));
  EXPECT_EQ(j["blocks"][3]["mode"], "harmonic");
  size_t edges = 0;
  for (const auto& n : g.nodes()) edges += n.inputs.size();
  EXPECT_EQ(j["edges"].size(), edges);
}

}  // namespace
}  // namespace threshnet
