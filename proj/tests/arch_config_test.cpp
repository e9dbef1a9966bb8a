#include <gtest/gtest.h>

#include "threshnet/arch_config.hpp"
#include "threshnet/error.hpp"

namespace threshnet {
namespace {

TEST(RatioTest, ParsesDecimalsAndFractionsExactly) {
  EXPECT_EQ(Ratio::Parse("1.7"), Ratio(17, 10));
  EXPECT_EQ(Ratio::Parse("17/10"), Ratio(17, 10));
  EXPECT_EQ(Ratio::Parse("0.5"), Ratio(1, 2));
  EXPECT_EQ(Ratio::Parse("3"), Ratio(3, 1));
  EXPECT_EQ(Ratio(34, 20), Ratio(17, 10));
  EXPECT_THROW(Ratio::Parse("abc"), Error);
  EXPECT_THROW(Ratio::Parse("1/0"), Error);
  EXPECT_THROW(Ratio::Parse("-1"), Error);
}

TEST(RatioTest, FloorTimesAvoidsBinaryRounding) {
  EXPECT_EQ(Ratio(17, 10).FloorTimes(32), 54);
  EXPECT_EQ(Ratio(17, 10).FloorTimes(10), 17);  // 1.7 * 10 in binary is 16.999...
  EXPECT_EQ(Ratio(1, 10).FloorTimes(598), 59);
  EXPECT_EQ(Ratio(1, 10).Complement(), Ratio(9, 10));
  EXPECT_EQ(Ratio(17, 10).ToString(), "1.7");
  EXPECT_EQ(Ratio(1, 3).ToString(), "1/3");
}

TEST(ChannelTest, EvenHarmonicLayersAreWidened) {
  const auto h = ConnectionMode::Harmonic();
  EXPECT_EQ(LayerOutChannels(1, h, 32, Ratio(17, 10)), 32);
  EXPECT_EQ(LayerOutChannels(2, h, 32, Ratio(17, 10)), 54);
  const auto ab = ConnectionMode::ThresholdAB(4);
  EXPECT_EQ(LayerOutChannels(4, ab, 32, Ratio(17, 10)), 32);
  EXPECT_EQ(LayerOutChannels(6, ab, 32, Ratio(17, 10)), 54);
  EXPECT_EQ(LayerOutChannels(6, ConnectionMode::Dense(), 32, Ratio(17, 10)), 32);
}

TEST(ChannelTest, BlockOutputMembers) {
  const auto h = ConnectionMode::Harmonic();
  EXPECT_EQ(BlockOutputMembers(BuildBlockTopology(4, h), h),
            (std::vector<LayerId>{0, 1, 3, 4}));
  const auto d = ConnectionMode::Dense();
  EXPECT_EQ(BlockOutputMembers(BuildBlockTopology(3, d), d),
            (std::vector<LayerId>{0, 1, 2, 3}));
}

TEST(ChannelTest, TransitionSemantics) {
  EXPECT_EQ(TransitionOutChannels(598, Ratio(1, 10), ReductionSemantics::kKeepRatio), 59);
  EXPECT_EQ(TransitionOutChannels(598, Ratio(1, 10), ReductionSemantics::kReduceBy), 538);
  EXPECT_EQ(TransitionOutChannels(256, Ratio(1, 2), ReductionSemantics::kKeepRatio), 128);
}

TEST(PresetTest, NamesAndDepths) {
  EXPECT_EQ(AllPresets().size(), 3u);
  auto depths = [](const ArchConfig& c) {
    std::vector<int> d;
    for (const auto& b : c.blocks) d.push_back(b.depth);
    return d;
  };
  EXPECT_EQ(depths(Preset("densenet121")), (std::vector<int>{6, 12, 24, 16}));
  EXPECT_EQ(depths(Preset("thresholdnet_v1")), (std::vector<int>{6, 8, 12, 16, 4}));
  EXPECT_EQ(depths(Preset("thresholdnet_v2")), (std::vector<int>{6, 12, 16, 16, 4}));
  try {
    Preset("resnet50");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnknownPreset);
  }
  for (PresetName p : AllPresets()) {
    EXPECT_EQ(ParsePresetName(PresetNameString(p)), p);
    EXPECT_NO_THROW(Preset(p).Validate());
  }
}

TEST(PresetTest, ToyMatchesDeskScaleShape) {
  const ArchConfig toy = ToyConfig();
  EXPECT_EQ(toy.input_height, 32);
  ASSERT_EQ(toy.blocks.size(), 2u);
  EXPECT_EQ(toy.blocks[0].depth, 2);
  EXPECT_EQ(toy.blocks[1].depth, 2);
  EXPECT_TRUE(toy.blocks[1].mode.is_harmonic());
  EXPECT_EQ(toy.blocks[0].growth_rate, 4);
  EXPECT_EQ(toy.blocks[1].growth_rate, 4);
}

TEST(ParserTest, BaseAndOverrides) {
  const ArchConfig cfg = ParseArchConfig(R"(
# comment
base = thresholdnet_v1
name = v1_wide
input_resolution = 160
even_multiplier = 1.6
block.4.mode = threshold-ab:8
reduction_semantics = reduce-by
)");
  EXPECT_EQ(cfg.name, "v1_wide");
  EXPECT_EQ(cfg.input_height, 160);
  EXPECT_EQ(cfg.input_width, 160);
  EXPECT_EQ(cfg.reduction, ReductionSemantics::kReduceBy);
  for (const auto& b : cfg.blocks) EXPECT_EQ(b.even_multiplier, Ratio(8, 5));
  EXPECT_EQ(cfg.blocks[3].mode, ConnectionMode::ThresholdAB(8));
  EXPECT_EQ(cfg.blocks[4].mode, ConnectionMode::Harmonic());
}

TEST(ParserTest, LayoutFromScratch) {
  const ArchConfig cfg = ParseArchConfig(R"(
input_resolution = 32x24
input_channels = 1
stem = 3x3/1:8
stem_pool = none
block_depths = 2, 3
mode = dense
growth_rate = 4
block.2.mode = harmonic
transition_pool_kind = avg
classifier_classes = 5
)");
  EXPECT_EQ(cfg.input_height, 32);
  EXPECT_EQ(cfg.input_width, 24);
  EXPECT_FALSE(cfg.stem_pool.has_value());
  ASSERT_EQ(cfg.blocks.size(), 2u);
  EXPECT_EQ(cfg.blocks[1].depth, 3);
  EXPECT_TRUE(cfg.blocks[1].mode.is_harmonic());
  EXPECT_EQ(cfg.blocks[0].growth_rate, 4);
  EXPECT_EQ(cfg.transition_pool_kind, PoolKind::kAvg);
}

TEST(ParserTest, RoundTripsEveryPreset) {
  for (PresetName p : AllPresets()) {
    const ArchConfig cfg = Preset(p);
    EXPECT_EQ(ParseArchConfig(ArchConfigToText(cfg)), cfg) << PresetNameString(p);
  }
  EXPECT_EQ(ParseArchConfig(ArchConfigToText(ToyConfig())), ToyConfig());
}

TEST(ParserTest, ErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      ParseArchConfig(text);
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("base = densenet121\nbogus = 1\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("base = densenet121\nname = a\nname = b\n").find("duplicate"),
            std::string::npos);
  EXPECT_NE(message("base = densenet121\nno equals sign\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("base = densenet121\neven_multiplier = 2.5\n").find("even_multiplier"),
            std::string::npos);
  EXPECT_NE(message("base = densenet121\nblock.9.mode = dense\n").find("range"),
            std::string::npos);
}

TEST(ValidateTest, RejectsBadFields) {
  ArchConfig cfg = ToyConfig();
  cfg.blocks[0].mode = ConnectionMode::ThresholdBC(2);
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = ToyConfig();
  cfg.blocks.clear();
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = ToyConfig();
  cfg.blocks[0].transition_reduction = Ratio(0, 1);
  EXPECT_THROW(cfg.Validate(), Error);
}

}  // namespace
}  // namespace threshnet
