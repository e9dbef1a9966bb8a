#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "threshnet/topology.hpp"

namespace threshnet {

// Exact non-negative rational. Channel arithmetic floors k*m and theta*C, so
// decimal inputs like 1.7 are held as 17/10 rather than a binary double.
class Ratio {
 public:
  Ratio() = default;
  Ratio(std::int64_t num, std::int64_t den);

  // "1.7", "0.5", "3", "17/10".
  static Ratio Parse(std::string_view text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double ToDouble() const { return static_cast<double>(num_) / den_; }
  // floor(value * this)
  std::int64_t FloorTimes(std::int64_t value) const;
  Ratio Complement() const;  // 1 - this
  std::string ToString() const;

  bool operator==(const Ratio& o) const {
    return num_ == o.num_ && den_ == o.den_;
  }
  bool operator<(const Ratio& o) const { return num_ * o.den_ < o.num_ * den_; }
  bool operator<=(const Ratio& o) const { return !(o < *this); }

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

enum class LayerUnitOrder { kConvBnRelu, kBnReluConv };
enum class PoolKind { kMax, kAvg };
// How a transition's theta is read: keep floor(theta*C) channels, or remove
// theta of them and keep floor((1-theta)*C).
enum class ReductionSemantics { kKeepRatio, kReduceBy };

struct ConvSpec {
  int kernel = 3;
  int stride = 1;
  int out_channels = 1;
  bool operator==(const ConvSpec&) const = default;
};

struct PoolSpec {
  int kernel = 3;
  int stride = 2;
  int pad = 1;
  bool operator==(const PoolSpec&) const = default;
};

struct BlockConfig {
  int depth = 1;
  ConnectionMode mode;
  int growth_rate = 32;
  Ratio even_multiplier{17, 10};
  Ratio transition_reduction{1, 2};
  bool transition_pool = true;
  bool operator==(const BlockConfig&) const = default;
};

struct ArchConfig {
  std::string name = "custom";
  int input_height = 224;
  int input_width = 224;
  int input_channels = 3;
  std::vector<ConvSpec> stem;
  std::optional<PoolSpec> stem_pool;
  std::vector<BlockConfig> blocks;
  int classifier_classes = 1000;
  LayerUnitOrder layer_unit_order = LayerUnitOrder::kConvBnRelu;
  bool bottleneck = false;
  // Bottleneck width is factor * growth rate (DenseNet-BC uses 4).
  int bottleneck_factor = 4;
  PoolKind transition_pool_kind = PoolKind::kMax;
  ReductionSemantics reduction = ReductionSemantics::kKeepRatio;

  // Throws kConfig describing the first violated field constraint.
  void Validate() const;
  bool operator==(const ArchConfig&) const = default;
};

enum class PresetName { kDenseNet121, kThresholdNetV1, kThresholdNetV2 };

std::optional<PresetName> ParsePresetName(std::string_view name);
std::string_view PresetNameString(PresetName name);
std::vector<PresetName> AllPresets();

ArchConfig Preset(PresetName name);
// Throws kUnknownPreset for anything but the three recognized names.
ArchConfig Preset(std::string_view name);

// Tiny two-block threshold net used for desk-scale training and gradient
// checks: 32x32 input, blocks (2, 2) with a harmonic second block, k = 4.
ArchConfig ToyConfig();

// Channels emitted by layer i: floor(k*m) on even layers of the harmonic
// region, k everywhere else.
int LayerOutChannels(LayerId i, const ConnectionMode& mode, int growth_rate,
                     const Ratio& even_multiplier);

// Layers of a block that feed its transition (or the classifier).
std::vector<LayerId> BlockOutputMembers(const BlockTopology& topo,
                                        const ConnectionMode& mode);

// Output channels of a transition reading `in_channels`.
int TransitionOutChannels(int in_channels, const Ratio& theta,
                          ReductionSemantics semantics);

// Flat key-value text format:
//   # comment
//   base = thresholdnet_v1
//   input_resolution = 224        (or 224x160)
//   stem = 3x3/2:32, 3x3/1:64
//   stem_pool = 3x3/2/1           (or none)
//   block_depths = 6, 8, 12, 16, 4
//   block.4.mode = harmonic
//   even_multiplier = 1.6         (applies to every block)
// See README for the full key list.
ArchConfig ParseArchConfig(std::string_view text);
ArchConfig LoadArchConfig(const std::string& path);
std::string ArchConfigToText(const ArchConfig& cfg);

}  // namespace threshnet
