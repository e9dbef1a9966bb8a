#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace threshnet {

// Index of a tensor inside one block: 0 is the block input, 1..L are the
// outputs of the block's convolutional layers.
using LayerId = int;

namespace mode {
struct Dense {
  bool operator==(const Dense&) const = default;
};
// SparseNet-style rule: keep the first n/2+1 and the last n/2 predecessors.
struct SparseWindow {
  int n = 0;
  bool operator==(const SparseWindow&) const = default;
};
struct Harmonic {
  bool operator==(const Harmonic&) const = default;
};
// Dense below the threshold, harmonic above it.
struct ThresholdAB {
  int t = 0;
  bool operator==(const ThresholdAB&) const = default;
};
// n/4-window below the threshold (window size tied to t), harmonic above it.
struct ThresholdBC {
  int t = 0;
  bool operator==(const ThresholdBC&) const = default;
};
}  // namespace mode

class ConnectionMode {
 public:
  using Variant = std::variant<mode::Dense, mode::SparseWindow, mode::Harmonic,
                               mode::ThresholdAB, mode::ThresholdBC>;

  ConnectionMode() : value_(mode::Dense{}) {}
  ConnectionMode(Variant value) : value_(value) {}  // NOLINT: implicit by intent

  static ConnectionMode Dense() { return {mode::Dense{}}; }
  static ConnectionMode Sparse(int n) { return {mode::SparseWindow{n}}; }
  static ConnectionMode Harmonic() { return {mode::Harmonic{}}; }
  static ConnectionMode ThresholdAB(int t) { return {mode::ThresholdAB{t}}; }
  static ConnectionMode ThresholdBC(int t) { return {mode::ThresholdBC{t}}; }

  // Accepts "dense", "harmonic", "sparse:N", "threshold-ab:T", "threshold-bc:T".
  static ConnectionMode Parse(std::string_view text);

  const Variant& value() const { return value_; }

  // Throws kInvalidMode when the parameter cannot produce a topology where
  // every layer sees its immediate predecessor.
  void Validate() const;

  // Threshold (or window) parameter; 0 for parameterless modes.
  int parameter() const;
  // Short keyword without the parameter: "dense", "threshold-bc", ...
  std::string_view keyword() const;
  // Round-trips through Parse.
  std::string ToString() const;

  bool is_dense() const { return std::holds_alternative<mode::Dense>(value_); }
  bool is_harmonic() const {
    return std::holds_alternative<mode::Harmonic>(value_);
  }

  // True when layer i is wired by the harmonic rule under this mode.
  bool InHarmonicRegion(LayerId i) const;

  bool operator==(const ConnectionMode&) const = default;

 private:
  Variant value_;
};

// Rule primitives. Each returns a strictly ascending list and throws
// kInvalidLayer for i < 1.
std::vector<LayerId> DenseInputs(LayerId i);
std::vector<LayerId> SparseInputs(LayerId i, int n);
std::vector<LayerId> WindowInputs(LayerId i, int n);
std::vector<LayerId> HarmonicInputs(LayerId i);

// Per-layer input sets of one block. Construction checks every structural
// invariant, so a live BlockTopology is always well formed.
class BlockTopology {
 public:
  // inputs[0] holds the inputs of layer 1.
  explicit BlockTopology(std::vector<std::vector<LayerId>> inputs);

  int layer_count() const { return static_cast<int>(inputs_.size()); }
  // 1-based layer index.
  const std::vector<LayerId>& inputs(LayerId i) const;
  const std::vector<std::vector<LayerId>>& all_inputs() const {
    return inputs_;
  }

  bool operator==(const BlockTopology&) const = default;

 private:
  std::vector<std::vector<LayerId>> inputs_;
};

std::vector<LayerId> LayerInputs(LayerId i, const ConnectionMode& mode);
BlockTopology BuildBlockTopology(int layers, const ConnectionMode& mode);
long long ConnectionCount(const BlockTopology& topo);

// One hyphen-joined row per layer, e.g. "0-4-6-7".
std::vector<std::string> TopologyToTable(const BlockTopology& topo);
std::string FormatInputs(const std::vector<LayerId>& inputs);
std::vector<LayerId> ParseInputs(std::string_view row);
BlockTopology ParseTopologyTable(const std::vector<std::string>& rows);

// {"layer_count": L, "connections": N, "inputs": [[...], ...]}
std::string TopologyToJson(const BlockTopology& topo, int indent = -1);
BlockTopology TopologyFromJson(std::string_view json);

std::string TopologyToDot(const BlockTopology& topo, std::string_view name);

}  // namespace threshnet
