#include "threshnet/topology.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "json.hpp"
#include "threshnet/error.hpp"

namespace threshnet {

namespace {

void RequireLayer(LayerId i) {
  if (i < 1) {
    throw Error(ErrorKind::kInvalidLayer,
                "layer " + std::to_string(i) +
                    " has no inputs (0 is the block input)");
  }
}

// {0..head} U {max(0, i-tail)..i-1}, restricted to {0..i-1}.
std::vector<LayerId> HeadTail(LayerId i, int head, int tail) {
  std::vector<LayerId> out;
  const LayerId head_end = std::min(head, i - 1);
  for (LayerId j = 0; j <= head_end; ++j) out.push_back(j);
  for (LayerId j = std::max({0, i - tail, head_end + 1}); j <= i - 1; ++j) {
    out.push_back(j);
  }
  return out;
}

int ParseInt(std::string_view text, std::string_view what) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(ErrorKind::kParse,
                "invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

ConnectionMode ConnectionMode::Parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view key = text.substr(0, colon);
  auto param = [&]() -> int {
    if (colon == std::string_view::npos) {
      throw Error(ErrorKind::kParse,
                  "mode '" + std::string(text) + "' needs a parameter");
    }
    return ParseInt(text.substr(colon + 1), "mode parameter");
  };
  auto no_param = [&] {
    if (colon != std::string_view::npos) {
      throw Error(ErrorKind::kParse,
                  "mode '" + std::string(key) + "' takes no parameter");
    }
  };
  if (key == "dense") {
    no_param();
    return Dense();
  }
  if (key == "harmonic") {
    no_param();
    return Harmonic();
  }
  if (key == "sparse") return Sparse(param());
  if (key == "threshold-ab") return ThresholdAB(param());
  if (key == "threshold-bc") return ThresholdBC(param());
  throw Error(ErrorKind::kParse, "unknown mode '" + std::string(text) + "'");
}

void ConnectionMode::Validate() const {
  // A window of width floor(n/4) (or floor(n/2)) must be at least one layer,
  // otherwise layer i would lose its link to layer i-1.
  if (const auto* s = std::get_if<mode::SparseWindow>(&value_); s && s->n < 2) {
    throw Error(ErrorKind::kInvalidMode, "sparse window needs n >= 2");
  }
  if (const auto* a = std::get_if<mode::ThresholdAB>(&value_); a && a->t < 1) {
    throw Error(ErrorKind::kInvalidMode, "threshold-ab needs t >= 1");
  }
  if (const auto* b = std::get_if<mode::ThresholdBC>(&value_); b && b->t < 4) {
    throw Error(ErrorKind::kInvalidMode,
                "threshold-bc needs t >= 4 (window width floor(t/4) >= 1)");
  }
}

int ConnectionMode::parameter() const {
  return std::visit(
      [](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, mode::SparseWindow>) {
          return m.n;
        } else if constexpr (std::is_same_v<T, mode::ThresholdAB> ||
                             std::is_same_v<T, mode::ThresholdBC>) {
          return m.t;
        } else {
          return 0;
        }
      },
      value_);
}

std::string_view ConnectionMode::keyword() const {
  switch (value_.index()) {
    case 0: return "dense";
    case 1: return "sparse";
    case 2: return "harmonic";
    case 3: return "threshold-ab";
    default: return "threshold-bc";
  }
}

std::string ConnectionMode::ToString() const {
  std::string out(keyword());
  if (!is_dense() && !is_harmonic()) out += ":" + std::to_string(parameter());
  return out;
}

bool ConnectionMode::InHarmonicRegion(LayerId i) const {
  if (is_harmonic()) return true;
  if (std::holds_alternative<mode::ThresholdAB>(value_) ||
      std::holds_alternative<mode::ThresholdBC>(value_)) {
    return i > parameter();
  }
  return false;
}

std::vector<LayerId> DenseInputs(LayerId i) {
  RequireLayer(i);
  std::vector<LayerId> out(static_cast<size_t>(i));
  for (LayerId j = 0; j < i; ++j) out[static_cast<size_t>(j)] = j;
  return out;
}

std::vector<LayerId> SparseInputs(LayerId i, int n) {
  RequireLayer(i);
  return HeadTail(i, n / 2, n / 2);
}

std::vector<LayerId> WindowInputs(LayerId i, int n) {
  RequireLayer(i);
  return HeadTail(i, n / 4, n / 4);
}

std::vector<LayerId> HarmonicInputs(LayerId i) {
  RequireLayer(i);
  if (i % 2 == 1) return {i - 1};
  std::vector<LayerId> out;
  for (long long step = 1; i - step >= 0; step *= 2) {
    out.push_back(static_cast<LayerId>(i - step));
  }
  std::reverse(out.begin(), out.end());
  return out;
}

BlockTopology::BlockTopology(std::vector<std::vector<LayerId>> inputs)
    : inputs_(std::move(inputs)) {
  if (inputs_.empty()) {
    throw Error(ErrorKind::kEmptyBlock, "a block needs at least one layer");
  }
  for (size_t k = 0; k < inputs_.size(); ++k) {
    const auto i = static_cast<LayerId>(k + 1);
    const auto& row = inputs_[k];
    const std::string where = "layer " + std::to_string(i);
    if (row.empty()) {
      throw Error(ErrorKind::kInvalidLayer, where + " has no inputs");
    }
    for (size_t j = 0; j < row.size(); ++j) {
      if (row[j] < 0 || row[j] >= i) {
        throw Error(ErrorKind::kInvalidLayer,
                    where + " reads layer " + std::to_string(row[j]));
      }
      if (j > 0 && row[j] <= row[j - 1]) {
        throw Error(ErrorKind::kInvalidLayer,
                    where + " inputs are not strictly ascending");
      }
    }
    if (row.back() != i - 1) {
      throw Error(ErrorKind::kInvalidLayer,
                  where + " is not connected to its predecessor");
    }
  }
}

const std::vector<LayerId>& BlockTopology::inputs(LayerId i) const {
  if (i < 1 || i > layer_count()) {
    throw Error(ErrorKind::kInvalidLayer,
                "layer " + std::to_string(i) + " outside 1.." +
                    std::to_string(layer_count()));
  }
  return inputs_[static_cast<size_t>(i - 1)];
}

std::vector<LayerId> LayerInputs(LayerId i, const ConnectionMode& mode) {
  return std::visit(
      [i](const auto& m) -> std::vector<LayerId> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, mode::Dense>) {
          return DenseInputs(i);
        } else if constexpr (std::is_same_v<T, mode::SparseWindow>) {
          return SparseInputs(i, m.n);
        } else if constexpr (std::is_same_v<T, mode::Harmonic>) {
          return HarmonicInputs(i);
        } else if constexpr (std::is_same_v<T, mode::ThresholdAB>) {
          return i <= m.t ? DenseInputs(i) : HarmonicInputs(i);
        } else {
          return i <= m.t ? WindowInputs(i, m.t) : HarmonicInputs(i);
        }
      },
      mode.value());
}

BlockTopology BuildBlockTopology(int layers, const ConnectionMode& mode) {
  if (layers < 1) {
    throw Error(ErrorKind::kEmptyBlock,
                "block depth " + std::to_string(layers) + " < 1");
  }
  mode.Validate();
  std::vector<std::vector<LayerId>> rows;
  rows.reserve(static_cast<size_t>(layers));
  for (LayerId i = 1; i <= layers; ++i) rows.push_back(LayerInputs(i, mode));
  return BlockTopology(std::move(rows));
}

long long ConnectionCount(const BlockTopology& topo) {
  long long total = 0;
  for (const auto& row : topo.all_inputs()) {
    total += static_cast<long long>(row.size());
  }
  return total;
}

std::string FormatInputs(const std::vector<LayerId>& inputs) {
  std::string out;
  for (size_t j = 0; j < inputs.size(); ++j) {
    if (j > 0) out += '-';
    out += std::to_string(inputs[j]);
  }
  return out;
}

std::vector<std::string> TopologyToTable(const BlockTopology& topo) {
  std::vector<std::string> rows;
  rows.reserve(topo.all_inputs().size());
  for (const auto& row : topo.all_inputs()) rows.push_back(FormatInputs(row));
  return rows;
}

std::vector<LayerId> ParseInputs(std::string_view row) {
  std::vector<LayerId> out;
  size_t start = 0;
  while (true) {
    const size_t dash = row.find('-', start);
    out.push_back(ParseInt(row.substr(start, dash - start), "layer index"));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  return out;
}

BlockTopology ParseTopologyTable(const std::vector<std::string>& rows) {
  std::vector<std::vector<LayerId>> inputs;
  inputs.reserve(rows.size());
  for (const auto& row : rows) inputs.push_back(ParseInputs(row));
  return BlockTopology(std::move(inputs));
}

std::string TopologyToJson(const BlockTopology& topo, int indent) {
  nlohmann::json j;
  j["layer_count"] = topo.layer_count();
  j["connections"] = ConnectionCount(topo);
  j["inputs"] = topo.all_inputs();
  return j.dump(indent);
}

BlockTopology TopologyFromJson(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
    auto inputs = j.at("inputs").get<std::vector<std::vector<LayerId>>>();
    const int layer_count = j.at("layer_count").get<int>();
    if (layer_count != static_cast<int>(inputs.size())) {
      throw Error(ErrorKind::kParse, "layer_count does not match inputs");
    }
    return BlockTopology(std::move(inputs));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

std::string TopologyToDot(const BlockTopology& topo, std::string_view name) {
  std::ostringstream out;
  out << "digraph \"" << name << "\" {\n";
  out << "  rankdir=LR;\n";
  out << "  node [shape=circle];\n";
  for (LayerId i = 0; i <= topo.layer_count(); ++i) {
    out << "  x" << i << " [label=\"" << i << "\"];\n";
  }
  for (LayerId i = 1; i <= topo.layer_count(); ++i) {
    for (LayerId j : topo.inputs(i)) out << "  x" << j << " -> x" << i << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace threshnet
