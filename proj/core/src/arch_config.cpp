#include "threshnet/arch_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "threshnet/error.hpp"

namespace threshnet {

Ratio::Ratio(std::int64_t num, std::int64_t den) {
  if (den <= 0 || num < 0) {
    throw Error(ErrorKind::kConfig, "ratio needs num >= 0 and den > 0");
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

namespace {

std::string_view Trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::int64_t ParseInt64(std::string_view text, std::string_view what) {
  text = Trim(text);
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(ErrorKind::kConfig,
                "invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

int ParseInt(std::string_view text, std::string_view what) {
  const auto v = ParseInt64(text, what);
  if (v < -(1LL << 31) || v >= (1LL << 31)) {
    throw Error(ErrorKind::kConfig, std::string(what) + " out of range");
  }
  return static_cast<int>(v);
}

bool ParseBool(std::string_view text, std::string_view what) {
  text = Trim(text);
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw Error(ErrorKind::kConfig,
              "invalid " + std::string(what) + " '" + std::string(text) + "'");
}

std::vector<std::string_view> Split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(Trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Ratio Ratio::Parse(std::string_view text) {
  text = Trim(text);
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    return Ratio(ParseInt64(text.substr(0, slash), "ratio"),
                 ParseInt64(text.substr(slash + 1), "ratio"));
  }
  const auto dot = text.find('.');
  if (dot == std::string_view::npos) return Ratio(ParseInt64(text, "ratio"), 1);
  const std::string_view whole = text.substr(0, dot);
  const std::string_view frac = text.substr(dot + 1);
  if (frac.empty() || frac.size() > 12 ||
      frac.find_first_not_of("0123456789") != std::string_view::npos) {
    throw Error(ErrorKind::kConfig, "invalid ratio '" + std::string(text) + "'");
  }
  std::int64_t den = 1;
  for (size_t k = 0; k < frac.size(); ++k) den *= 10;
  const std::int64_t w = whole.empty() ? 0 : ParseInt64(whole, "ratio");
  return Ratio(w * den + ParseInt64(frac, "ratio"), den);
}

std::int64_t Ratio::FloorTimes(std::int64_t value) const {
  return value * num_ / den_;
}

Ratio Ratio::Complement() const {
  if (num_ > den_) throw Error(ErrorKind::kConfig, "ratio above 1");
  return Ratio(den_ - num_, den_);
}

std::string Ratio::ToString() const {
  // Exact decimal when den divides a power of ten.
  std::int64_t pow10 = 1;
  int digits = 0;
  while (pow10 % den_ != 0 && digits < 15) {
    pow10 *= 10;
    ++digits;
  }
  if (pow10 % den_ != 0) {
    return std::to_string(num_) + "/" + std::to_string(den_);
  }
  const std::int64_t scaled = num_ * (pow10 / den_);
  std::string out = std::to_string(scaled / pow10);
  if (digits > 0) {
    std::string frac = std::to_string(scaled % pow10);
    frac.insert(0, static_cast<size_t>(digits) - frac.size(), '0');
    out += "." + frac;
  }
  return out;
}

void ArchConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (input_height < 1 || input_width < 1) fail("input resolution must be >= 1");
  if (input_channels < 1) fail("input_channels must be >= 1");
  for (const auto& c : stem) {
    if (c.kernel < 1 || c.stride < 1 || c.out_channels < 1) {
      fail("stem conv needs kernel, stride, channels >= 1");
    }
  }
  if (stem_pool && (stem_pool->kernel < 1 || stem_pool->stride < 1 ||
                    stem_pool->pad < 0 || 2 * stem_pool->pad > stem_pool->kernel)) {
    fail("invalid stem pool");
  }
  if (blocks.empty()) fail("at least one block is required");
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const std::string where = "block " + std::to_string(b + 1) + ": ";
    if (blk.depth < 1) fail(where + "depth must be >= 1");
    try {
      blk.mode.Validate();
    } catch (const Error& e) {
      fail(where + e.what());
    }
    if (blk.growth_rate < 1) fail(where + "growth_rate must be >= 1");
    if (blk.even_multiplier < Ratio(1, 1) || !(blk.even_multiplier < Ratio(2, 1))) {
      fail(where + "even_multiplier must satisfy 1 <= m < 2");
    }
    if (blk.transition_reduction == Ratio(0, 1) ||
        !(blk.transition_reduction <= Ratio(1, 1))) {
      fail(where + "transition_reduction must satisfy 0 < theta <= 1");
    }
  }
  if (classifier_classes < 1) fail("classifier_classes must be >= 1");
  if (bottleneck_factor < 1) fail("bottleneck_factor must be >= 1");
}

std::optional<PresetName> ParsePresetName(std::string_view name) {
  if (name == "densenet121") return PresetName::kDenseNet121;
  if (name == "thresholdnet_v1") return PresetName::kThresholdNetV1;
  if (name == "thresholdnet_v2") return PresetName::kThresholdNetV2;
  return std::nullopt;
}

std::string_view PresetNameString(PresetName name) {
  switch (name) {
    case PresetName::kDenseNet121: return "densenet121";
    case PresetName::kThresholdNetV1: return "thresholdnet_v1";
    case PresetName::kThresholdNetV2: return "thresholdnet_v2";
  }
  return "";
}

std::vector<PresetName> AllPresets() {
  return {PresetName::kDenseNet121, PresetName::kThresholdNetV1,
          PresetName::kThresholdNetV2};
}

namespace {

ArchConfig DenseNet121() {
  ArchConfig cfg;
  cfg.name = "densenet121";
  cfg.stem = {{7, 2, 64}};
  cfg.stem_pool = PoolSpec{3, 2, 1};
  for (int depth : {6, 12, 24, 16}) {
    cfg.blocks.push_back(BlockConfig{depth, ConnectionMode::Dense(), 32,
                                     Ratio(1, 1), Ratio(1, 2), true});
  }
  cfg.classifier_classes = 1000;
  cfg.layer_unit_order = LayerUnitOrder::kBnReluConv;
  cfg.bottleneck = true;
  cfg.bottleneck_factor = 4;
  cfg.transition_pool_kind = PoolKind::kAvg;
  return cfg;
}

// Blocks 1-3 dense, 4-5 harmonic; no pooling after block 3.
ArchConfig ThresholdNet(std::string name, const std::vector<int>& depths) {
  ArchConfig cfg;
  cfg.name = std::move(name);
  cfg.stem = {{3, 2, 32}, {3, 1, 64}};
  cfg.stem_pool = PoolSpec{3, 2, 1};
  for (size_t b = 0; b < depths.size(); ++b) {
    const bool harmonic = b >= 3;
    cfg.blocks.push_back(BlockConfig{
        depths[b],
        harmonic ? ConnectionMode::Harmonic() : ConnectionMode::Dense(), 32,
        Ratio(17, 10), harmonic ? Ratio(1, 10) : Ratio(1, 2), b != 2});
  }
  cfg.classifier_classes = 1000;
  cfg.layer_unit_order = LayerUnitOrder::kConvBnRelu;
  cfg.bottleneck = false;
  cfg.transition_pool_kind = PoolKind::kMax;
  return cfg;
}

}  // namespace

ArchConfig Preset(PresetName name) {
  switch (name) {
    case PresetName::kDenseNet121: return DenseNet121();
    case PresetName::kThresholdNetV1:
      return ThresholdNet("thresholdnet_v1", {6, 8, 12, 16, 4});
    case PresetName::kThresholdNetV2:
      return ThresholdNet("thresholdnet_v2", {6, 12, 16, 16, 4});
  }
  throw Error(ErrorKind::kUnknownPreset, "unknown preset");
}

ArchConfig Preset(std::string_view name) {
  const auto parsed = ParsePresetName(name);
  if (!parsed) {
    throw Error(ErrorKind::kUnknownPreset,
                "unknown preset '" + std::string(name) +
                    "' (expected densenet121, thresholdnet_v1, thresholdnet_v2)");
  }
  return Preset(*parsed);
}

ArchConfig ToyConfig() {
  ArchConfig cfg;
  cfg.name = "toy";
  cfg.input_height = 32;
  cfg.input_width = 32;
  cfg.input_channels = 3;
  cfg.stem = {{5, 4, 32}};
  cfg.stem_pool = PoolSpec{3, 2, 1};
  cfg.blocks = {
      BlockConfig{2, ConnectionMode::Dense(), 4, Ratio(17, 10), Ratio(1, 2), true},
      BlockConfig{2, ConnectionMode::Harmonic(), 4, Ratio(17, 10), Ratio(1, 10),
                  true},
  };
  cfg.classifier_classes = 8;
  cfg.layer_unit_order = LayerUnitOrder::kConvBnRelu;
  cfg.bottleneck = false;
  cfg.transition_pool_kind = PoolKind::kMax;
  return cfg;
}

int LayerOutChannels(LayerId i, const ConnectionMode& mode, int growth_rate,
                     const Ratio& even_multiplier) {
  if (i % 2 == 0 && mode.InHarmonicRegion(i)) {
    return static_cast<int>(even_multiplier.FloorTimes(growth_rate));
  }
  return growth_rate;
}

std::vector<LayerId> BlockOutputMembers(const BlockTopology& topo,
                                        const ConnectionMode& mode) {
  const int layers = topo.layer_count();
  std::vector<LayerId> out{0};
  for (LayerId i = 1; i <= layers; ++i) {
    const bool keep = !mode.InHarmonicRegion(i) || i % 2 == 1 || i == layers;
    if (keep) out.push_back(i);
  }
  return out;
}

int TransitionOutChannels(int in_channels, const Ratio& theta,
                          ReductionSemantics semantics) {
  const Ratio keep =
      semantics == ReductionSemantics::kKeepRatio ? theta : theta.Complement();
  return static_cast<int>(keep.FloorTimes(in_channels));
}

// ---------------------------------------------------------------------------
// Key-value config format.

namespace {

ConvSpec ParseConvSpec(std::string_view text) {
  // KxK/S:C
  const auto x = text.find('x');
  const auto slash = text.find('/');
  const auto colon = text.find(':');
  if (x == std::string_view::npos || slash == std::string_view::npos ||
      colon == std::string_view::npos || !(x < slash && slash < colon)) {
    throw Error(ErrorKind::kConfig,
                "stem conv '" + std::string(text) + "' is not KxK/S:C");
  }
  const int kh = ParseInt(text.substr(0, x), "kernel");
  const int kw = ParseInt(text.substr(x + 1, slash - x - 1), "kernel");
  if (kh != kw) throw Error(ErrorKind::kConfig, "only square stem kernels");
  return ConvSpec{kh, ParseInt(text.substr(slash + 1, colon - slash - 1), "stride"),
                  ParseInt(text.substr(colon + 1), "channels")};
}

std::optional<PoolSpec> ParsePoolSpec(std::string_view text) {
  text = Trim(text);
  if (text == "none") return std::nullopt;
  // KxK/S/P
  const auto x = text.find('x');
  const auto parts = Split(text.substr(x == std::string_view::npos ? 0 : x + 1), '/');
  if (x == std::string_view::npos || parts.size() != 3) {
    throw Error(ErrorKind::kConfig,
                "stem_pool '" + std::string(text) + "' is not KxK/S/P or none");
  }
  const int kh = ParseInt(text.substr(0, x), "pool kernel");
  if (kh != ParseInt(parts[0], "pool kernel")) {
    throw Error(ErrorKind::kConfig, "only square pool kernels");
  }
  return PoolSpec{kh, ParseInt(parts[1], "pool stride"),
                  ParseInt(parts[2], "pool pad")};
}

ConnectionMode ParseModeValue(std::string_view text) {
  try {
    return ConnectionMode::Parse(Trim(text));
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
}

void ApplyBlockKey(BlockConfig& blk, std::string_view field, std::string_view value) {
  if (field == "depth") {
    blk.depth = ParseInt(value, "depth");
  } else if (field == "mode") {
    blk.mode = ParseModeValue(value);
  } else if (field == "growth_rate") {
    blk.growth_rate = ParseInt(value, "growth_rate");
  } else if (field == "even_multiplier") {
    blk.even_multiplier = Ratio::Parse(value);
  } else if (field == "transition_reduction") {
    blk.transition_reduction = Ratio::Parse(value);
  } else if (field == "transition_pool") {
    blk.transition_pool = ParseBool(value, "transition_pool");
  } else {
    throw Error(ErrorKind::kConfig, "unknown block key '" + std::string(field) + "'");
  }
}

const std::set<std::string_view>& PerBlockFields() {
  static const std::set<std::string_view> fields = {
      "mode", "growth_rate", "even_multiplier", "transition_reduction",
      "transition_pool"};
  return fields;
}

}  // namespace

ArchConfig ParseArchConfig(std::string_view text) {
  struct Entry {
    int line;
    std::string key;
    std::string value;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  int line_no = 0;
  for (std::string_view rest = text; !rest.empty();) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kConfig,
                  "line " + std::to_string(line_no) + ": expected key = value");
    }
    Entry e{line_no, std::string(Trim(line.substr(0, eq))),
            std::string(Trim(line.substr(eq + 1)))};
    if (e.key.empty()) {
      throw Error(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": empty key");
    }
    if (!seen.emplace(e.key, line_no).second) {
      throw Error(ErrorKind::kConfig, "line " + std::to_string(line_no) +
                                          ": duplicate key '" + e.key + "'");
    }
    entries.push_back(std::move(e));
  }

  // Order of application: base, block layout, global block defaults, then
  // everything else, so a file reads the same regardless of key order.
  auto rank = [](const std::string& key) {
    if (key == "base") return 0;
    if (key == "block_depths" || key == "blocks") return 1;
    if (PerBlockFields().count(key) > 0) return 2;
    return 3;
  };
  std::stable_sort(entries.begin(), entries.end(),
                   [&](const Entry& a, const Entry& b) { return rank(a.key) < rank(b.key); });

  ArchConfig cfg;
  cfg.stem = {{3, 2, 32}, {3, 1, 64}};
  cfg.stem_pool = PoolSpec{3, 2, 1};

  for (const auto& e : entries) {
    const std::string where = "line " + std::to_string(e.line) + ": ";
    try {
      const std::string_view k = e.key;
      const std::string_view v = e.value;
      if (k == "base") {
        cfg = Preset(v);
      } else if (k == "name") {
        cfg.name = e.value;
      } else if (k == "input_resolution") {
        const auto x = v.find('x');
        if (x == std::string_view::npos) {
          cfg.input_height = cfg.input_width = ParseInt(v, "input_resolution");
        } else {
          cfg.input_height = ParseInt(v.substr(0, x), "input height");
          cfg.input_width = ParseInt(v.substr(x + 1), "input width");
        }
      } else if (k == "input_channels") {
        cfg.input_channels = ParseInt(v, "input_channels");
      } else if (k == "stem") {
        cfg.stem.clear();
        if (Trim(v) != "none") {
          for (auto part : Split(v, ',')) cfg.stem.push_back(ParseConvSpec(part));
        }
      } else if (k == "stem_pool") {
        cfg.stem_pool = ParsePoolSpec(v);
      } else if (k == "classifier_classes") {
        cfg.classifier_classes = ParseInt(v, "classifier_classes");
      } else if (k == "layer_unit_order") {
        if (v == "conv-bn-relu") {
          cfg.layer_unit_order = LayerUnitOrder::kConvBnRelu;
        } else if (v == "bn-relu-conv") {
          cfg.layer_unit_order = LayerUnitOrder::kBnReluConv;
        } else {
          throw Error(ErrorKind::kConfig, "layer_unit_order must be conv-bn-relu or bn-relu-conv");
        }
      } else if (k == "bottleneck") {
        cfg.bottleneck = ParseBool(v, "bottleneck");
      } else if (k == "bottleneck_factor") {
        cfg.bottleneck_factor = ParseInt(v, "bottleneck_factor");
      } else if (k == "transition_pool_kind") {
        if (v == "max") {
          cfg.transition_pool_kind = PoolKind::kMax;
        } else if (v == "avg") {
          cfg.transition_pool_kind = PoolKind::kAvg;
        } else {
          throw Error(ErrorKind::kConfig, "transition_pool_kind must be max or avg");
        }
      } else if (k == "reduction_semantics") {
        if (v == "keep") {
          cfg.reduction = ReductionSemantics::kKeepRatio;
        } else if (v == "reduce-by") {
          cfg.reduction = ReductionSemantics::kReduceBy;
        } else {
          throw Error(ErrorKind::kConfig, "reduction_semantics must be keep or reduce-by");
        }
      } else if (k == "block_depths") {
        const auto parts = Split(v, ',');
        const BlockConfig proto = cfg.blocks.empty() ? BlockConfig{} : cfg.blocks.back();
        cfg.blocks.resize(parts.size(), proto);
        for (size_t b = 0; b < parts.size(); ++b) {
          cfg.blocks[b].depth = ParseInt(parts[b], "block depth");
        }
      } else if (k == "blocks") {
        const int n = ParseInt(v, "blocks");
        if (n < 1) throw Error(ErrorKind::kConfig, "blocks must be >= 1");
        const BlockConfig proto = cfg.blocks.empty() ? BlockConfig{} : cfg.blocks.back();
        cfg.blocks.resize(static_cast<size_t>(n), proto);
      } else if (PerBlockFields().count(k) > 0) {
        if (cfg.blocks.empty()) cfg.blocks.resize(1);
        for (auto& blk : cfg.blocks) ApplyBlockKey(blk, k, v);
      } else if (k.substr(0, 6) == "block.") {
        const auto dot = k.find('.', 6);
        if (dot == std::string_view::npos) {
          throw Error(ErrorKind::kConfig, "expected block.N.field");
        }
        const int index = ParseInt(k.substr(6, dot - 6), "block index");
        if (index < 1 || index > static_cast<int>(cfg.blocks.size())) {
          throw Error(ErrorKind::kConfig,
                      "block index " + std::to_string(index) + " out of range (config has " +
                          std::to_string(cfg.blocks.size()) + " blocks)");
        }
        ApplyBlockKey(cfg.blocks[static_cast<size_t>(index - 1)], k.substr(dot + 1), v);
      } else {
        throw Error(ErrorKind::kConfig, "unknown key '" + e.key + "'");
      }
    } catch (const Error& err) {
      throw Error(ErrorKind::kConfig, where + err.what());
    }
  }
  cfg.Validate();
  return cfg;
}

ArchConfig LoadArchConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseArchConfig(buf.str());
}

std::string ArchConfigToText(const ArchConfig& cfg) {
  std::ostringstream out;
  out << "name = " << cfg.name << "\n";
  out << "input_resolution = " << cfg.input_height << "x" << cfg.input_width << "\n";
  out << "input_channels = " << cfg.input_channels << "\n";
  out << "stem = ";
  if (cfg.stem.empty()) out << "none";
  for (size_t s = 0; s < cfg.stem.size(); ++s) {
    const auto& c = cfg.stem[s];
    out << (s ? ", " : "") << c.kernel << "x" << c.kernel << "/" << c.stride << ":"
        << c.out_channels;
  }
  out << "\n";
  out << "stem_pool = ";
  if (cfg.stem_pool) {
    out << cfg.stem_pool->kernel << "x" << cfg.stem_pool->kernel << "/"
        << cfg.stem_pool->stride << "/" << cfg.stem_pool->pad;
  } else {
    out << "none";
  }
  out << "\n";
  out << "classifier_classes = " << cfg.classifier_classes << "\n";
  out << "layer_unit_order = "
      << (cfg.layer_unit_order == LayerUnitOrder::kConvBnRelu ? "conv-bn-relu"
                                                               : "bn-relu-conv")
      << "\n";
  out << "bottleneck = " << (cfg.bottleneck ? "true" : "false") << "\n";
  out << "bottleneck_factor = " << cfg.bottleneck_factor << "\n";
  out << "transition_pool_kind = "
      << (cfg.transition_pool_kind == PoolKind::kMax ? "max" : "avg") << "\n";
  out << "reduction_semantics = "
      << (cfg.reduction == ReductionSemantics::kKeepRatio ? "keep" : "reduce-by")
      << "\n";
  out << "blocks = " << cfg.blocks.size() << "\n";
  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& blk = cfg.blocks[b];
    const std::string p = "block." + std::to_string(b + 1) + ".";
    out << p << "depth = " << blk.depth << "\n";
    out << p << "mode = " << blk.mode.ToString() << "\n";
    out << p << "growth_rate = " << blk.growth_rate << "\n";
    out << p << "even_multiplier = " << blk.even_multiplier.ToString() << "\n";
    out << p << "transition_reduction = " << blk.transition_reduction.ToString() << "\n";
    out << p << "transition_pool = " << (blk.transition_pool ? "true" : "false") << "\n";
  }
  return out.str();
}

}  // namespace threshnet
