#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "threshnet/arch_config.hpp"
#include "threshnet/checkpoint.hpp"
#include "threshnet/cost_model.hpp"
#include "threshnet/error.hpp"
#include "threshnet/graph_export.hpp"
#include "threshnet/network_graph.hpp"
#include "threshnet/topology.hpp"
#include "threshnet/training.hpp"

namespace threshnet::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Published {
  std::string_view preset;
  double params;
  double madds;
  double flops;
};

constexpr Published kPublished[] = {
    {"densenet121", 7.97e6, 2.88e9, 2.88e9},
    {"thresholdnet_v1", 15.32e6, 6.90e9, 3.46e9},
    {"thresholdnet_v2", 17.14e6, 8.12e9, 4.07e9},
};

const Published* FindPublished(std::string_view preset) {
  for (const auto& p : kPublished) {
    if (p.preset == preset) return &p;
  }
  return nullptr;
}

std::string FormatPublished(double v) {
  char buf[32];
  if (v >= 1e9) {
    std::snprintf(buf, sizeof(buf), "%.2fG", v / 1e9);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2fM", v / 1e6);
  }
  return buf;
}

std::string Pad(std::string s, size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

struct ModelSource {
  std::string preset;
  std::string config;
  std::optional<int> resolution;
};

void AddModelSource(CLI::App* cmd, ModelSource& src) {
  auto* p = cmd->add_option("--preset", src.preset,
                            "densenet121 | thresholdnet_v1 | thresholdnet_v2");
  auto* c = cmd->add_option("--config", src.config, "Flat key-value architecture file");
  p->excludes(c);
  cmd->add_option("--resolution", src.resolution, "Square input resolution")
      ->check(CLI::PositiveNumber);
}

ArchConfig ResolveConfig(const ModelSource& src) {
  if (src.preset.empty() && src.config.empty()) {
    throw UsageError("one of --preset or --config is required");
  }
  ArchConfig cfg = src.preset.empty() ? LoadArchConfig(src.config) : Preset(src.preset);
  if (src.resolution) {
    cfg.input_height = *src.resolution;
    cfg.input_width = *src.resolution;
  }
  return cfg;
}

// A compare operand is a preset name or, failing that, a config file path.
ArchConfig ResolveOperand(const std::string& name, std::optional<int> resolution) {
  ArchConfig cfg;
  if (ParsePresetName(name) || !std::ifstream(name)) {
    cfg = Preset(name);
  } else {
    cfg = LoadArchConfig(name);
  }
  if (resolution) {
    cfg.input_height = *resolution;
    cfg.input_width = *resolution;
  }
  return cfg;
}

std::uint64_t DefaultSeed() {
  const char* env = std::getenv("THRESHNET_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || *env == '-') throw UsageError("THRESHNET_SEED must be a non-negative integer");
  return v;
}

void WriteOutput(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error(ErrorKind::kIo, "write to '" + path + "' failed");
}

// topology ------------------------------------------------------------------

struct TopologyArgs {
  int layers = 0;
  std::string mode;
  std::optional<int> threshold;
  std::string format = "table";
};

int RunTopology(const TopologyArgs& a, std::ostream& out) {
  const bool needs_param = a.mode == "sparse" || a.mode == "threshold-ab" ||
                           a.mode == "threshold-bc";
  if (needs_param && !a.threshold) {
    throw UsageError("--threshold is required for mode " + a.mode);
  }
  if (!needs_param && a.threshold) {
    throw UsageError("--threshold does not apply to mode " + a.mode);
  }
  const std::string spec = needs_param ? a.mode + ":" + std::to_string(*a.threshold) : a.mode;
  const ConnectionMode mode = ConnectionMode::Parse(spec);
  const BlockTopology topo = BuildBlockTopology(a.layers, mode);
  if (a.format == "json") {
    out << TopologyToJson(topo, 2) << "\n";
  } else if (a.format == "dot") {
    out << TopologyToDot(topo, mode.ToString());
  } else {
    const auto rows = TopologyToTable(topo);
    out << "Layer  Input layers\n";
    for (size_t i = 0; i < rows.size(); ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%5zu  ", i + 1);
      out << buf << rows[i] << "\n";
    }
    out << "connections: " << ConnectionCount(topo) << "\n";
  }
  return kExitOk;
}

// verify-tables -------------------------------------------------------------

int RunVerifyTables(const Hooks& hooks, std::ostream& out, std::ostream& err) {
  bool ok = true;
  for (const auto& table : GoldenTables()) {
    const TableVerification v = VerifyGoldenTable(table, hooks.generator);
    out << table.name << " (" << table.mode.ToString() << ", L=" << table.layers << ")\n";
    out << "    n  " << Pad("printed", 30) << Pad("generated", 30) << "status\n";
    for (const auto& r : v.rows) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%5d  ", r.layer);
      std::string status = r.match ? "ok" : (r.documented ? "documented deviation" : "MISMATCH");
      out << buf << Pad(r.expected, 30) << Pad(r.generated, 30) << status << "\n";
    }
    out << v.Summary() << "\n";
    out << "  connections: printed " << v.printed_total << ", generated "
        << v.generated_total;
    if (v.claimed_total >= 0) {
      out << ", stated " << v.claimed_total;
      if (v.claimed_total != v.printed_total || v.claimed_total != v.generated_total) {
        out << " (logged discrepancy)";
      }
    }
    out << "\n";
    for (const auto& [layer, reason] : table.documented_deviations) {
      out << "  deviation n=" << layer << ": " << reason << "\n";
    }
    out << "\n";
    if (!v.ok()) {
      ok = false;
      for (const auto& r : v.rows) {
        if (!r.match && !r.documented) {
          err << "first failing row: " << table.name << " n=" << r.layer << ": printed '"
              << r.expected << "', generated '" << r.generated << "'\n";
          break;
        }
      }
    }
  }
  return ok ? kExitOk : kExitFailure;
}

// build / summarize ---------------------------------------------------------

NetworkGraph BuildChecked(const ArchConfig& cfg) { return BuildNetwork(cfg); }

int RunBuild(const ModelSource& src, bool json, std::ostream& out) {
  const NetworkGraph g = BuildChecked(ResolveConfig(src));
  if (json) {
    out << GraphToJson(g, 2) << "\n";
    return kExitOk;
  }
  out << g.name() << ": " << g.size() << " nodes, " << WeightedLayerCount(g)
      << " weighted layers\n";
  out << Pad("stage", 22) << Pad("output size", 14) << "shape\n";
  for (const auto& s : g.stages()) {
    const std::string size = std::to_string(s.shape.height) + "x" + std::to_string(s.shape.width);
    out << Pad(s.name, 22) << Pad(size, 14) << ShapeToString(s.shape) << "\n";
  }
  for (const auto& b : g.blocks()) {
    out << "block" << b.index << ": " << b.topology.layer_count() << " layers, "
        << b.mode.ToString() << ", " << ConnectionCount(b.topology) << " connections\n";
  }
  return kExitOk;
}

nlohmann::json BlockDepths(const NetworkGraph& g) {
  nlohmann::json depths = nlohmann::json::array();
  for (const auto& b : g.blocks()) depths.push_back(b.topology.layer_count());
  return depths;
}

int RunSummarize(const ModelSource& src, bool json, bool csv, int element_bytes,
                 std::ostream& out) {
  if (json && csv) throw UsageError("--json and --csv are mutually exclusive");
  const NetworkGraph g = BuildChecked(ResolveConfig(src));
  const CostReport r = Summarize(g);
  if (json) {
    nlohmann::json j = nlohmann::json::parse(CostReportToJson(r, -1));
    j["block_depths"] = BlockDepths(g);
    j["input"] = ShapeToString(g.node(0).output_shape);
    j["traffic_bytes"] = r.totals.traffic_elements * element_bytes;
    out << j.dump(2) << "\n";
  } else if (csv) {
    out << CostReportToCsv(r);
  } else {
    std::string depths;
    for (const auto& b : g.blocks()) {
      if (!depths.empty()) depths += ", ";
      depths += std::to_string(b.topology.layer_count());
    }
    out << g.name() << " (" << ShapeToString(g.node(0).output_shape) << ")\n";
    out << "Block_Depth " << depths << "\n";
    out << CostReportToText(r, element_bytes);
  }
  return kExitOk;
}

// compare -------------------------------------------------------------------

void PrintPublished(const std::string& preset, const CostReport& r, std::ostream& out) {
  const Published* p = FindPublished(preset);
  if (p == nullptr) return;
  auto rel = [](double computed, double published) {
    return FormatPercent((computed - published) / published);
  };
  out << "published " << preset << ": #Params " << FormatPublished(p->params) << "  #MAdds "
      << FormatPublished(p->madds) << "  #FLOPS " << FormatPublished(p->flops) << "\n";
  out << "  computed #Params " << FormatCount(r.totals.params) << " ("
      << rel(static_cast<double>(r.totals.params), p->params) << ")  #MAdds "
      << FormatCount(r.totals.macs) << " ("
      << rel(static_cast<double>(r.totals.macs), p->madds) << ")  #FLOPs "
      << FormatCount(r.totals.flops) << " ("
      << rel(static_cast<double>(r.totals.flops), p->flops) << " vs #FLOPS, "
      << rel(static_cast<double>(r.totals.macs), p->flops) << " as MACs)\n";
}

int RunCompare(const std::vector<std::string>& operands, std::optional<int> resolution,
               bool json, std::ostream& out) {
  if (operands.size() != 2) throw UsageError("compare takes exactly two presets or configs");
  const ArchConfig ca = ResolveOperand(operands[0], resolution);
  const ArchConfig cb = ResolveOperand(operands[1], resolution);
  const CostReport ra = Summarize(BuildChecked(ca));
  const CostReport rb = Summarize(BuildChecked(cb));
  const auto deltas = CompareReports(ra, rb);
  if (json) {
    nlohmann::json j;
    j["a"] = ra.name;
    j["b"] = rb.name;
    j["metrics"] = nlohmann::json::array();
    for (const auto& d : deltas) {
      j["metrics"].push_back({{"metric", d.metric},
                              {"a", d.a},
                              {"b", d.b},
                              {"delta", d.delta},
                              {"relative", std::isfinite(d.relative)
                                               ? nlohmann::json(d.relative)
                                               : nlohmann::json(nullptr)}});
    }
    nlohmann::json pub = nlohmann::json::object();
    for (const auto& name : operands) {
      if (const Published* p = FindPublished(name)) {
        pub[name] = {{"params", p->params}, {"madds", p->madds}, {"flops", p->flops}};
      }
    }
    j["published"] = std::move(pub);
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  const size_t w = std::max<size_t>({ra.name.size(), rb.name.size(), 12}) + 2;
  out << Pad("metric", 10) << Pad(ra.name, w) << Pad(rb.name, w) << Pad("delta", 12)
      << "relative\n";
  for (const auto& d : deltas) {
    out << Pad(d.metric, 10) << Pad(FormatCount(d.a), w) << Pad(FormatCount(d.b), w)
        << Pad(FormatCount(d.delta), 12) << FormatPercent(d.relative) << "\n";
  }
  PrintPublished(operands[0], ra, out);
  if (operands[1] != operands[0]) PrintPublished(operands[1], rb, out);
  return kExitOk;
}

// train-toy / gradcheck -----------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  int steps = 200;
  double lr = 0.05;
  int samples = 8;
  std::string output;
  std::string checkpoint;
};

int RunTrainToy(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = a.seed ? *a.seed : DefaultSeed();
  const ArchConfig cfg = a.config.empty() ? ToyConfig() : LoadArchConfig(a.config);
  const NetworkGraph g = BuildChecked(cfg);
  ModelInstance model(g, seed);
  const Dataset data =
      MakeSyntheticDataset(a.samples, cfg.classifier_classes, g.node(0).output_shape, seed);
  std::vector<double> trace;
  try {
    trace = TrainToy(model, data, a.steps, a.lr);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kDivergence) {
      err << e.what() << "\n";
      return kExitFailure;
    }
    throw;
  }
  WriteOutput(a.output, LossTraceToCsv(trace), out);
  if (!a.checkpoint.empty()) SaveCheckpoint(model, a.checkpoint);
  if (!trace.empty()) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "final loss %.6g after %zu steps\n", trace.back(),
                  trace.size());
    err << buf;
  }
  return kExitOk;
}

struct GradCheckArgs {
  std::string graph = "all-ops";
  std::string config;
  double tol = 1e-4;
  double epsilon = 1e-5;
  int batch = 2;
  std::optional<std::uint64_t> seed;
};

int RunGradCheck(const GradCheckArgs& a, std::ostream& out) {
  GradCheckOptions opt;
  opt.tolerance = a.tol;
  opt.epsilon = a.epsilon;
  opt.batch = a.batch;
  opt.seed = a.seed ? *a.seed : DefaultSeed();
  NetworkGraph g;
  if (!a.config.empty()) {
    g = BuildChecked(LoadArchConfig(a.config));
  } else if (a.graph == "toy") {
    g = BuildChecked(ToyConfig());
  } else {
    g = MicroGraph(a.graph);
  }
  const GradCheckReport r = GradCheck(g, opt);
  out << g.name() << "\n" << r.ToText();
  return r.passed ? kExitOk : kExitFailure;
}

}  // namespace

std::string SensitivitySweepMarkdown(int resolution) {
  std::ostringstream md;
  md << "# Cost sensitivity of the ThresholdNet presets\n\n";
  md << "Generated by `threshnet compare --sweep` at " << resolution << "x" << resolution
     << " input.\n\n"
     << "- m: even-layer width multiplier, applied to every block.\n"
     << "- keep: the transition ratio is the fraction of channels kept.\n"
     << "- reduce-by: the transition ratio is the fraction removed.\n"
     << "- FLOPs are 2 x MACs.\n"
     << "- Deltas compare against the published #MAdds column, and MACs against the\n"
     << "  published #FLOPS column.\n\n";
  md << "| preset | m | reduction | #Params | #MAdds | #FLOPs | Traffic | Params vs published "
        "| MAdds vs published | MACs vs published #FLOPS |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|\n";
  const Ratio multipliers[] = {Ratio(1, 1), Ratio(8, 5), Ratio(17, 10), Ratio(19, 10)};
  for (PresetName preset : {PresetName::kThresholdNetV1, PresetName::kThresholdNetV2}) {
    const Published* pub = FindPublished(PresetNameString(preset));
    for (const Ratio& m : multipliers) {
      for (ReductionSemantics sem :
           {ReductionSemantics::kKeepRatio, ReductionSemantics::kReduceBy}) {
        ArchConfig cfg = Preset(preset);
        cfg.input_height = resolution;
        cfg.input_width = resolution;
        cfg.reduction = sem;
        for (auto& b : cfg.blocks) b.even_multiplier = m;
        const CostReport r = Summarize(BuildNetwork(cfg));
        auto rel = [](std::int64_t computed, double published) {
          return FormatPercent((static_cast<double>(computed) - published) / published);
        };
        md << "| " << PresetNameString(preset) << " | " << m.ToString() << " | "
           << (sem == ReductionSemantics::kKeepRatio ? "keep" : "reduce-by") << " | "
           << FormatCount(r.totals.params) << " | " << FormatCount(r.totals.macs) << " | "
           << FormatCount(r.totals.flops) << " | " << FormatCount(r.totals.traffic_elements)
           << " | " << rel(r.totals.params, pub->params) << " | "
           << rel(r.totals.macs, pub->madds) << " | " << rel(r.totals.macs, pub->flops)
           << " |\n";
      }
    }
  }
  md << "\nPublished: thresholdnet_v1 15.32M / 6.90G / 3.46G, thresholdnet_v2 17.14M / "
        "8.12G / 4.07G (#Params / #MAdds / #FLOPS).\n";
  return md.str();
}

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const Hooks& hooks) {
  CLI::App app{"Threshold-pruned dense network topologies, graphs and costs", "threshnet"};
  app.require_subcommand(1, 1);

  TopologyArgs topo;
  auto* topology = app.add_subcommand("topology", "Print the connection table of one block");
  topology->add_option("--layers", topo.layers, "Layers in the block")
      ->required()
      ->check(CLI::Range(1, 4096));
  topology->add_option("--mode", topo.mode, "Connection rule")
      ->required()
      ->check(CLI::IsMember({"dense", "sparse", "harmonic", "threshold-ab", "threshold-bc"}));
  topology->add_option("--threshold", topo.threshold,
                       "Threshold for threshold modes, window parameter for sparse");
  topology->add_option("--format", topo.format, "table | json | dot")
      ->check(CLI::IsMember({"table", "json", "dot"}));

  auto* verify = app.add_subcommand("verify-tables", "Check the embedded connection tables");

  ModelSource build_src;
  bool build_json = false;
  auto* build = app.add_subcommand("build", "Build a network graph and print its stages");
  AddModelSource(build, build_src);
  build->add_flag("--json", build_json, "Emit the full graph as JSON");

  ModelSource sum_src;
  bool sum_json = false;
  bool sum_csv = false;
  int element_bytes = 4;
  auto* summarize = app.add_subcommand("summarize", "Parameter, MAC and traffic totals");
  AddModelSource(summarize, sum_src);
  summarize->add_flag("--json", sum_json, "Machine-readable report");
  summarize->add_flag("--csv", sum_csv, "One CSV row per node");
  summarize->add_option("--element-bytes", element_bytes, "Bytes per traffic element")
      ->check(CLI::Range(1, 16));

  std::vector<std::string> cmp_operands;
  std::optional<int> cmp_resolution;
  bool cmp_json = false;
  bool cmp_sweep = false;
  std::string cmp_output;
  auto* compare = app.add_subcommand("compare", "Side-by-side costs of two models");
  compare->add_option("models", cmp_operands, "Two preset names or config paths");
  compare->add_option("--resolution", cmp_resolution, "Square input resolution")
      ->check(CLI::PositiveNumber);
  compare->add_flag("--json", cmp_json, "Machine-readable comparison");
  compare->add_flag("--sweep", cmp_sweep,
                    "Sensitivity sweep of the ThresholdNet presets as Markdown");
  compare->add_option("--output", cmp_output, "Write the sweep to a file");

  ModelSource dot_src;
  std::string dot_output;
  auto* export_dot = app.add_subcommand("export-dot", "Write a Graphviz rendering");
  AddModelSource(export_dot, dot_src);
  export_dot->add_option("--output,-o", dot_output, "Output path (stdout when omitted)");

  TrainArgs train;
  auto* train_toy = app.add_subcommand("train-toy", "Overfit a tiny network with SGD");
  train_toy->add_option("--config", train.config, "Architecture file (default: toy net)");
  train_toy->add_option("--seed", train.seed, "Seed (default: THRESHNET_SEED or 0)");
  train_toy->add_option("--steps", train.steps, "SGD steps")->check(CLI::NonNegativeNumber);
  train_toy->add_option("--lr", train.lr, "Learning rate")->check(CLI::NonNegativeNumber);
  train_toy->add_option("--samples", train.samples, "Synthetic samples")
      ->check(CLI::Range(1, kMaxToySamples));
  train_toy->add_option("--output", train.output, "CSV trace path (stdout when omitted)");
  train_toy->add_option("--checkpoint", train.checkpoint, "Save trained weights here");

  GradCheckArgs gc;
  std::vector<std::string> graph_names = MicroGraphNames();
  graph_names.push_back("toy");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  auto* gc_graph = gradcheck->add_option("--graph", gc.graph, "Micro-graph name or toy")
                       ->check(CLI::IsMember(graph_names));
  gradcheck->add_option("--config", gc.config, "Architecture file")->excludes(gc_graph);
  gradcheck->add_option("--tol", gc.tol, "Relative tolerance")->check(CLI::PositiveNumber);
  gradcheck->add_option("--epsilon", gc.epsilon, "Central-difference step")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--batch", gc.batch, "Batch size")->check(CLI::Range(1, 64));
  gradcheck->add_option("--seed", gc.seed, "Seed (default: THRESHNET_SEED or 0)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*topology) return RunTopology(topo, out);
    if (*verify) return RunVerifyTables(hooks, out, err);
    if (*build) return RunBuild(build_src, build_json, out);
    if (*summarize) return RunSummarize(sum_src, sum_json, sum_csv, element_bytes, out);
    if (*compare) {
      if (cmp_sweep) {
        if (!cmp_operands.empty()) throw UsageError("--sweep takes no model arguments");
        WriteOutput(cmp_output, SensitivitySweepMarkdown(cmp_resolution.value_or(224)), out);
        return kExitOk;
      }
      if (!cmp_output.empty()) throw UsageError("--output applies to --sweep only");
      return RunCompare(cmp_operands, cmp_resolution, cmp_json, out);
    }
    if (*export_dot) {
      WriteOutput(dot_output, GraphToDot(BuildChecked(ResolveConfig(dot_src))), out);
      return kExitOk;
    }
    if (*train_toy) return RunTrainToy(train, out, err);
    if (*gradcheck) return RunGradCheck(gc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace threshnet::cli
