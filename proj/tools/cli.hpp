#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "threshnet/golden_tables.hpp"

namespace threshnet::cli {

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct Hooks {
  // Topology generator used by verify-tables.
  TopologyGenerator generator = BuildBlockTopology;
};

// Runs one invocation. `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const Hooks& hooks = {});

// Markdown report of preset costs over even-layer multipliers and both
// transition-reduction readings.
std::string SensitivitySweepMarkdown(int resolution = 224);

}  // namespace threshnet::cli
