#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "threshnet/topology.hpp"

namespace threshnet {

// A printed connection table for a 16-layer block, embedded verbatim.
struct GoldenTable {
  std::string name;  // "Table I"
  int layers = 0;
  ConnectionMode mode;
  std::vector<std::string> rows;  // rows[0] is layer 1
  // Rows that are known to disagree with the generator, keyed by layer,
  // with the reason.
  std::map<int, std::string> documented_deviations;
  // Connection total quoted in the accompanying text, when one exists.
  long long claimed_total = -1;
};

const std::vector<GoldenTable>& GoldenTables();

struct RowResult {
  int layer = 0;
  std::string expected;
  std::string generated;
  bool match = false;
  bool documented = false;
};

struct TableVerification {
  std::string name;
  std::vector<RowResult> rows;
  int matched = 0;
  int documented = 0;
  int unexpected = 0;
  long long printed_total = 0;
  long long generated_total = 0;
  long long claimed_total = -1;

  bool ok() const { return unexpected == 0; }
  // "Table II: 16/16 rows match" or
  // "Table I: 15/16 rows match, 1 documented deviation (n=6)".
  std::string Summary() const;
};

using TopologyGenerator =
    std::function<BlockTopology(int layers, const ConnectionMode& mode)>;

TableVerification VerifyGoldenTable(
    const GoldenTable& table,
    const TopologyGenerator& generate = BuildBlockTopology);

}  // namespace threshnet
