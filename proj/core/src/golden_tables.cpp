#include "threshnet/golden_tables.hpp"

namespace threshnet {

const std::vector<GoldenTable>& GoldenTables() {
  static const std::vector<GoldenTable> tables = [] {
    std::vector<GoldenTable> t;
    t.push_back(GoldenTable{
        "Table I",
        16,
        ConnectionMode::ThresholdAB(4),
        {"0", "0-1", "0-1-2", "0-1-2-3", "4", "4-5", "6", "0-4-6-7", "8",
         "2-6-8-9", "10", "4-8-10-11", "12", "6-10-12-13", "14",
         "0-8-12-14-15"},
        {{6, "printed 4-5; the power-of-two rule that reproduces every other "
             "harmonic row gives 2-4-5"}},
        38});
    t.push_back(GoldenTable{
        "Table II",
        16,
        ConnectionMode::ThresholdBC(8),
        {"0", "0-1", "0-1-2", "0-1-2-3", "0-1-2-3-4", "0-1-2-4-5", "0-1-2-5-6",
         "0-1-2-6-7", "8", "2-6-8-9", "10", "4-8-10-11", "12", "6-10-12-13",
         "14", "0-8-12-14-15"},
        {},
        51});
    t.push_back(GoldenTable{
        "Table III",
        16,
        ConnectionMode::ThresholdBC(12),
        {"0", "0-1", "0-1-2", "0-1-2-3", "0-1-2-3-4", "0-1-2-3-4-5",
         "0-1-2-3-4-5-6", "0-1-2-3-5-6-7", "0-1-2-3-6-7-8", "0-1-2-3-7-8-9",
         "0-1-2-3-8-9-10", "0-1-2-3-9-10-11", "12", "6-10-12-13", "14",
         "0-8-12-14-15"},
        {},
        74});
    return t;
  }();
  return tables;
}

std::string TableVerification::Summary() const {
  std::string out = name + ": " + std::to_string(matched) + "/" +
                    std::to_string(rows.size()) + " rows match";
  if (documented > 0) {
    out += ", " + std::to_string(documented) + " documented deviation";
    if (documented > 1) out += "s";
    out += " (";
    bool first = true;
    for (const auto& r : rows) {
      if (!r.documented) continue;
      if (!first) out += ", ";
      out += "n=" + std::to_string(r.layer);
      first = false;
    }
    out += ")";
  }
  if (unexpected > 0) {
    out += ", " + std::to_string(unexpected) + " unexpected mismatch";
    if (unexpected > 1) out += "es";
  }
  return out;
}

TableVerification VerifyGoldenTable(const GoldenTable& table,
                                    const TopologyGenerator& generate) {
  TableVerification v;
  v.name = table.name;
  v.claimed_total = table.claimed_total;
  const BlockTopology topo = generate(table.layers, table.mode);
  const auto generated = TopologyToTable(topo);
  v.generated_total = ConnectionCount(topo);
  for (size_t k = 0; k < table.rows.size(); ++k) {
    RowResult r;
    r.layer = static_cast<int>(k + 1);
    r.expected = table.rows[k];
    r.generated = k < generated.size() ? generated[k] : std::string();
    r.match = r.expected == r.generated;
    v.printed_total += static_cast<long long>(ParseInputs(r.expected).size());
    if (r.match) {
      ++v.matched;
    } else if (table.documented_deviations.count(r.layer) > 0) {
      r.documented = true;
      ++v.documented;
    } else {
      ++v.unexpected;
    }
    v.rows.push_back(std::move(r));
  }
  return v;
}

}  // namespace threshnet
