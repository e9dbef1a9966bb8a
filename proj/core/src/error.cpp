#include "threshnet/error.hpp"

namespace threshnet {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidLayer: return "invalid-layer";
    case ErrorKind::kEmptyBlock: return "empty-block";
    case ErrorKind::kInvalidMode: return "invalid-mode";
    case ErrorKind::kUnknownPreset: return "unknown-preset";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kGraphValidation: return "graph-validation";
    case ErrorKind::kAccounting: return "accounting";
    case ErrorKind::kExecution: return "execution";
    case ErrorKind::kInvalidLabel: return "invalid-label";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kParse: return "parse";
  }
  return "unknown";
}

namespace {

std::string Decorate(ErrorKind kind, const std::string& message, int node_id) {
  std::string out(ErrorKindName(kind));
  out += " error";
  if (node_id >= 0) out += " at node " + std::to_string(node_id);
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message, int node_id)
    : std::runtime_error(Decorate(kind, message, node_id)),
      kind_(kind),
      node_id_(node_id) {}

}  // namespace threshnet
