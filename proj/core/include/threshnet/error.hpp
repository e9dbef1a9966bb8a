#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace threshnet {

enum class ErrorKind {
  kInvalidLayer,
  kEmptyBlock,
  kInvalidMode,
  kUnknownPreset,
  kConfig,
  kGraphValidation,
  kAccounting,
  kExecution,
  kInvalidLabel,
  kDivergence,
  kIo,
  kParse,
};

std::string_view ErrorKindName(ErrorKind kind);

// Single exception type for all domain failures. `node_id` is set when the
// failure can be attributed to one graph node, -1 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, int node_id = -1);

  ErrorKind kind() const { return kind_; }
  int node_id() const { return node_id_; }

 private:
  ErrorKind kind_;
  int node_id_;
};

}  // namespace threshnet
