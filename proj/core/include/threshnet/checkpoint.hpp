#pragma once

#include <string>
#include <vector>

#include "threshnet/engine.hpp"

namespace threshnet {

// Binary layout, all integers and floats little-endian:
//   magic "TNCK" | u32 version | u32 node count
//   per node: u32 node id | u64 scalar count | f64 scalars...
// A node's scalars are its trainable parameters followed, for batchnorm, by
// running mean and running variance.
inline constexpr char kCheckpointMagic[4] = {'T', 'N', 'C', 'K'};
inline constexpr unsigned kCheckpointVersion = 1;

std::vector<unsigned char> SaveCheckpointBytes(const ModelInstance& model);
// Throws kIo when the bytes do not describe `model`'s graph.
void LoadCheckpointBytes(ModelInstance& model, const std::vector<unsigned char>& bytes);

void SaveCheckpoint(const ModelInstance& model, const std::string& path);
void LoadCheckpoint(ModelInstance& model, const std::string& path);

}  // namespace threshnet
