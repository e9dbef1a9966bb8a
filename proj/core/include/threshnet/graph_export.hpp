#pragma once

#include <string>

#include "threshnet/network_graph.hpp"

namespace threshnet {

// {"name", "nodes": [{id, name, op, params, inputs, output_shape, block,
// layer}], "edges": [[src, dst], ...], "blocks": [...], "stages": [...]}
std::string GraphToJson(const NetworkGraph& g, int indent = 2);

// Graphviz export. Operators outside blocks get one node each; inside a
// block each layer unit (concat + conv/bn/relu chain) is drawn as a single
// node, alongside an explicit x0 node for the block input, so the edges
// inside a cluster are exactly the block's topology connections. Edges carry
// the channel count of the tensor they move. Output is byte-stable.
std::string GraphToDot(const NetworkGraph& g);

}  // namespace threshnet
