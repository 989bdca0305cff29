#pragma once

#include <string>
#include <utility>
#include <vector>

#include "svb/network.hpp"
#include "svb/optim.hpp"

namespace svb {

// Checkpoint layout, version 1, all integers little-endian:
//   magic "SVBC", u32 version, then tensor records until EOF.
//   record = u32 name length, name bytes, u32 ndim, u32 dims[ndim],
//            f64 payload (little-endian), length = product of dims.
// Layer structure is encoded in the record names (L03.conv.geom carries
// stride/pad, L05.relu.mark marks a parameterless layer), so the byte format
// stays pure named tensors. Round trips are bitwise lossless.

void save_checkpoint(const std::string& path, const Network& net, const OptState& opt);
std::pair<Network, OptState> load_checkpoint(const std::string& path);

/// Ordered (name, matrix) view of every spectrally bounded weight in a
/// checkpoint, for spectrum reporting.
std::vector<std::pair<std::string, Tensor>> checkpoint_weight_matrices(const std::string& path);

}  // namespace svb
