#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slca/layers.hpp"

namespace slca {

// Checkpoint format, little-endian:
//   magic "SLCACP01" (8 bytes)
//   u32 tensor count
//   per tensor: u32 name length, UTF-8 name, u8 dtype (0=f32, 1=f64),
//               u8 rank, u32 dims[rank]
//   payload: raw tensor bytes in manifest order
//   trailing u64: FNV-1a over the payload bytes
constexpr char kCheckpointMagic[8] = {'S', 'L', 'C', 'A', 'C', 'P', '0', '1'};

void save_checkpoint(const std::vector<Param<float>*>& params, const std::string& path);

// Loads into an already-assembled parameter set: every name in the file must
// match a parameter with the same shape, and every parameter must be
// present. Validates the checksum before touching any tensor.
void load_checkpoint(const std::string& path, const std::vector<Param<float>*>& params);

}  // namespace slca
