#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slca/tensor.hpp"

namespace slca {

// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels);

// Channel-mean of a [1, C, h, w] map, nearest-upsampled to size x size and
// min-max normalized to u8. A constant map has no range; it renders as
// mid-gray 128.
std::vector<std::uint8_t> heatmap_bytes(const Tensor<float>& map, int size);

}  // namespace slca
