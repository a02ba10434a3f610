#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slca/tensor.hpp"

namespace slca {

// Binary dataset format, little-endian throughout:
//   magic "SLCADS01" (8 bytes)
//   u32 image_size, u32 channels (=3), u32 num_classes, u32 num_samples
//   u64 seed
//   per sample: u8 pixels [channels, S, S] row-major, then u8 label
constexpr char kDatasetMagic[8] = {'S', 'L', 'C', 'A', 'D', 'S', '0', '1'};
constexpr std::size_t kDatasetHeaderBytes = 32;

struct Dataset {
    std::uint32_t image_size = 0;
    std::uint32_t channels = 3;
    std::uint32_t num_classes = 0;
    std::uint32_t num_samples = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> pixels;  // num_samples * channels * S * S
    std::vector<std::uint8_t> labels;  // num_samples

    std::size_t sample_bytes() const {
        return static_cast<std::size_t>(channels) * image_size * image_size;
    }
    const std::uint8_t* sample(int i) const { return pixels.data() + sample_bytes() * i; }
    std::uint64_t content_digest() const;
};

// Generation-time shape description, exposed for the label-decodability
// oracle in tests.
struct SampleMeta {
    int label;
    int cx, cy;
    int radius;
    int intensity;
};

// Class shapes: 0 filled disk, 1 filled square, 2 annulus, 3 cross. Returns
// the S*S foreground mask for one shape instance.
std::vector<std::uint8_t> shape_mask(int label, int image_size, int cx, int cy, int radius);

// Deterministic synthetic dataset: per-pixel background noise in [0, 60],
// one shape per image filled at an intensity in [140, 255], center in the
// central 50% of the frame, radius in [S/8, S/4]. Classes exactly balanced;
// labels cycle 0..num_classes-1.
Dataset generate_dataset(int num_samples, int image_size, int num_classes, std::uint64_t seed,
                         std::vector<SampleMeta>* meta_out = nullptr);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Seeded stratified subset with largest-remainder apportionment. The shuffle
// inside each class does not depend on p, so smaller fractions are prefixes
// of larger ones (nested subsets). p = 1 returns all indices in original
// order. Returned indices are sorted ascending for p < 1.
std::vector<int> stratified_fraction(const Dataset& ds, double p, std::uint64_t seed);

// Pixels to [-1, 1] activations: (x/255 - 0.5)/0.5.
Tensor<float> to_feature_map(const Dataset& ds, const std::vector<int>& indices);

// Single sample into a [1, C, S, S] map.
Tensor<float> to_feature_map_one(const Dataset& ds, int index);

}  // namespace slca
