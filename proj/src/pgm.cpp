#include "slca/pgm.hpp"

#include <cmath>
#include <fstream>

#include "slca/errors.hpp"
#include "slca/ops.hpp"

namespace slca {

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ShapeError("write_pgm: pixel count mismatch");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_pgm: cannot open " + path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
    if (!f) throw IoError("write_pgm: write failed for " + path);
}

std::vector<std::uint8_t> heatmap_bytes(const Tensor<float>& map, int size) {
    if (map.n() != 1) throw ShapeError("heatmap_bytes: expected a single-image map");
    Tensor<float> mean = Tensor<float>::zeros4(1, 1, map.h(), map.w());
    const int C = map.c();
    const std::size_t plane = static_cast<std::size_t>(map.h()) * map.w();
    for (int c = 0; c < C; ++c) {
        const float* src = map.plane(0, c);
        for (std::size_t i = 0; i < plane; ++i) mean.v[i] += src[i];
    }
    for (auto& e : mean.v) e /= static_cast<float>(C);

    Tensor<float> up = upsample_nearest(mean, size, size);
    float lo = up.v[0], hi = up.v[0];
    for (float e : up.v) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    std::vector<std::uint8_t> out(up.size());
    if (hi <= lo) {
        std::fill(out.begin(), out.end(), 128);
        return out;
    }
    for (std::size_t i = 0; i < up.size(); ++i)
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (up.v[i] - lo) / (hi - lo)));
    return out;
}

}  // namespace slca
