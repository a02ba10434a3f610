#include "slca/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "slca/digest.hpp"
#include "slca/errors.hpp"
#include "slca/rng.hpp"

namespace slca {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

std::uint64_t Dataset::content_digest() const {
    std::uint64_t h = fnv1a_init();
    std::uint32_t hdr[4] = {image_size, channels, num_classes, num_samples};
    h = fnv1a_update(h, hdr, sizeof(hdr));
    h = fnv1a_update(h, &seed, sizeof(seed));
    h = fnv1a_update(h, pixels.data(), pixels.size());
    h = fnv1a_update(h, labels.data(), labels.size());
    return h;
}

std::vector<std::uint8_t> shape_mask(int label, int image_size, int cx, int cy, int radius) {
    const int S = image_size;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(S) * S, 0);
    const int r2 = radius * radius;
    const int inner = radius / 2;
    const int bar = radius / 3;
    for (int y = std::max(0, cy - radius); y <= std::min(S - 1, cy + radius); ++y) {
        for (int x = std::max(0, cx - radius); x <= std::min(S - 1, cx + radius); ++x) {
            const int dx = x - cx, dy = y - cy;
            bool on = false;
            switch (label) {
                case 0:
                    on = dx * dx + dy * dy <= r2;
                    break;
                case 1:
                    on = std::abs(dx) <= radius && std::abs(dy) <= radius;
                    break;
                case 2: {
                    const int d2 = dx * dx + dy * dy;
                    on = d2 <= r2 && d2 >= inner * inner;
                    break;
                }
                case 3:
                    on = (std::abs(dx) <= bar && std::abs(dy) <= radius) ||
                         (std::abs(dy) <= bar && std::abs(dx) <= radius);
                    break;
                default:
                    break;
            }
            if (on) mask[static_cast<std::size_t>(y) * S + x] = 1;
        }
    }
    return mask;
}

Dataset generate_dataset(int num_samples, int image_size, int num_classes, std::uint64_t seed,
                         std::vector<SampleMeta>* meta_out) {
    if (num_samples < 1 || image_size < 8) throw ShapeError("generate_dataset: bad sizes");
    if (num_classes < 1 || num_classes > 4)
        throw ShapeError("generate_dataset: num_classes must be in [1, 4]");
    if (num_samples % num_classes != 0)
        throw ShapeError("generate_dataset: num_samples (" + std::to_string(num_samples) +
                         ") not divisible by num_classes (" + std::to_string(num_classes) + ")");

    Dataset ds;
    ds.image_size = static_cast<std::uint32_t>(image_size);
    ds.channels = 3;
    ds.num_classes = static_cast<std::uint32_t>(num_classes);
    ds.num_samples = static_cast<std::uint32_t>(num_samples);
    ds.seed = seed;
    ds.pixels.resize(ds.sample_bytes() * static_cast<std::size_t>(num_samples));
    ds.labels.resize(num_samples);
    if (meta_out) meta_out->clear();

    const int S = image_size;
    Rng rng(seed);
    for (int i = 0; i < num_samples; ++i) {
        const int label = i % num_classes;
        ds.labels[i] = static_cast<std::uint8_t>(label);
        std::uint8_t* px = ds.pixels.data() + ds.sample_bytes() * i;
        for (std::size_t j = 0; j < ds.sample_bytes(); ++j)
            px[j] = static_cast<std::uint8_t>(rng.uniform_int(61));
        const int cx = S / 4 + static_cast<int>(rng.uniform_int(S / 2 + 1));
        const int cy = S / 4 + static_cast<int>(rng.uniform_int(S / 2 + 1));
        const int radius = S / 8 + static_cast<int>(rng.uniform_int(S / 4 - S / 8 + 1));
        const int intensity = 140 + static_cast<int>(rng.uniform_int(116));
        const std::vector<std::uint8_t> mask = shape_mask(label, S, cx, cy, radius);
        for (int c = 0; c < 3; ++c) {
            std::uint8_t* plane = px + static_cast<std::size_t>(c) * S * S;
            for (int p = 0; p < S * S; ++p)
                if (mask[p]) plane[p] = static_cast<std::uint8_t>(intensity);
        }
        if (meta_out) meta_out->push_back({label, cx, cy, radius, intensity});
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::string out;
    out.reserve(kDatasetHeaderBytes + ds.pixels.size() + ds.labels.size());
    out.append(kDatasetMagic, sizeof(kDatasetMagic));
    put_u32(out, ds.image_size);
    put_u32(out, ds.channels);
    put_u32(out, ds.num_classes);
    put_u32(out, ds.num_samples);
    put_u64(out, ds.seed);
    const std::size_t sb = ds.sample_bytes();
    for (std::uint32_t i = 0; i < ds.num_samples; ++i) {
        out.append(reinterpret_cast<const char*>(ds.pixels.data() + sb * i), sb);
        out.push_back(static_cast<char>(ds.labels[i]));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save_dataset: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_dataset: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < kDatasetHeaderBytes) throw FormatError("load_dataset: truncated header");
    if (std::memcmp(bytes.data(), kDatasetMagic, sizeof(kDatasetMagic)) != 0)
        throw FormatError("load_dataset: bad magic");
    Dataset ds;
    ds.image_size = get_u32(bytes.data() + 8);
    ds.channels = get_u32(bytes.data() + 12);
    ds.num_classes = get_u32(bytes.data() + 16);
    ds.num_samples = get_u32(bytes.data() + 20);
    ds.seed = get_u64(bytes.data() + 24);
    if (ds.image_size < 1 || ds.channels != 3 || ds.num_classes < 1 || ds.num_samples < 1)
        throw FormatError("load_dataset: invalid header fields");
    const std::size_t sb = ds.sample_bytes();
    const std::size_t expect = kDatasetHeaderBytes + ds.num_samples * (sb + 1);
    if (bytes.size() != expect)
        throw FormatError("load_dataset: size mismatch, expected " + std::to_string(expect) +
                          " bytes, got " + std::to_string(bytes.size()));
    ds.pixels.resize(sb * ds.num_samples);
    ds.labels.resize(ds.num_samples);
    const unsigned char* p = bytes.data() + kDatasetHeaderBytes;
    for (std::uint32_t i = 0; i < ds.num_samples; ++i) {
        std::memcpy(ds.pixels.data() + sb * i, p, sb);
        p += sb;
        ds.labels[i] = *p++;
        if (ds.labels[i] >= ds.num_classes) throw FormatError("load_dataset: label out of range");
    }
    return ds;
}

std::vector<int> stratified_fraction(const Dataset& ds, double p, std::uint64_t seed) {
    if (!(p > 0.0) || p > 1.0) throw ShapeError("stratified_fraction: p must be in (0, 1]");
    const int N = static_cast<int>(ds.num_samples);
    if (p == 1.0) {
        std::vector<int> all(N);
        for (int i = 0; i < N; ++i) all[i] = i;
        return all;
    }
    const int K = static_cast<int>(ds.num_classes);
    std::vector<std::vector<int>> per_class(K);
    for (int i = 0; i < N; ++i) per_class[ds.labels[i]].push_back(i);

    // Shuffle each class once with a p-independent seed; prefixes give the
    // nested-subset property across fractions.
    for (int c = 0; c < K; ++c) {
        Rng rng(derive_seed(seed, "stratified_class_" + std::to_string(c)));
        auto& idx = per_class[c];
        for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
    }

    const long long total = std::llround(p * N);
    std::vector<int> take(K);
    std::vector<double> rem(K);
    long long assigned = 0;
    for (int c = 0; c < K; ++c) {
        const double quota = p * static_cast<double>(per_class[c].size());
        take[c] = static_cast<int>(quota);
        rem[c] = quota - take[c];
        assigned += take[c];
    }
    std::vector<int> order(K);
    for (int c = 0; c < K; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (int i = 0; assigned < total && i < K; ++i, ++assigned) take[order[i]] += 1;
    for (int c = 0; c < K; ++c) {
        if (take[c] < 1)
            throw ShapeError("stratified_fraction: class " + std::to_string(c) +
                             " would be empty at p=" + std::to_string(p));
        if (take[c] > static_cast<int>(per_class[c].size()))
            take[c] = static_cast<int>(per_class[c].size());
    }

    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(total));
    for (int c = 0; c < K; ++c)
        out.insert(out.end(), per_class[c].begin(), per_class[c].begin() + take[c]);
    std::sort(out.begin(), out.end());
    return out;
}

Tensor<float> to_feature_map(const Dataset& ds, const std::vector<int>& indices) {
    const int S = static_cast<int>(ds.image_size);
    const int C = static_cast<int>(ds.channels);
    Tensor<float> t = Tensor<float>::zeros4(static_cast<int>(indices.size()), C, S, S);
    const std::size_t sb = ds.sample_bytes();
    for (std::size_t n = 0; n < indices.size(); ++n) {
        const std::uint8_t* px = ds.pixels.data() + sb * indices[n];
        float* dst = t.data() + sb * n;
        for (std::size_t j = 0; j < sb; ++j)
            dst[j] = (static_cast<float>(px[j]) / 255.0f - 0.5f) / 0.5f;
    }
    return t;
}

Tensor<float> to_feature_map_one(const Dataset& ds, int index) {
    return to_feature_map(ds, std::vector<int>{index});
}

}  // namespace slca
