#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "slca/checkpoint.hpp"
#include "slca/model.hpp"

using namespace slca;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

ModelSpec small_spec(std::uint64_t seed) {
    ModelSpec spec;
    spec.variant = Variant::kSlcaProjector;
    spec.seed = seed;
    spec.encoder.input_size = 32;
    spec.encoder.patch_size = 8;
    spec.encoder.embed_dim = 16;
    spec.encoder.num_blocks = 2;
    spec.encoder.num_heads = 2;
    spec.encoder.neck_out_dim = 16;
    spec.backbone.input_size = 32;
    spec.backbone.stem_channels = 8;
    spec.backbone.stage_channels = {8, 16};
    spec.backbone.blocks_per_stage = 1;
    spec.backbone.num_classes = 3;
    spec.tap_assignment = {"pe", "t_mid", "neck"};
    return spec;
}

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("checkpoint: bit-exact round trip through a fresh model") {
    Model<float> m(small_spec(3));
    auto params = m.all_params();
    const std::uint64_t digest_before = params_digest(params);

    const std::string path = temp_path("slca_ckpt_test.bin");
    save_checkpoint(params, path);

    // Load into a model with different random contents (other seed).
    ModelSpec other = small_spec(4);
    other.encoder.seed = 123;
    Model<float> m2(other);
    auto params2 = m2.all_params();
    CHECK(params_digest(params2) != digest_before);
    load_checkpoint(path, params2);
    CHECK(params_digest(params2) == digest_before);

    // Loading also restores the encoder digest computed from the file.
    CHECK(m2.encoder_digest() == m.encoder_digest());
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: corruption and truncation are rejected") {
    Model<float> m(small_spec(5));
    auto params = m.all_params();
    const std::string path = temp_path("slca_ckpt_corrupt.bin");
    save_checkpoint(params, path);
    auto bytes = read_all(path);

    // Flip one payload byte: checksum must fail.
    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    const std::string bad = temp_path("slca_ckpt_bad.bin");
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(flipped.data()),
               static_cast<std::streamsize>(flipped.size()));
    CHECK_THROWS_AS(load_checkpoint(bad, params), FormatError);

    // Truncated payload.
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(bad, params), FormatError);

    // Bad magic.
    auto wrong = bytes;
    wrong[3] = 'x';
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(wrong.data()),
               static_cast<std::streamsize>(wrong.size()));
    CHECK_THROWS_AS(load_checkpoint(bad, params), FormatError);

    std::remove(path.c_str());
    std::remove(bad.c_str());
}

TEST_CASE("checkpoint: eval logits identical after save/load into a new model") {
    ModelSpec spec = small_spec(6);
    Model<float> m(spec);
    Rng rng(31);
    Tensor<float> img = Tensor<float>::zeros4(2, 3, 32, 32);
    for (auto& e : img.v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor<float> before = m.forward(img, false);

    const std::string path = temp_path("slca_ckpt_eval.bin");
    auto params = m.all_params();
    save_checkpoint(params, path);

    ModelSpec fresh = spec;
    fresh.seed = 777;  // different init, then overwritten by the checkpoint
    Model<float> m2(fresh);
    auto params2 = m2.all_params();
    load_checkpoint(path, params2);
    Tensor<float> after = m2.forward(img, false);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before.v[i] == after.v[i]);
    std::remove(path.c_str());
}
