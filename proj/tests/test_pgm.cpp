#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "slca/pgm.hpp"
#include "slca/rng.hpp"

using namespace slca;

TEST_CASE("heatmap_bytes: min-max normalization hits 0 and 255") {
    Tensor<float> map = Tensor<float>::zeros4(1, 2, 2, 2);
    map.v = {0.f, 1.f, 2.f, 3.f, 1.f, 2.f, 3.f, 4.f};  // channel mean: 0.5..3.5
    auto bytes = heatmap_bytes(map, 4);
    REQUIRE(bytes.size() == 16);
    int lo = 255, hi = 0;
    for (auto b : bytes) {
        lo = std::min<int>(lo, b);
        hi = std::max<int>(hi, b);
    }
    CHECK(lo == 0);
    CHECK(hi == 255);
}

TEST_CASE("heatmap_bytes: constant map renders as mid-gray 128") {
    Tensor<float> map = Tensor<float>::full({1, 3, 4, 4}, 0.5f);
    auto bytes = heatmap_bytes(map, 8);
    for (auto b : bytes) CHECK(b == 128);
}

TEST_CASE("write_pgm: exact P5 header and payload") {
    const auto path = (std::filesystem::temp_directory_path() / "slca_pgm_test.pgm").string();
    std::vector<std::uint8_t> px(6 * 4);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i * 10);
    write_pgm(path, 6, 4, px);
    std::ifstream f(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(content.substr(0, 9) == "P5\n6 4\n25");
    CHECK(content.size() == std::string("P5\n6 4\n255\n").size() + px.size());
    std::remove(path.c_str());
}
