#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slca/gradcheck.hpp"
#include "slca/slca.hpp"

using namespace slca;

namespace {

template <typename T>
Tensor<T> random_map(Rng& rng, int n, int c, int h, int w, double scale = 1.0) {
    Tensor<T> t = Tensor<T>::zeros4(n, c, h, w);
    for (auto& e : t.v) e = static_cast<T>(rng.normal(0.0, scale));
    return t;
}

SlcaConfig cfg_named(int r, int g, int out) {
    SlcaConfig c;
    c.r = r;
    c.g = g;
    c.out_channels = out;
    return c;
}

}  // namespace

TEST_CASE("slca_forward: zero weights give attention 0.5 everywhere") {
    Rng rng(200);
    SlcaBlock<float> blk("s", 8, cfg_named(4, 2, 6), rng);
    blk.conv1.weight.value.zero();
    blk.conv1.bias.value.zero();
    blk.conv2.weight.value.zero();
    blk.conv2.bias.value.zero();
    Tensor<float> tap = random_map<float>(rng, 2, 8, 8, 8);
    Tensor<float> attn = blk.forward(tap, false);
    CHECK(attn.c() == 6);
    CHECK(attn.h() == 2);
    for (float e : attn.v) CHECK(e == doctest::Approx(0.5f));
}

TEST_CASE("slca_forward: reduction shape law, C_in 32 r 4 -> hidden 8, out 64") {
    Rng rng(201);
    SlcaConfig cfg = cfg_named(4, 4, 64);
    CHECK(cfg.hidden(32) == 8);
    SlcaBlock<float> blk("s", 32, cfg, rng);
    CHECK(blk.conv1.weight.value.n() == 8);
    CHECK(blk.conv2.weight.value.n() == 64);
    Tensor<float> tap = random_map<float>(rng, 3, 32, 8, 8);
    Tensor<float> attn = blk.forward(tap, false);
    CHECK(attn.n() == 3);
    CHECK(attn.c() == 64);
    CHECK(attn.h() == 4);
    CHECK(attn.w() == 4);
}

TEST_CASE("slca_forward: equals independent composition of the four primitives") {
    Rng rng(202);
    SlcaBlock<float> blk("s", 16, cfg_named(4, 4, 12), rng);
    Tensor<float> tap = random_map<float>(rng, 2, 16, 8, 8);
    for (bool training : {false, true}) {
        Tensor<float> got = blk.forward(tap, training);
        Tensor<float> pooled = slap(tap, 4);
        Tensor<float> h = conv2d(pooled, blk.conv1, true, true, training);
        Tensor<float> z = conv2d(h, blk.conv2, true, false, training);
        Tensor<float> want = sigmoid(z);
        CHECK(max_abs_diff(got, want) < 1e-6);
    }
}

TEST_CASE("slca_forward: rejects an oversized grid") {
    Rng rng(203);
    SlcaBlock<float> blk("s", 8, cfg_named(2, 6, 4), rng);
    Tensor<float> tap = random_map<float>(rng, 1, 8, 4, 4);
    CHECK_THROWS_AS(blk.forward(tap, false), ShapeError);
}

TEST_CASE("slca locality: a perturbation inside one SLAP cell moves only that grid position") {
    Rng rng(204);
    SlcaBlock<float> blk("s", 8, cfg_named(2, 4, 5), rng);
    Tensor<float> tap = random_map<float>(rng, 1, 8, 8, 8);
    // Eval mode: training-mode BN couples cells through batch statistics.
    Tensor<float> base = blk.forward(tap, false);

    Tensor<float> poked = tap;
    // Cell (2, 1) covers rows [4, 6) x cols [2, 4) on an 8x8 map with g=4.
    for (int c = 0; c < 8; ++c)
        for (int y = 4; y < 6; ++y)
            for (int x = 2; x < 4; ++x) poked.at(0, c, y, x) += 0.81f;
    Tensor<float> after = blk.forward(poked, false);

    int diffs_at_cell = 0;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                if (i == 2 && j == 1) {
                    if (base.at(0, c, i, j) != after.at(0, c, i, j)) ++diffs_at_cell;
                } else {
                    REQUIRE(base.at(0, c, i, j) == after.at(0, c, i, j));
                }
            }
    CHECK(diffs_at_cell > 0);
}

TEST_CASE("slca attention entries stay inside (0, 1) on 1000 random inputs") {
    Rng rng(205);
    SlcaBlock<float> blk("s", 8, cfg_named(4, 4, 6), rng);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor<float> tap = random_map<float>(rng, 1, 8, 8, 8, 2.0);
        Tensor<float> attn = blk.forward(tap, false);
        for (float e : attn.v) {
            REQUIRE(e > 0.0f);
            REQUIRE(e < 1.0f);
        }
    }
}

TEST_CASE("slca_forward passes grad check below 1e-4") {
    Rng rng(206);
    SlcaBlock<double> blk("s", 8, cfg_named(4, 4, 6), rng);

    Tensor<double> tap;
    bool found = false;
    for (std::uint64_t s = 0; s < 64 && !found; ++s) {
        Rng xr(700 + s);
        tap = random_map<double>(xr, 2, 8, 8, 8);
        // Keep the pre-ReLU values of conv1 away from the kink.
        Tensor<double> pre = blk.conv1.run(slap(tap, 4), true, false, true, false);
        double margin = 1e9;
        for (double e : pre.v) margin = std::min(margin, std::abs(e));
        found = margin > 0.01;
    }
    REQUIRE(found);

    std::vector<Param<double>*> params;
    blk.collect(params);
    WeightedQuadLoss<double> wq(77);
    auto loss = [&] { return wq.value(blk.forward(tap, true)); };
    auto loss_grad = [&] {
        Tensor<double> a = blk.forward(tap, true);
        blk.backward(wq.grad(a));
        return wq.value(a);
    };
    GradReport rep = grad_check<double>(params, loss, loss_grad, 1e-3, 50, 6);
    CHECK(rep.global_max_rel_error < 1e-4);
}

TEST_CASE("slca trainable parameter count matches the closed form") {
    Rng rng(207);
    const int c_in = 32, r = 4, out = 64;
    SlcaBlock<float> blk("s", c_in, cfg_named(r, 4, out), rng);
    const long long h = std::max(1, c_in / r);
    const long long expect = c_in * h + h        // conv1 weight+bias
                             + 2 * h             // conv1 BN gamma+beta
                             + h * out + out     // conv2 weight+bias
                             + 2 * out;          // conv2 BN gamma+beta
    CHECK(blk.trainable_param_count() == expect);
}

TEST_CASE("apply_attention_residual: zero, unit, and random gating") {
    Rng rng(208);
    Tensor<float> stage = random_map<float>(rng, 2, 6, 8, 8);

    Tensor<float> zero_attn = Tensor<float>::zeros4(2, 6, 4, 4);
    CHECK(max_abs_diff(apply_attention_residual(stage, zero_attn), stage) == 0.0);

    Tensor<float> unit_attn = Tensor<float>::full({2, 6, 4, 4}, 1.0f);
    Tensor<float> doubled = apply_attention_residual(stage, unit_attn);
    for (std::size_t i = 0; i < stage.size(); ++i)
        CHECK(doubled.v[i] == doctest::Approx(2.0f * stage.v[i]));

    Tensor<float> attn = Tensor<float>::zeros4(2, 6, 4, 4);
    for (auto& e : attn.v) e = static_cast<float>(rng.uniform());
    Tensor<float> got = apply_attention_residual(stage, attn);
    // Elementwise oracle: stage * (1 + up(A)).
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 6; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const float a = attn.at(n, c, y * 4 / 8, x * 4 / 8);
                    const float want = stage.at(n, c, y, x) * (1.0f + a);
                    REQUIRE(std::abs(got.at(n, c, y, x) - want) < 1e-6);
                }

    Tensor<float> bad = Tensor<float>::zeros4(2, 5, 4, 4);
    CHECK_THROWS_AS(apply_attention_residual(stage, bad), ShapeError);
}

TEST_CASE("apply_attention_residual: gain is monotone on nonnegative stages") {
    Rng rng(209);
    Tensor<float> stage = random_map<float>(rng, 1, 3, 6, 6);
    for (auto& e : stage.v) e = std::abs(e);
    Tensor<float> attn = Tensor<float>::zeros4(1, 3, 3, 3);
    for (auto& e : attn.v) e = static_cast<float>(rng.uniform());
    Tensor<float> out = apply_attention_residual(stage, attn);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.v[i] >= stage.v[i]);
}

TEST_CASE("apply_attention_residual backward matches finite differences") {
    Rng rng(210);
    Tensor<double> stage = random_map<double>(rng, 1, 4, 6, 6);
    Tensor<double> attn = Tensor<double>::zeros4(1, 4, 3, 3);
    for (auto& e : attn.v) e = rng.uniform();

    Tensor<double> out = apply_attention_residual(stage, attn);
    Tensor<double> d_out = out;  // L = 0.5*sum(out^2)
    Tensor<double> d_stage, d_attn;
    apply_attention_residual_backward(d_out, stage, attn, d_stage, d_attn);

    auto loss_of = [&](const Tensor<double>& s, const Tensor<double>& a) {
        Tensor<double> o = apply_attention_residual(s, a);
        double l = 0.0;
        for (double e : o.v) l += 0.5 * e * e;
        return l;
    };
    const double eps = 1e-6;
    for (std::size_t i = 0; i < stage.size(); i += 7) {
        Tensor<double> sp = stage, sm = stage;
        sp.v[i] += eps;
        sm.v[i] -= eps;
        const double num = (loss_of(sp, attn) - loss_of(sm, attn)) / (2 * eps);
        REQUIRE(std::abs(num - d_stage.v[i]) < 1e-6 * std::max(1.0, std::abs(num)));
    }
    for (std::size_t i = 0; i < attn.size(); ++i) {
        Tensor<double> ap = attn, am = attn;
        ap.v[i] += eps;
        am.v[i] -= eps;
        const double num = (loss_of(stage, ap) - loss_of(stage, am)) / (2 * eps);
        REQUIRE(std::abs(num - d_attn.v[i]) < 1e-6 * std::max(1.0, std::abs(num)));
    }
}

TEST_CASE("sigmoid_only_attention: zero adapter, shape contract, composition oracle") {
    Rng rng(211);
    SigmoidOnlyBlock<float> blk("g", 8, cfg_named(4, 4, 6), rng);
    Tensor<float> tap = random_map<float>(rng, 2, 8, 8, 8);

    SigmoidOnlyBlock<float> zero_blk("g0", 8, cfg_named(4, 4, 6), rng);
    zero_blk.adapter.weight.value.zero();
    zero_blk.adapter.bias.value.zero();
    for (float e : zero_blk.forward(tap, false).v) CHECK(e == doctest::Approx(0.5f));

    Tensor<float> attn = blk.forward(tap, false);
    CHECK(attn.c() == 6);
    CHECK(attn.h() == 4);

    Tensor<float> want = sigmoid(conv2d(slap(tap, 4), blk.adapter, false, false, false));
    CHECK(max_abs_diff(attn, want) < 1e-6);
}

TEST_CASE("direct_add_adapter: zero adapter, identity channels, composition oracle") {
    Rng rng(212);
    Tensor<float> tap = random_map<float>(rng, 1, 4, 8, 8);

    DirectAddBlock<float> zero_blk("d0", 4, 6, rng);
    zero_blk.adapter.weight.value.zero();
    zero_blk.adapter.bias.value.zero();
    for (float e : zero_blk.forward(tap, 16, 16, false).v) CHECK(e == 0.0f);

    DirectAddBlock<float> eye_blk("d1", 4, 4, rng);
    eye_blk.adapter.weight.value.zero();
    eye_blk.adapter.bias.value.zero();
    for (int c = 0; c < 4; ++c) eye_blk.adapter.weight.value.at(c, c, 0, 0) = 1.0f;
    CHECK(max_abs_diff(eye_blk.forward(tap, 8, 8, false), tap) < 1e-7);

    DirectAddBlock<float> blk("d2", 4, 6, rng);
    Tensor<float> got = blk.forward(tap, 12, 12, false);
    Tensor<float> want = resize_bilinear(conv2d(tap, blk.adapter, false, false, false), 12, 12);
    CHECK(max_abs_diff(got, want) < 1e-6);
}
