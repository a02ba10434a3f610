#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "slca/layers.hpp"
#include "slca/ops.hpp"

namespace slca {

struct SlcaConfig {
    int r = 4;  // channel reduction factor
    int g = 4;  // pooling grid, clamped to min(g, H, W) at assembly
    int out_channels = 0;

    int hidden(int c_in) const { return std::max(1, c_in / r); }

    void validate() const {
        if (r < 1) throw ShapeError("slca config: r must be >= 1");
        if (g < 1) throw ShapeError("slca config: g must be >= 1");
    }
};

// Spatially localized channel attention over one encoder tap:
//   A = sigmoid(Conv2(ReLU(Conv1(SLAP(F)))))
// Conv1 is 1x1 with BN+ReLU to the reduced width, Conv2 is 1x1 with BN and
// no activation (a ReLU there would halve the sigmoid's input range). The
// output gates a backbone stage with out_channels channels.
template <typename T>
class SlcaBlock {
public:
    SlcaBlock() = default;

    SlcaBlock(const std::string& name, int c_in, const SlcaConfig& cfg, Rng& rng)
        : cfg_(cfg), c_in_(c_in) {
        cfg_.validate();
        if (cfg_.out_channels < 1) throw ShapeError("slca block: out_channels must be set");
        const int h = cfg_.hidden(c_in);
        conv1 = ConvBlock<T>(name + ".conv1", c_in, h, 1, 1, 0, true, true, rng);
        conv2 = ConvBlock<T>(name + ".conv2", h, cfg_.out_channels, 1, 1, 0, true, false, rng);
        // Mild gates at init: with gamma 1 the pre-sigmoid values span roughly
        // +-2 and the fresh gates heavily modulate the stage before anything
        // is learned. Starting the output BN at gamma 0.1 keeps initial
        // attention near 0.5 so the fusion begins as a near-uniform residual
        // rescale.
        conv2.gamma.value.fill(T(0.1));
    }

    const SlcaConfig& config() const { return cfg_; }
    int in_channels() const { return c_in_; }

    // [N, C_in, H, W] -> attention [N, out_channels, g, g], entries in (0, 1).
    Tensor<T> forward(const Tensor<T>& tap, bool training) {
        if (tap.c() != c_in_)
            throw ShapeError("slca: tap channels " + std::to_string(tap.c()) + " != expected " +
                             std::to_string(c_in_));
        in_h_ = tap.h();
        in_w_ = tap.w();
        Tensor<T> pooled = slap(tap, cfg_.g);
        Tensor<T> z = conv2.forward(conv1.forward(pooled, training), training);
        cache_attn_ = sigmoid(z);
        return cache_attn_;
    }

    // Gradient wrt the tap; parameter gradients accumulate into the blocks.
    Tensor<T> backward(const Tensor<T>& d_attn) {
        Tensor<T> dz = sigmoid_backward(d_attn, cache_attn_);
        Tensor<T> dpool = conv1.backward(conv2.backward(dz));
        return slap_backward(dpool, in_h_, in_w_);
    }

    void collect(std::vector<Param<T>*>& out) {
        conv1.collect(out);
        conv2.collect(out);
    }

    long long trainable_param_count() {
        std::vector<Param<T>*> ps;
        collect(ps);
        long long n = 0;
        for (Param<T>* p : ps)
            if (p->trainable) n += static_cast<long long>(p->value.size());
        return n;
    }

    ConvBlock<T> conv1, conv2;

private:
    SlcaConfig cfg_;
    int c_in_ = 0;
    int in_h_ = 0, in_w_ = 0;
    Tensor<T> cache_attn_;
};

// Ablation variant: one plain 1x1 conv (no BN, no ReLU) between SLAP and the
// sigmoid.
template <typename T>
class SigmoidOnlyBlock {
public:
    SigmoidOnlyBlock() = default;

    SigmoidOnlyBlock(const std::string& name, int c_in, const SlcaConfig& cfg, Rng& rng)
        : cfg_(cfg), c_in_(c_in) {
        cfg_.validate();
        adapter = ConvBlock<T>(name + ".adapter", c_in, cfg_.out_channels, 1, 1, 0, false, false, rng);
    }

    Tensor<T> forward(const Tensor<T>& tap, bool training) {
        if (tap.c() != c_in_) throw ShapeError("sigmoid_only: tap channel mismatch");
        in_h_ = tap.h();
        in_w_ = tap.w();
        Tensor<T> pooled = slap(tap, cfg_.g);
        cache_attn_ = sigmoid(adapter.forward(pooled, training));
        return cache_attn_;
    }

    Tensor<T> backward(const Tensor<T>& d_attn) {
        Tensor<T> dz = sigmoid_backward(d_attn, cache_attn_);
        return slap_backward(adapter.backward(dz), in_h_, in_w_);
    }

    void collect(std::vector<Param<T>*>& out) { adapter.collect(out); }

    ConvBlock<T> adapter;

private:
    SlcaConfig cfg_;
    int c_in_ = 0;
    int in_h_ = 0, in_w_ = 0;
    Tensor<T> cache_attn_;
};

// Ablation variant: no attention at all; a 1x1 channel adapter resized
// bilinearly to the stage geometry, added directly to the stage.
template <typename T>
class DirectAddBlock {
public:
    DirectAddBlock() = default;

    DirectAddBlock(const std::string& name, int c_in, int out_channels, Rng& rng) : c_in_(c_in) {
        adapter = ConvBlock<T>(name + ".adapter", c_in, out_channels, 1, 1, 0, false, false, rng);
    }

    Tensor<T> forward(const Tensor<T>& tap, int stage_h, int stage_w, bool training) {
        if (tap.c() != c_in_) throw ShapeError("direct_add: tap channel mismatch");
        in_h_ = tap.h();
        in_w_ = tap.w();
        return resize_bilinear(adapter.forward(tap, training), stage_h, stage_w);
    }

    Tensor<T> backward(const Tensor<T>& d_out) {
        Tensor<T> dconv = resize_bilinear_backward(d_out, in_h_, in_w_);
        return adapter.backward(dconv);
    }

    void collect(std::vector<Param<T>*>& out) { adapter.collect(out); }

    ConvBlock<T> adapter;

private:
    int c_in_ = 0;
    int in_h_ = 0, in_w_ = 0;
};

// Gated residual fusion: F' = stage + stage .* up(A), with A broadcast onto
// the stage geometry by nearest-neighbor upsampling.
template <typename T>
Tensor<T> apply_attention_residual(const Tensor<T>& stage, const Tensor<T>& attn) {
    if (attn.c() != stage.c())
        throw ShapeError("apply_attention_residual: attention channels " + std::to_string(attn.c()) +
                         " != stage channels " + std::to_string(stage.c()));
    Tensor<T> up = upsample_nearest(attn, stage.h(), stage.w());
    Tensor<T> out = stage;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += stage.v[i] * up.v[i];
    return out;
}

// d_stage = d_out .* (1 + up(A)); d_attn = downsample-sum of d_out .* stage.
template <typename T>
void apply_attention_residual_backward(const Tensor<T>& d_out, const Tensor<T>& stage,
                                       const Tensor<T>& attn, Tensor<T>& d_stage,
                                       Tensor<T>& d_attn) {
    Tensor<T> up = upsample_nearest(attn, stage.h(), stage.w());
    d_stage = d_out;
    Tensor<T> d_up = d_out;
    for (std::size_t i = 0; i < d_out.size(); ++i) {
        d_stage.v[i] = d_out.v[i] * (T(1) + up.v[i]);
        d_up.v[i] = d_out.v[i] * stage.v[i];
    }
    d_attn = upsample_nearest_backward(d_up, attn.h(), attn.w());
}

}  // namespace slca
