#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slca/encoder.hpp"
#include "slca/layers.hpp"
#include "slca/ops.hpp"
#include "slca/slca.hpp"

namespace slca {

struct BackboneConfig {
    int stem_channels = 16;
    std::vector<int> stage_channels = {16, 32, 64, 128};
    int blocks_per_stage = 2;
    int input_size = 64;
    int num_classes = 4;

    int num_stages() const { return static_cast<int>(stage_channels.size()); }
    int num_injection_points() const { return 1 + num_stages(); }

    static int halved(int s) { return (s - 1) / 2 + 1; }  // 3x3 stride-2 pad-1 conv

    // Spatial size at each injection point: after the stem, then after each
    // stage (whose first block strides by 2).
    std::vector<int> injection_sizes() const {
        std::vector<int> out;
        int s = halved(input_size);
        out.push_back(s);
        for (int i = 0; i < num_stages(); ++i) {
            s = halved(s);
            out.push_back(s);
        }
        return out;
    }

    std::vector<int> injection_channels() const {
        std::vector<int> out = {stem_channels};
        out.insert(out.end(), stage_channels.begin(), stage_channels.end());
        return out;
    }

    int final_size() const { return injection_sizes().back(); }
    int final_channels() const { return stage_channels.back(); }

    void validate() const {
        if (stem_channels < 1 || blocks_per_stage < 1 || input_size < 2)
            throw ShapeError("backbone config: bad stem/blocks/input");
        if (stage_channels.empty()) throw ShapeError("backbone config: no stages");
        for (int c : stage_channels)
            if (c < 1) throw ShapeError("backbone config: stage channels must be >= 1");
        if (num_classes < 2) throw ShapeError("backbone config: num_classes must be >= 2");
        if (final_size() < 1) throw ShapeError("backbone config: input too small for the stride schedule");
    }
};

// Projector head geometry: resize the neck tap to 8*S_f, lift channels to
// C_last, then three stride-2 conv blocks back down to S_f.
struct ProjectorConfig {
    int resize_target = 0;
    int mid_channels = 0;
    static constexpr int kDownsampleConvs = 3;

    static ProjectorConfig for_backbone(const BackboneConfig& bb) {
        ProjectorConfig pc;
        pc.resize_target = 8 * bb.final_size();
        pc.mid_channels = bb.final_channels();
        return pc;
    }
};

enum class Variant { kBaseline, kAddNoAttention, kSigmoidOnly, kSlca, kSlcaProjector };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::kBaseline: return "baseline";
        case Variant::kAddNoAttention: return "add_no_attention";
        case Variant::kSigmoidOnly: return "sigmoid_only";
        case Variant::kSlca: return "slca";
        case Variant::kSlcaProjector: return "slca_projector";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "baseline") return Variant::kBaseline;
    if (s == "add_no_attention") return Variant::kAddNoAttention;
    if (s == "sigmoid_only") return Variant::kSigmoidOnly;
    if (s == "slca") return Variant::kSlca;
    if (s == "slca_projector") return Variant::kSlcaProjector;
    throw ShapeError("unknown variant: " + s);
}

struct ModelSpec {
    Variant variant = Variant::kSlca;
    std::vector<std::string> tap_assignment = {"pe", "t_first", "t_mid", "t_last", "neck"};
    EncoderConfig encoder;
    BackboneConfig backbone;
    SlcaConfig slca;
    std::uint64_t seed = 1;

    void validate() const {
        encoder.validate();
        backbone.validate();
        slca.validate();
        if (encoder.input_size != backbone.input_size)
            throw ShapeError("model spec: encoder and backbone input sizes differ");
        if (static_cast<int>(tap_assignment.size()) != backbone.num_injection_points())
            throw ShapeError("model spec: tap_assignment must name " +
                             std::to_string(backbone.num_injection_points()) + " taps");
        for (const std::string& t : tap_assignment) {
            bool ok = false;
            for (const std::string& n : tap_names()) ok = ok || n == t;
            if (!ok) throw ShapeError("model spec: unknown tap name '" + t + "'");
        }
    }
};

template <typename T>
class Backbone {
public:
    Backbone() = default;

    Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
        stem_ = ConvBlock<T>("backbone.stem", 3, cfg.stem_channels, 3, 2, 1, true, true, rng);
        int in_ch = cfg.stem_channels;
        stages_.resize(cfg.num_stages());
        for (int s = 0; s < cfg.num_stages(); ++s) {
            const int out_ch = cfg.stage_channels[s];
            for (int b = 0; b < cfg.blocks_per_stage; ++b) {
                const std::string name = "backbone.stage" + std::to_string(s + 1) + ".block" +
                                         std::to_string(b + 1);
                stages_[s].emplace_back(name, b == 0 ? in_ch : out_ch, out_ch, 3, b == 0 ? 2 : 1,
                                        1, true, true, rng);
            }
            in_ch = out_ch;
        }
    }

    const BackboneConfig& config() const { return cfg_; }
    ConvBlock<T>& stem() { return stem_; }
    std::vector<std::vector<ConvBlock<T>>>& stages() { return stages_; }

    void collect(std::vector<Param<T>*>& out) {
        stem_.collect(out);
        for (auto& stage : stages_)
            for (auto& blk : stage) blk.collect(out);
    }

private:
    BackboneConfig cfg_;
    ConvBlock<T> stem_;
    std::vector<std::vector<ConvBlock<T>>> stages_;
};

template <typename T>
class Projector {
public:
    Projector() = default;

    Projector(int in_channels, const ProjectorConfig& cfg, Rng& rng) : cfg_(cfg) {
        lift_ = ConvBlock<T>("projector.lift", in_channels, cfg.mid_channels, 3, 1, 1, true, true, rng);
        for (int i = 0; i < ProjectorConfig::kDownsampleConvs; ++i)
            down_.emplace_back("projector.down" + std::to_string(i + 1), cfg.mid_channels,
                               cfg.mid_channels, 3, 2, 1, true, true, rng);
    }

    Tensor<T> forward(const Tensor<T>& neck_tap, bool training) {
        in_h_ = neck_tap.h();
        in_w_ = neck_tap.w();
        Tensor<T> x = resize_bilinear(neck_tap, cfg_.resize_target, cfg_.resize_target);
        x = lift_.forward(x, training);
        for (auto& blk : down_) x = blk.forward(x, training);
        return x;
    }

    Tensor<T> backward(const Tensor<T>& d_out) {
        Tensor<T> g = d_out;
        for (int i = static_cast<int>(down_.size()) - 1; i >= 0; --i) g = down_[i].backward(g);
        g = lift_.backward(g);
        return resize_bilinear_backward(g, in_h_, in_w_);
    }

    void collect(std::vector<Param<T>*>& out) {
        lift_.collect(out);
        for (auto& blk : down_) blk.collect(out);
    }

    const ProjectorConfig& config() const { return cfg_; }

private:
    ProjectorConfig cfg_;
    ConvBlock<T> lift_;
    std::vector<ConvBlock<T>> down_;
    int in_h_ = 0, in_w_ = 0;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw ShapeError("concat_channels: incompatible shapes " + a.shape_str() + " vs " +
                         b.shape_str());
    Tensor<T> out = Tensor<T>::zeros4(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c)
            std::copy(a.plane(n, c), a.plane(n, c) + plane, out.plane(n, c));
        for (int c = 0; c < b.c(); ++c)
            std::copy(b.plane(n, c), b.plane(n, c) + plane, out.plane(n, a.c() + c));
    }
    return out;
}

// The assembled two-branch model: a CNN backbone with one fusion point after
// the stem and after each stage, fed by the frozen encoder's taps according
// to tap_assignment, plus the optional projector head concatenated before
// the classifier.
template <typename T>
class Model {
public:
    explicit Model(const ModelSpec& spec) : spec_(spec), encoder_(spec.encoder) {
        spec_.validate();
        const BackboneConfig& bb = spec_.backbone;
        Rng bb_rng(derive_seed(spec_.seed, "backbone"));
        backbone_ = Backbone<T>(bb, bb_rng);

        const int points = bb.num_injection_points();
        const auto inj_ch = bb.injection_channels();
        const int tap_grid = spec_.encoder.grid();
        Rng fuse_rng(derive_seed(spec_.seed, "fusion"));
        if (spec_.variant != Variant::kBaseline) {
            for (int i = 0; i < points; ++i) {
                const std::string name = "fusion" + std::to_string(i);
                const int c_in = tap_channels(spec_.tap_assignment[i]);
                SlcaConfig sc = spec_.slca;
                sc.g = std::min(sc.g, tap_grid);
                sc.out_channels = inj_ch[i];
                switch (spec_.variant) {
                    case Variant::kAddNoAttention:
                        add_blocks_.emplace_back(name, c_in, inj_ch[i], fuse_rng);
                        break;
                    case Variant::kSigmoidOnly:
                        sig_blocks_.emplace_back(name, c_in, sc, fuse_rng);
                        break;
                    case Variant::kSlca:
                    case Variant::kSlcaProjector:
                        slca_blocks_.emplace_back(name, c_in, sc, fuse_rng);
                        break;
                    default:
                        break;
                }
            }
        }

        if (spec_.variant == Variant::kSlcaProjector) {
            Rng proj_rng(derive_seed(spec_.seed, "projector"));
            projector_ = Projector<T>(spec_.encoder.neck_out_dim,
                                      ProjectorConfig::for_backbone(bb), proj_rng);
        }

        const int cls_in = bb.final_channels() * (spec_.variant == Variant::kSlcaProjector ? 2 : 1);
        Rng cls_rng(derive_seed(spec_.seed, "classifier"));
        classifier_ = LinearLayer<T>("classifier", cls_in, bb.num_classes, cls_rng);
    }

    const ModelSpec& spec() const { return spec_; }
    Encoder<T>& encoder() { return encoder_; }
    bool uses_taps() const { return spec_.variant != Variant::kBaseline; }

    // Test hook: force every attention map to a constant after the fusion
    // blocks run (direct injection, bypassing the sigmoid).
    void set_attention_override(std::optional<T> v) { attention_override_ = v; }

    // taps may be supplied (e.g. from a cache); otherwise the encoder runs.
    Tensor<T> forward(const Tensor<T>& images, bool training,
                      const EncoderTapSet<T>* taps = nullptr) {
        const BackboneConfig& bb = spec_.backbone;
        if (images.c() != 3 || images.h() != bb.input_size || images.w() != bb.input_size)
            throw ShapeError("forward: expected [N, 3, " + std::to_string(bb.input_size) + ", " +
                             std::to_string(bb.input_size) + "], got " + images.shape_str());
        if (!images.all_finite()) throw NumericError("forward: non-finite input image batch");

        EncoderTapSet<T> local_taps;
        const EncoderTapSet<T>* tp = nullptr;
        if (uses_taps()) {
            if (taps == nullptr) {
                local_taps = encoder_.encode_with_taps(images);
                tp = &local_taps;
            } else {
                tp = taps;
            }
        }

        cache_pre_fusion_.assign(bb.num_injection_points(), Tensor<T>{});
        cache_attn_.assign(bb.num_injection_points(), Tensor<T>{});

        Tensor<T> x = backbone_.stem().forward(images, training);
        x = fuse(0, std::move(x), tp, training);
        auto& stages = backbone_.stages();
        for (int s = 0; s < bb.num_stages(); ++s) {
            for (auto& blk : stages[s]) x = blk.forward(x, training);
            x = fuse(s + 1, std::move(x), tp, training);
        }

        Tensor<T> feat = x;
        if (spec_.variant == Variant::kSlcaProjector) {
            Tensor<T> proj = projector_.forward(tp->by_name("neck"), training);
            feat = concat_channels(feat, proj);
        }
        cache_feat_dims_ = {feat.n(), feat.c(), feat.h(), feat.w()};
        Tensor<T> pooled = global_avg_pool(feat);
        return classifier_.forward(pooled, training);
    }

    // Backward from d_logits through the trainable branch. Valid after a
    // training-mode forward. Tap gradients stop at the frozen boundary.
    void backward(const Tensor<T>& d_logits) {
        const BackboneConfig& bb = spec_.backbone;
        Tensor<T> d_pooled = classifier_.backward(d_logits);
        Tensor<T> d_feat = global_avg_pool_backward(d_pooled, cache_feat_dims_[2], cache_feat_dims_[3]);

        Tensor<T> d_x;
        if (spec_.variant == Variant::kSlcaProjector) {
            const int c_last = bb.final_channels();
            const int n = d_feat.n(), h = d_feat.h(), w = d_feat.w();
            d_x = Tensor<T>::zeros4(n, c_last, h, w);
            Tensor<T> d_proj = Tensor<T>::zeros4(n, c_last, h, w);
            const std::size_t plane = static_cast<std::size_t>(h) * w;
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < c_last; ++c) {
                    std::copy(d_feat.plane(i, c), d_feat.plane(i, c) + plane, d_x.plane(i, c));
                    std::copy(d_feat.plane(i, c_last + c), d_feat.plane(i, c_last + c) + plane,
                              d_proj.plane(i, c));
                }
            }
            projector_.backward(d_proj);
        } else {
            d_x = std::move(d_feat);
        }

        auto& stages = backbone_.stages();
        for (int s = bb.num_stages() - 1; s >= 0; --s) {
            d_x = fuse_backward(s + 1, std::move(d_x));
            for (int b = static_cast<int>(stages[s].size()) - 1; b >= 0; --b)
                d_x = stages[s][b].backward(d_x);
        }
        d_x = fuse_backward(0, std::move(d_x));
        backbone_.stem().backward(d_x);
    }

    std::vector<Param<T>*> encoder_params() {
        std::vector<Param<T>*> ps;
        encoder_.collect(ps);
        return ps;
    }

    std::vector<Param<T>*> trainable_branch_params() {
        std::vector<Param<T>*> ps;
        backbone_.collect(ps);
        for (auto& b : slca_blocks_) b.collect(ps);
        for (auto& b : sig_blocks_) b.collect(ps);
        for (auto& b : add_blocks_) b.collect(ps);
        if (spec_.variant == Variant::kSlcaProjector) projector_.collect(ps);
        classifier_.collect(ps);
        return ps;
    }

    std::vector<Param<T>*> all_params() {
        std::vector<Param<T>*> ps = encoder_params();
        std::vector<Param<T>*> tb = trainable_branch_params();
        ps.insert(ps.end(), tb.begin(), tb.end());
        return ps;
    }

    std::uint64_t encoder_digest() {
        auto ps = encoder_params();
        return params_digest(ps);
    }
    std::uint64_t trainable_digest() {
        auto ps = trainable_branch_params();
        return params_digest(ps);
    }

    Backbone<T>& backbone() { return backbone_; }
    Projector<T>& projector() { return projector_; }
    std::vector<SlcaBlock<T>>& slca_blocks() { return slca_blocks_; }
    LinearLayer<T>& classifier() { return classifier_; }

    // Attention maps cached by the last forward, one per injection point
    // (empty tensors for variants without attention).
    const std::vector<Tensor<T>>& last_attention_maps() const { return cache_attn_; }

    // Pre-fusion stage outputs cached by the last forward.
    const std::vector<Tensor<T>>& last_pre_fusion_maps() const { return cache_pre_fusion_; }

private:
    int tap_channels(const std::string& name) const {
        return name == "neck" ? spec_.encoder.neck_out_dim : spec_.encoder.embed_dim;
    }

    Tensor<T> fuse(int point, Tensor<T> x, const EncoderTapSet<T>* taps, bool training) {
        if (spec_.variant == Variant::kBaseline) return x;
        const Tensor<T>& tap = taps->by_name(spec_.tap_assignment[point]);
        switch (spec_.variant) {
            case Variant::kAddNoAttention: {
                Tensor<T> add = add_blocks_[point].forward(tap, x.h(), x.w(), training);
                for (std::size_t i = 0; i < x.size(); ++i) x.v[i] += add.v[i];
                return x;
            }
            case Variant::kSigmoidOnly: {
                Tensor<T> attn = sig_blocks_[point].forward(tap, training);
                if (attention_override_) attn.fill(*attention_override_);
                cache_pre_fusion_[point] = x;
                cache_attn_[point] = attn;
                return apply_attention_residual(x, attn);
            }
            case Variant::kSlca:
            case Variant::kSlcaProjector: {
                Tensor<T> attn = slca_blocks_[point].forward(tap, training);
                if (attention_override_) attn.fill(*attention_override_);
                cache_pre_fusion_[point] = x;
                cache_attn_[point] = attn;
                return apply_attention_residual(x, attn);
            }
            default:
                return x;
        }
    }

    Tensor<T> fuse_backward(int point, Tensor<T> d_out) {
        switch (spec_.variant) {
            case Variant::kBaseline:
                return d_out;
            case Variant::kAddNoAttention:
                add_blocks_[point].backward(d_out);
                return d_out;
            case Variant::kSigmoidOnly: {
                Tensor<T> d_stage, d_attn;
                apply_attention_residual_backward(d_out, cache_pre_fusion_[point],
                                                  cache_attn_[point], d_stage, d_attn);
                sig_blocks_[point].backward(d_attn);
                return d_stage;
            }
            case Variant::kSlca:
            case Variant::kSlcaProjector: {
                Tensor<T> d_stage, d_attn;
                apply_attention_residual_backward(d_out, cache_pre_fusion_[point],
                                                  cache_attn_[point], d_stage, d_attn);
                slca_blocks_[point].backward(d_attn);
                return d_stage;
            }
        }
        return d_out;
    }

    ModelSpec spec_;
    Encoder<T> encoder_;
    Backbone<T> backbone_;
    std::vector<SlcaBlock<T>> slca_blocks_;
    std::vector<SigmoidOnlyBlock<T>> sig_blocks_;
    std::vector<DirectAddBlock<T>> add_blocks_;
    Projector<T> projector_;
    LinearLayer<T> classifier_;
    std::optional<T> attention_override_;

    std::vector<Tensor<T>> cache_pre_fusion_, cache_attn_;
    std::array<int, 4> cache_feat_dims_{0, 0, 0, 0};
};

}  // namespace slca
