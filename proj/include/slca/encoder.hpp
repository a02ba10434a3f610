#pragma once

#include <string>
#include <vector>

#include "slca/digest.hpp"
#include "slca/layers.hpp"
#include "slca/ops.hpp"
#include "slca/rng.hpp"

namespace slca {

// Order-independent content digest over parameter names and raw bytes.
template <typename T>
std::uint64_t params_digest(const std::vector<Param<T>*>& params) {
    std::uint64_t acc = 0;
    for (const Param<T>* p : params) {
        std::uint64_t h = fnv1a(p->name);
        h = fnv1a_update(h, p->value.v.data(), p->value.size() * sizeof(T));
        acc += h;
    }
    return acc;
}

struct EncoderConfig {
    int input_size = 64;    // paper-scale 1024
    int patch_size = 8;     // paper-scale 16
    int embed_dim = 32;     // paper-scale 256
    int num_blocks = 4;     // paper-scale 32
    int num_heads = 4;
    double mlp_ratio = 4.0;
    int neck_out_dim = 32;  // defaults to embed_dim
    std::uint64_t seed = 91;

    int grid() const { return input_size / patch_size; }
    // 1-based index of the middle tap block: ceil(B/2), 16 of 32 at paper scale.
    int mid_block() const { return (num_blocks + 1) / 2; }
    // With fewer than 3 blocks the first/middle/last taps collide.
    bool taps_alias() const { return num_blocks < 3; }

    void validate() const {
        if (input_size < 1 || patch_size < 1 || input_size % patch_size != 0)
            throw ShapeError("encoder config: input_size must be a positive multiple of patch_size");
        if (embed_dim < 1 || num_heads < 1 || embed_dim % num_heads != 0)
            throw ShapeError("encoder config: embed_dim must be a positive multiple of num_heads");
        if (num_blocks < 2) throw ShapeError("encoder config: num_blocks must be >= 2");
        if (mlp_ratio <= 0.0) throw ShapeError("encoder config: mlp_ratio must be positive");
        if (neck_out_dim < 1) throw ShapeError("encoder config: neck_out_dim must be >= 1");
    }
};

template <typename T>
struct EncoderTapSet {
    Tensor<T> pe, t_first, t_mid, t_last, neck;

    const Tensor<T>& by_name(const std::string& name) const {
        if (name == "pe") return pe;
        if (name == "t_first") return t_first;
        if (name == "t_mid") return t_mid;
        if (name == "t_last") return t_last;
        if (name == "neck") return neck;
        throw ShapeError("unknown tap name: " + name);
    }
};

inline const std::vector<std::string>& tap_names() {
    static const std::vector<std::string> names = {"pe", "t_first", "t_mid", "t_last", "neck"};
    return names;
}

// ViT-style image encoder with frozen parameters: patch embedding with a
// learned positional table, pre-norm transformer blocks with global
// attention over the token grid, and a 1x1 conv neck whose BN runs on the
// statistics fixed at init. Forward passes are pure; parameters never
// receive gradients.
template <typename T>
class Encoder {
public:
    struct Block {
        Param<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
        Param<T> wq, bq, wk, bk, wv, bv, wo, bo;
        Param<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };

    explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.neck_out_dim == 0) cfg_.neck_out_dim = cfg_.embed_dim;
        Rng rng(derive_seed(cfg_.seed, "encoder"));
        const int D = cfg_.embed_dim;
        const int G = cfg_.grid();
        const int hidden = static_cast<int>(D * cfg_.mlp_ratio);

        patch_proj_ = ConvBlock<T>("encoder.patch", 3, D, cfg_.patch_size, cfg_.patch_size, 0,
                                   false, false, rng, InitScheme::kTruncNormal02, false);
        Tensor<T> pe = Tensor<T>::zeros({D, G, G});
        for (auto& e : pe.v) e = static_cast<T>(rng.trunc_normal(0.02));
        pos_embed_.set("encoder.pos_embed", std::move(pe), false);

        auto mat = [&](const std::string& nm, int rows, int cols) {
            Tensor<T> m = Tensor<T>::zeros2(rows, cols);
            for (auto& e : m.v) e = static_cast<T>(rng.trunc_normal(0.02));
            Param<T> p;
            p.set(nm, std::move(m), false);
            return p;
        };
        auto vec = [&](const std::string& nm, int n, T value) {
            Param<T> p;
            p.set(nm, Tensor<T>::full({n}, value), false);
            return p;
        };

        blocks_.resize(cfg_.num_blocks);
        for (int b = 0; b < cfg_.num_blocks; ++b) {
            const std::string pre = "encoder.block" + std::to_string(b + 1) + ".";
            Block& blk = blocks_[b];
            blk.ln1_gamma = vec(pre + "ln1_gamma", D, T(1));
            blk.ln1_beta = vec(pre + "ln1_beta", D, T(0));
            blk.wq = mat(pre + "wq", D, D);
            blk.bq = vec(pre + "bq", D, T(0));
            blk.wk = mat(pre + "wk", D, D);
            blk.bk = vec(pre + "bk", D, T(0));
            blk.wv = mat(pre + "wv", D, D);
            blk.bv = vec(pre + "bv", D, T(0));
            blk.wo = mat(pre + "wo", D, D);
            blk.bo = vec(pre + "bo", D, T(0));
            blk.ln2_gamma = vec(pre + "ln2_gamma", D, T(1));
            blk.ln2_beta = vec(pre + "ln2_beta", D, T(0));
            blk.mlp_w1 = mat(pre + "mlp_w1", hidden, D);
            blk.mlp_b1 = vec(pre + "mlp_b1", hidden, T(0));
            blk.mlp_w2 = mat(pre + "mlp_w2", D, hidden);
            blk.mlp_b2 = vec(pre + "mlp_b2", D, T(0));
        }

        neck_ = ConvBlock<T>("encoder.neck", D, cfg_.neck_out_dim, 1, 1, 0, true, false, rng,
                             InitScheme::kTruncNormal02, false);
        init_digest_ = digest();
    }

    const EncoderConfig& config() const { return cfg_; }
    std::uint64_t init_digest() const { return init_digest_; }

    std::uint64_t digest() {
        std::vector<Param<T>*> ps;
        collect(ps);
        return params_digest(ps);
    }

    void collect(std::vector<Param<T>*>& out) {
        patch_proj_.collect(out);
        out.push_back(&pos_embed_);
        for (Block& b : blocks_) {
            out.push_back(&b.ln1_gamma);
            out.push_back(&b.ln1_beta);
            out.push_back(&b.wq);
            out.push_back(&b.bq);
            out.push_back(&b.wk);
            out.push_back(&b.bk);
            out.push_back(&b.wv);
            out.push_back(&b.bv);
            out.push_back(&b.wo);
            out.push_back(&b.bo);
            out.push_back(&b.ln2_gamma);
            out.push_back(&b.ln2_beta);
            out.push_back(&b.mlp_w1);
            out.push_back(&b.mlp_b1);
            out.push_back(&b.mlp_w2);
            out.push_back(&b.mlp_b2);
        }
        neck_.collect(out);
    }

    // Non-overlapping patch projection plus the learned positional table.
    Tensor<T> patch_embed(const Tensor<T>& img) {
        if (img.c() != 3 || img.h() != cfg_.input_size || img.w() != cfg_.input_size)
            throw ShapeError("patch_embed: expected [N, 3, " + std::to_string(cfg_.input_size) +
                             ", " + std::to_string(cfg_.input_size) + "], got " + img.shape_str());
        Tensor<T> y = conv2d_raw(img, patch_proj_.weight.value, patch_proj_.bias.value,
                                 cfg_.patch_size, 0);
        const int G = cfg_.grid();
        for (int n = 0; n < y.n(); ++n) {
            T* dst = y.plane(n, 0);
            const T* pe = pos_embed_.value.data();
            for (std::size_t i = 0; i < static_cast<std::size_t>(cfg_.embed_dim) * G * G; ++i)
                dst[i] += pe[i];
        }
        return y;
    }

    // Pre-norm residual block over the token grid; attention is global over
    // all G*G tokens. attn_probs, when given, receives [N, heads, T, T].
    Tensor<T> transformer_block(int block_index1, const Tensor<T>& x,
                                Tensor<T>* attn_probs = nullptr) const {
        const Block& blk = blocks_.at(block_index1 - 1);
        const int N = x.n(), D = x.c(), G = x.h();
        const int ntok = G * G;
        const int heads = cfg_.num_heads;
        const int dh = D / heads;
        const int hidden = blk.mlp_w1.value.n();
        if (attn_probs) *attn_probs = Tensor<T>::zeros4(N, heads, ntok, ntok);

        Tensor<T> out = x;
        std::vector<T> tok(static_cast<std::size_t>(ntok) * D), normed(tok.size());
        std::vector<T> q(tok.size()), k(tok.size()), v(tok.size()), attn_out(tok.size());
        std::vector<T> qh(static_cast<std::size_t>(ntok) * dh), kh(qh.size()), vh(qh.size());
        std::vector<T> scores(static_cast<std::size_t>(ntok) * ntok), oh(qh.size());
        std::vector<T> mlp_h(static_cast<std::size_t>(ntok) * hidden);

        for (int n = 0; n < N; ++n) {
            // [D, G, G] -> tokens [ntok, D]
            for (int d = 0; d < D; ++d) {
                const T* src = x.plane(n, d);
                for (int t = 0; t < ntok; ++t) tok[static_cast<std::size_t>(t) * D + d] = src[t];
            }
            layernorm_tokens(tok.data(), normed.data(), ntok, D, blk.ln1_gamma.value,
                             blk.ln1_beta.value);
            project(normed.data(), q.data(), ntok, D, D, blk.wq.value, blk.bq.value);
            project(normed.data(), k.data(), ntok, D, D, blk.wk.value, blk.bk.value);
            project(normed.data(), v.data(), ntok, D, D, blk.wv.value, blk.bv.value);

            std::fill(attn_out.begin(), attn_out.end(), T(0));
            const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
            for (int h = 0; h < heads; ++h) {
                for (int t = 0; t < ntok; ++t)
                    for (int d = 0; d < dh; ++d) {
                        qh[static_cast<std::size_t>(t) * dh + d] = q[static_cast<std::size_t>(t) * D + h * dh + d] * scale;
                        kh[static_cast<std::size_t>(t) * dh + d] = k[static_cast<std::size_t>(t) * D + h * dh + d];
                        vh[static_cast<std::size_t>(t) * dh + d] = v[static_cast<std::size_t>(t) * D + h * dh + d];
                    }
                std::fill(scores.begin(), scores.end(), T(0));
                gemm_nt(scores.data(), qh.data(), kh.data(), ntok, dh, ntok);
                softmax_rows(scores.data(), ntok, ntok);
                if (attn_probs)
                    std::copy(scores.begin(), scores.end(),
                              attn_probs->data() + (static_cast<std::size_t>(n) * heads + h) * ntok * ntok);
                std::fill(oh.begin(), oh.end(), T(0));
                gemm_nn(oh.data(), scores.data(), vh.data(), ntok, ntok, dh);
                for (int t = 0; t < ntok; ++t)
                    for (int d = 0; d < dh; ++d)
                        attn_out[static_cast<std::size_t>(t) * D + h * dh + d] = oh[static_cast<std::size_t>(t) * dh + d];
            }
            project(attn_out.data(), normed.data(), ntok, D, D, blk.wo.value, blk.bo.value);
            for (std::size_t i = 0; i < tok.size(); ++i) tok[i] += normed[i];

            layernorm_tokens(tok.data(), normed.data(), ntok, D, blk.ln2_gamma.value,
                             blk.ln2_beta.value);
            project(normed.data(), mlp_h.data(), ntok, D, hidden, blk.mlp_w1.value, blk.mlp_b1.value);
            for (auto& e : mlp_h)
                e = static_cast<T>(0.5 * static_cast<double>(e) *
                                   (1.0 + std::erf(static_cast<double>(e) / 1.4142135623730951)));
            project(mlp_h.data(), normed.data(), ntok, hidden, D, blk.mlp_w2.value, blk.mlp_b2.value);
            for (std::size_t i = 0; i < tok.size(); ++i) tok[i] += normed[i];

            for (int d = 0; d < D; ++d) {
                T* dst = out.plane(n, d);
                for (int t = 0; t < ntok; ++t) dst[t] = tok[static_cast<std::size_t>(t) * D + d];
            }
        }
        return out;
    }

    // Returns the five taps: patch embedding, blocks {1, ceil(B/2), B}, neck.
    EncoderTapSet<T> encode_with_taps(const Tensor<T>& img) {
        EncoderTapSet<T> taps;
        taps.pe = patch_embed(img);
        Tensor<T> x = taps.pe;
        const int mid = cfg_.mid_block();
        for (int b = 1; b <= cfg_.num_blocks; ++b) {
            x = transformer_block(b, x);
            if (b == 1) taps.t_first = x;
            if (b == mid) taps.t_mid = x;
        }
        taps.t_last = x;
        taps.neck = neck_.run(x, true, false, /*training=*/false, /*cache=*/false);
        return taps;
    }

private:
    static void layernorm_tokens(const T* in, T* out, int ntok, int D, const Tensor<T>& gamma,
                                 const Tensor<T>& beta) {
        constexpr double kEps = 1e-6;
        for (int t = 0; t < ntok; ++t) {
            const T* row = in + static_cast<std::size_t>(t) * D;
            T* dst = out + static_cast<std::size_t>(t) * D;
            double mean = 0.0;
            for (int d = 0; d < D; ++d) mean += row[d];
            mean /= D;
            double var = 0.0;
            for (int d = 0; d < D; ++d) {
                const double diff = row[d] - mean;
                var += diff * diff;
            }
            var /= D;
            const double invstd = 1.0 / std::sqrt(var + kEps);
            for (int d = 0; d < D; ++d)
                dst[d] = static_cast<T>((row[d] - mean) * invstd * gamma.v[d] + beta.v[d]);
        }
    }

    // out[ntok, dout] = in[ntok, din] * W[dout, din]^T + b
    static void project(const T* in, T* out, int ntok, int din, int dout, const Tensor<T>& w,
                        const Tensor<T>& b) {
        for (int t = 0; t < ntok; ++t)
            for (int d = 0; d < dout; ++d) out[static_cast<std::size_t>(t) * dout + d] = b.v[d];
        gemm_nt(out, in, w.data(), ntok, din, dout);
    }

    EncoderConfig cfg_;
    ConvBlock<T> patch_proj_;
    Param<T> pos_embed_;
    std::vector<Block> blocks_;
    ConvBlock<T> neck_;
    std::uint64_t init_digest_ = 0;
};

}  // namespace slca
