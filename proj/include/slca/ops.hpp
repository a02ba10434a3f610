#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "slca/errors.hpp"
#include "slca/gemm.hpp"
#include "slca/tensor.hpp"

namespace slca {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Per-thread growable scratch, separate per scalar type.
template <typename T, int Slot>
std::vector<T>& scratch(std::size_t n) {
    thread_local std::vector<T> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

// cols[c*k*k + ki*k + kj][oh*Wo + ow] = x(n, c, oh*s - p + ki, ow*s - p + kj)
template <typename T>
void im2col(const Tensor<T>& x, int n, int k, int stride, int pad, int Ho, int Wo, T* cols) {
    const int C = x.c(), H = x.h(), W = x.w();
    for (int c = 0; c < C; ++c) {
        const T* src = x.plane(n, c);
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) {
                        for (int ow = 0; ow < Wo; ++ow) dst[oh * Wo + ow] = T(0);
                        continue;
                    }
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[ih * W + iw] : T(0);
                    }
                }
            }
        }
    }
}

// rows[oh*Wo + ow][c*k*k + ki*k + kj]: transposed layout for weight grads.
template <typename T>
void im2row(const Tensor<T>& x, int n, int k, int stride, int pad, int Ho, int Wo, T* rows) {
    const int C = x.c(), H = x.h(), W = x.w();
    const int ckk = C * k * k;
    for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
            T* dst = rows + (static_cast<std::size_t>(oh) * Wo + ow) * ckk;
            for (int c = 0; c < C; ++c) {
                const T* src = x.plane(n, c);
                for (int ki = 0; ki < k; ++ki) {
                    const int ih = oh * stride - pad + ki;
                    for (int kj = 0; kj < k; ++kj) {
                        const int iw = ow * stride - pad + kj;
                        dst[c * k * k + ki * k + kj] =
                            (ih >= 0 && ih < H && iw >= 0 && iw < W) ? src[ih * W + iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int n, int k, int stride, int pad, int Ho, int Wo, Tensor<T>& dx) {
    const int C = dx.c(), H = dx.h(), W = dx.w();
    for (int c = 0; c < C; ++c) {
        T* dst = dx.plane(n, c);
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) dst[ih * W + iw] += src[oh * Wo + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Plain convolution, no normalization or activation. weight [Cout, Cin, k, k],
// bias [Cout] (may be empty).
template <typename T>
Tensor<T> conv2d_raw(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                     int stride, int pad) {
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    const int Cout = weight.n(), Cin = weight.c(), k = weight.h();
    if (Cin != C)
        throw ShapeError("conv2d: input channels " + std::to_string(C) + " != weight Cin " +
                         std::to_string(Cin));
    if (weight.h() != weight.w()) throw ShapeError("conv2d: kernel must be square");
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);
    if (Ho < 1 || Wo < 1) throw ShapeError("conv2d: output dims < 1");

    Tensor<T> y = Tensor<T>::zeros4(N, Cout, Ho, Wo);
    const int ckk = C * k * k;
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    std::vector<T>& cols = detail::scratch<T, 0>(direct ? 0 : static_cast<std::size_t>(ckk) * Ho * Wo);
    for (int n = 0; n < N; ++n) {
        const T* b = direct ? x.plane(n, 0) : cols.data();
        if (!direct) detail::im2col(x, n, k, stride, pad, Ho, Wo, cols.data());
        gemm_nn(y.plane(n, 0), weight.data(), b, Cout, ckk, Ho * Wo);
        if (bias.size() == static_cast<std::size_t>(Cout)) {
            for (int co = 0; co < Cout; ++co) {
                T* out = y.plane(n, co);
                const T bv = bias.v[co];
                for (int i = 0; i < Ho * Wo; ++i) out[i] += bv;
            }
        }
    }
    return y;
}

// Gradients of conv2d_raw. Accumulates into dweight/dbias; returns dx.
template <typename T>
Tensor<T> conv2d_raw_backward(const Tensor<T>& dy, const Tensor<T>& x, const Tensor<T>& weight,
                              int stride, int pad, Tensor<T>& dweight, Tensor<T>& dbias) {
    const int N = x.n(), C = x.c();
    const int Cout = weight.n(), k = weight.h();
    const int Ho = dy.h(), Wo = dy.w();
    const int ckk = C * k * k;
    const bool direct = (k == 1 && stride == 1 && pad == 0);

    Tensor<T> dx = Tensor<T>::zeros4(N, C, x.h(), x.w());
    std::vector<T>& rows = detail::scratch<T, 0>(direct ? 0 : static_cast<std::size_t>(ckk) * Ho * Wo);
    std::vector<T>& dcols = detail::scratch<T, 1>(static_cast<std::size_t>(ckk) * Ho * Wo);
    for (int n = 0; n < N; ++n) {
        // dW[Cout, ckk] += dY[Cout, HoWo] * rows[HoWo, ckk]
        if (direct) {
            gemm_nt(dweight.data(), dy.plane(n, 0), x.plane(n, 0), Cout, Ho * Wo, ckk);
        } else {
            detail::im2row(x, n, k, stride, pad, Ho, Wo, rows.data());
            gemm_nn(dweight.data(), dy.plane(n, 0), rows.data(), Cout, Ho * Wo, ckk);
        }
        if (dbias.size() == static_cast<std::size_t>(Cout)) {
            for (int co = 0; co < Cout; ++co) {
                const T* g = dy.plane(n, co);
                T s = T(0);
                for (int i = 0; i < Ho * Wo; ++i) s += g[i];
                dbias.v[co] += s;
            }
        }
        // dcols[ckk, HoWo] = W[Cout, ckk]^T * dY[Cout, HoWo]
        std::fill(dcols.begin(), dcols.begin() + static_cast<std::size_t>(ckk) * Ho * Wo, T(0));
        gemm_tn(dcols.data(), weight.data(), dy.plane(n, 0), Cout, ckk, Ho * Wo);
        if (direct) {
            T* out = dx.plane(n, 0);
            for (std::size_t i = 0; i < static_cast<std::size_t>(ckk) * Ho * Wo; ++i) out[i] += dcols[i];
        } else {
            detail::col2im_add(dcols.data(), n, k, stride, pad, Ho, Wo, dx);
        }
    }
    return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& e : y.v) e = e > T(0) ? e : T(0);
    return y;
}

// Mask taken from the forward output (y > 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(y.v[i] > T(0))) dx.v[i] = T(0);
    return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& e : y.v) e = T(1) / (T(1) + std::exp(-e));
    return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& dy, const Tensor<T>& y) {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] = dy.v[i] * y.v[i] * (T(1) - y.v[i]);
    return dx;
}

// Spatial local average pooling onto a g x g grid. Cell (i, j) averages the
// rectangle [floor(i*H/g), floor((i+1)*H/g)) x [floor(j*W/g), floor((j+1)*W/g));
// the cells tile the plane exactly.
template <typename T>
Tensor<T> slap(const Tensor<T>& x, int g) {
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    if (g < 1 || g > H || g > W)
        throw ShapeError("slap: grid " + std::to_string(g) + " exceeds spatial dims " +
                         std::to_string(H) + "x" + std::to_string(W));
    Tensor<T> y = Tensor<T>::zeros4(N, C, g, g);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = x.plane(n, c);
            T* dst = y.plane(n, c);
            for (int i = 0; i < g; ++i) {
                const int h0 = i * H / g, h1 = (i + 1) * H / g;
                for (int j = 0; j < g; ++j) {
                    const int w0 = j * W / g, w1 = (j + 1) * W / g;
                    T s = T(0);
                    for (int ih = h0; ih < h1; ++ih)
                        for (int iw = w0; iw < w1; ++iw) s += src[ih * W + iw];
                    dst[i * g + j] = s / static_cast<T>((h1 - h0) * (w1 - w0));
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> slap_backward(const Tensor<T>& dy, int H, int W) {
    const int N = dy.n(), C = dy.c(), g = dy.h();
    Tensor<T> dx = Tensor<T>::zeros4(N, C, H, W);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = dy.plane(n, c);
            T* dst = dx.plane(n, c);
            for (int i = 0; i < g; ++i) {
                const int h0 = i * H / g, h1 = (i + 1) * H / g;
                for (int j = 0; j < g; ++j) {
                    const int w0 = j * W / g, w1 = (j + 1) * W / g;
                    const T gval = src[i * g + j] / static_cast<T>((h1 - h0) * (w1 - w0));
                    for (int ih = h0; ih < h1; ++ih)
                        for (int iw = w0; iw < w1; ++iw) dst[ih * W + iw] += gval;
                }
            }
        }
    }
    return dx;
}

namespace detail {

// Half-pixel-center source coordinate, clamped; returns lower index and the
// interpolation weight toward the upper index.
inline std::pair<int, double> bilinear_coord(int dst, int src_size, int dst_size) {
    const double scale = static_cast<double>(src_size) / dst_size;
    double s = (dst + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    const double max_s = static_cast<double>(src_size - 1);
    if (s > max_s) s = max_s;
    int lo = static_cast<int>(s);
    if (lo > src_size - 1) lo = src_size - 1;
    return {lo, s - lo};
}

}  // namespace detail

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int Ho, int Wo) {
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    if (Ho < 1 || Wo < 1) throw ShapeError("resize_bilinear: target dims must be >= 1");
    if (Ho == H && Wo == W) return x;
    Tensor<T> y = Tensor<T>::zeros4(N, C, Ho, Wo);
    for (int oh = 0; oh < Ho; ++oh) {
        auto [h0, wy] = detail::bilinear_coord(oh, H, Ho);
        const int h1 = std::min(h0 + 1, H - 1);
        for (int ow = 0; ow < Wo; ++ow) {
            auto [w0, wx] = detail::bilinear_coord(ow, W, Wo);
            const int w1 = std::min(w0 + 1, W - 1);
            const T c00 = static_cast<T>((1 - wy) * (1 - wx));
            const T c01 = static_cast<T>((1 - wy) * wx);
            const T c10 = static_cast<T>(wy * (1 - wx));
            const T c11 = static_cast<T>(wy * wx);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const T* src = x.plane(n, c);
                    y.plane(n, c)[oh * Wo + ow] = c00 * src[h0 * W + w0] + c01 * src[h0 * W + w1] +
                                                  c10 * src[h1 * W + w0] + c11 * src[h1 * W + w1];
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& dy, int H, int W) {
    const int N = dy.n(), C = dy.c(), Ho = dy.h(), Wo = dy.w();
    Tensor<T> dx = Tensor<T>::zeros4(N, C, H, W);
    if (Ho == H && Wo == W) {
        dx = dy;
        return dx;
    }
    for (int oh = 0; oh < Ho; ++oh) {
        auto [h0, wy] = detail::bilinear_coord(oh, H, Ho);
        const int h1 = std::min(h0 + 1, H - 1);
        for (int ow = 0; ow < Wo; ++ow) {
            auto [w0, wx] = detail::bilinear_coord(ow, W, Wo);
            const int w1 = std::min(w0 + 1, W - 1);
            const T c00 = static_cast<T>((1 - wy) * (1 - wx));
            const T c01 = static_cast<T>((1 - wy) * wx);
            const T c10 = static_cast<T>(wy * (1 - wx));
            const T c11 = static_cast<T>(wy * wx);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const T g = dy.plane(n, c)[oh * Wo + ow];
                    T* dst = dx.plane(n, c);
                    dst[h0 * W + w0] += c00 * g;
                    dst[h0 * W + w1] += c01 * g;
                    dst[h1 * W + w0] += c10 * g;
                    dst[h1 * W + w1] += c11 * g;
                }
            }
        }
    }
    return dx;
}

// Each destination pixel copies source pixel (floor(dst_h*H/Ho), floor(dst_w*W/Wo)).
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int Ho, int Wo) {
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    if (Ho < 1 || Wo < 1) throw ShapeError("upsample_nearest: target dims must be >= 1");
    Tensor<T> y = Tensor<T>::zeros4(N, C, Ho, Wo);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = x.plane(n, c);
            T* dst = y.plane(n, c);
            for (int oh = 0; oh < Ho; ++oh) {
                const int ih = static_cast<int>(static_cast<std::int64_t>(oh) * H / Ho);
                for (int ow = 0; ow < Wo; ++ow) {
                    const int iw = static_cast<int>(static_cast<std::int64_t>(ow) * W / Wo);
                    dst[oh * Wo + ow] = src[ih * W + iw];
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, int H, int W) {
    const int N = dy.n(), C = dy.c(), Ho = dy.h(), Wo = dy.w();
    Tensor<T> dx = Tensor<T>::zeros4(N, C, H, W);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = dy.plane(n, c);
            T* dst = dx.plane(n, c);
            for (int oh = 0; oh < Ho; ++oh) {
                const int ih = static_cast<int>(static_cast<std::int64_t>(oh) * H / Ho);
                for (int ow = 0; ow < Wo; ++ow) {
                    const int iw = static_cast<int>(static_cast<std::int64_t>(ow) * W / Wo);
                    dst[ih * W + iw] += src[oh * Wo + ow];
                }
            }
        }
    }
    return dx;
}

// Per-channel spatial mean: [N, C, H, W] -> [N, C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    Tensor<T> y = Tensor<T>::zeros2(N, C);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = x.plane(n, c);
            T s = T(0);
            for (int i = 0; i < H * W; ++i) s += src[i];
            y.at(n, c) = s / static_cast<T>(H * W);
        }
    }
    return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int H, int W) {
    const int N = dy.n(), C = dy.d[1];
    Tensor<T> dx = Tensor<T>::zeros4(N, C, H, W);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T g = dy.at(n, c) / static_cast<T>(H * W);
            T* dst = dx.plane(n, c);
            for (int i = 0; i < H * W; ++i) dst[i] = g;
        }
    }
    return dx;
}

// y[N, K] = x[N, D] * W[K, D]^T + b
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const int N = x.n(), D = x.d[1];
    const int K = weight.n(), Dw = weight.d[1];
    if (D != Dw)
        throw ShapeError("linear: input dim " + std::to_string(D) + " != weight dim " +
                         std::to_string(Dw));
    if (bias.size() != static_cast<std::size_t>(K)) throw ShapeError("linear: bias size != K");
    Tensor<T> y = Tensor<T>::zeros2(N, K);
    gemm_nt(y.data(), x.data(), weight.data(), N, D, K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) y.at(n, k) += bias.v[k];
    return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& dy, const Tensor<T>& x, const Tensor<T>& weight,
                          Tensor<T>& dweight, Tensor<T>& dbias) {
    const int N = x.n(), D = x.d[1], K = weight.n();
    // dW[K, D] += dy[N, K]^T * x[N, D]
    gemm_tn(dweight.data(), dy.data(), x.data(), N, K, D);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) dbias.v[k] += dy.at(n, k);
    // dx[N, D] = dy[N, K] * W[K, D]
    Tensor<T> dx = Tensor<T>::zeros2(N, D);
    gemm_nn(dx.data(), dy.data(), weight.data(), N, K, D);
    return dx;
}

// Mean cross-entropy over the batch with max-subtracted softmax.
// Returns {loss, dloss/dlogits}.
template <typename T>
std::pair<double, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits,
                                                   const std::vector<int>& labels) {
    const int N = logits.n(), K = logits.d[1];
    if (static_cast<int>(labels.size()) != N)
        throw ShapeError("softmax_cross_entropy: labels size != batch");
    for (int n = 0; n < N; ++n)
        if (labels[n] < 0 || labels[n] >= K)
            throw ShapeError("softmax_cross_entropy: label out of range");
    Tensor<T> grad = Tensor<T>::zeros2(N, K);
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const T* row = logits.data() + static_cast<std::size_t>(n) * K;
        T mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k] - mx));
        const double log_denom = std::log(denom);
        loss += log_denom - static_cast<double>(row[labels[n]] - mx);
        T* g = grad.data() + static_cast<std::size_t>(n) * K;
        for (int k = 0; k < K; ++k) {
            const double p = std::exp(static_cast<double>(row[k] - mx)) / denom;
            g[k] = static_cast<T>((p - (k == labels[n] ? 1.0 : 0.0)) / N);
        }
    }
    return {loss / N, grad};
}

// One decoupled-weight-decay Adam step over a flat parameter array.
// Decay multiplies the incoming parameter by (1 - lr*wd), separate from the
// bias-corrected moment update. t is 1-based.
template <typename T>
void adamw_step(T* param, const T* grad, T* m, T* v, std::size_t n, double lr, double wd,
                double beta1, double beta2, double eps, std::int64_t t) {
    if (t < 1) throw ShapeError("adamw_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const T decay = static_cast<T>(1.0 - lr * wd);
    for (std::size_t i = 0; i < n; ++i) {
        param[i] *= decay;
        m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * grad[i]);
        v[i] = static_cast<T>(beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
    }
}

// Exact GELU; forward only (used inside the frozen encoder).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& e : y.v)
        e = static_cast<T>(0.5 * static_cast<double>(e) *
                           (1.0 + std::erf(static_cast<double>(e) / 1.4142135623730951)));
    return y;
}

// Row-wise max-subtracted softmax on a [R, C] matrix, in place.
template <typename T>
void softmax_rows(T* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        T* row = x + static_cast<std::size_t>(r) * cols;
        T mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        T denom = T(0);
        for (int c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            denom += row[c];
        }
        for (int c = 0; c < cols; ++c) row[c] /= denom;
    }
}

}  // namespace slca
