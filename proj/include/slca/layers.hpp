#pragma once

#include <string>
#include <vector>

#include "slca/ops.hpp"
#include "slca/rng.hpp"
#include "slca/tensor.hpp"

namespace slca {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    void set(std::string nm, Tensor<T> val, bool train) {
        name = std::move(nm);
        value = std::move(val);
        trainable = train;
        if (trainable) {
            grad = value;
            grad.zero();
        }
    }
};

enum class InitScheme {
    kHeNormal,        // N(0, sqrt(2/fan_in)), classifier-branch convs
    kTruncNormal02,   // truncated N(0, 0.02), encoder projections
};

// Conv -> optional BN -> optional ReLU. BN uses eps 1e-5 and momentum 0.1;
// batch statistics normalize with the biased variance, running statistics
// update with the unbiased one.
template <typename T>
class ConvBlock {
public:
    static constexpr double kBnEps = 1e-5;
    static constexpr double kBnMomentum = 0.1;

    ConvBlock() = default;

    ConvBlock(const std::string& name, int cin, int cout, int k, int stride, int pad, bool bn,
              bool relu_after, Rng& rng, InitScheme scheme = InitScheme::kHeNormal,
              bool trainable = true)
        : stride_(stride), pad_(pad), has_bn_(bn), has_relu_(relu_after) {
        Tensor<T> w = Tensor<T>::zeros({cout, cin, k, k});
        const double fan_in = static_cast<double>(cin) * k * k;
        for (auto& e : w.v)
            e = static_cast<T>(scheme == InitScheme::kHeNormal ? rng.normal(0.0, std::sqrt(2.0 / fan_in))
                                                               : rng.trunc_normal(0.02));
        weight.set(name + ".weight", std::move(w), trainable);
        bias.set(name + ".bias", Tensor<T>::zeros1(cout), trainable);
        if (bn) {
            gamma.set(name + ".bn_gamma", Tensor<T>::full({cout}, T(1)), trainable);
            beta.set(name + ".bn_beta", Tensor<T>::zeros1(cout), trainable);
            running_mean.set(name + ".bn_running_mean", Tensor<T>::zeros1(cout), false);
            running_var.set(name + ".bn_running_var", Tensor<T>::full({cout}, T(1)), false);
        }
        if (!trainable) {
            weight.trainable = bias.trainable = gamma.trainable = beta.trainable = false;
        }
    }

    int out_channels() const { return weight.value.n(); }
    int kernel() const { return weight.value.h(); }
    int stride() const { return stride_; }
    int pad() const { return pad_; }
    bool has_bn() const { return has_bn_; }
    bool has_relu() const { return has_relu_; }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        return run(x, has_bn_, has_relu_, training, training);
    }

    // dy is the gradient at this block's output; returns gradient at its
    // input and accumulates parameter gradients. Valid after a training
    // forward.
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> g = dy;
        if (has_relu_) g = relu_backward(g, cache_out_);
        if (has_bn_) {
            const int N = g.n(), C = g.c(), H = g.h(), W = g.w();
            const std::size_t plane = static_cast<std::size_t>(H) * W;
            const double cnt = static_cast<double>(N) * H * W;
            Tensor<T> dconv = Tensor<T>::zeros4(N, C, H, W);
            for (int c = 0; c < C; ++c) {
                double dbeta_c = 0.0, dgamma_c = 0.0;
                for (int n = 0; n < N; ++n) {
                    const T* gp = g.plane(n, c);
                    const T* xh = cache_xhat_.plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) {
                        dbeta_c += gp[i];
                        dgamma_c += static_cast<double>(gp[i]) * xh[i];
                    }
                }
                beta.grad.v[c] += static_cast<T>(dbeta_c);
                gamma.grad.v[c] += static_cast<T>(dgamma_c);
                const T a = static_cast<T>(static_cast<double>(gamma.value.v[c]) * cache_invstd_[c]);
                const T mean_dy = static_cast<T>(dbeta_c / cnt);
                const T mean_dyxh = static_cast<T>(dgamma_c / cnt);
                for (int n = 0; n < N; ++n) {
                    const T* gp = g.plane(n, c);
                    const T* xh = cache_xhat_.plane(n, c);
                    T* dc = dconv.plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i)
                        dc[i] = a * (gp[i] - mean_dy - xh[i] * mean_dyxh);
                }
            }
            g = std::move(dconv);
        }
        return conv2d_raw_backward(g, cache_in_, weight.value, stride_, pad_, weight.grad, bias.grad);
    }

    void collect(std::vector<Param<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
        if (has_bn_) {
            out.push_back(&gamma);
            out.push_back(&beta);
            out.push_back(&running_mean);
            out.push_back(&running_var);
        }
    }

    Param<T> weight, bias, gamma, beta, running_mean, running_var;

    // Core path shared by the free conv2d op; cache_grads stores the
    // intermediates backward needs.
    Tensor<T> run(const Tensor<T>& x, bool apply_bn, bool apply_relu, bool training,
                  bool cache_grads) {
        if (cache_grads) cache_in_ = x;
        Tensor<T> y = conv2d_raw(x, weight.value, bias.value, stride_, pad_);
        if (apply_bn) {
            const int N = y.n(), C = y.c(), H = y.h(), W = y.w();
            const std::size_t plane = static_cast<std::size_t>(H) * W;
            const double cnt = static_cast<double>(N) * H * W;
            if (cache_grads) {
                cache_invstd_.assign(C, 0.0);
                cache_xhat_ = Tensor<T>::zeros4(N, C, H, W);
            }
            for (int c = 0; c < C; ++c) {
                double mean, invstd;
                if (training) {
                    double s = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const T* p = y.plane(n, c);
                        for (std::size_t i = 0; i < plane; ++i) s += p[i];
                    }
                    mean = s / cnt;
                    double var = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const T* p = y.plane(n, c);
                        for (std::size_t i = 0; i < plane; ++i) {
                            const double d = p[i] - mean;
                            var += d * d;
                        }
                    }
                    var /= cnt;
                    invstd = 1.0 / std::sqrt(var + kBnEps);
                    const double unbiased = cnt > 1.0 ? var * cnt / (cnt - 1.0) : var;
                    running_mean.value.v[c] = static_cast<T>((1.0 - kBnMomentum) * running_mean.value.v[c] +
                                                             kBnMomentum * mean);
                    running_var.value.v[c] = static_cast<T>((1.0 - kBnMomentum) * running_var.value.v[c] +
                                                            kBnMomentum * unbiased);
                } else {
                    mean = running_mean.value.v[c];
                    invstd = 1.0 / std::sqrt(static_cast<double>(running_var.value.v[c]) + kBnEps);
                }
                const T gm = gamma.value.v[c];
                const T bt = beta.value.v[c];
                const T mu = static_cast<T>(mean);
                const T is = static_cast<T>(invstd);
                if (cache_grads) cache_invstd_[c] = invstd;
                for (int n = 0; n < N; ++n) {
                    T* p = y.plane(n, c);
                    T* xh = cache_grads ? cache_xhat_.plane(n, c) : nullptr;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const T norm = (p[i] - mu) * is;
                        if (xh) xh[i] = norm;
                        p[i] = gm * norm + bt;
                    }
                }
            }
        }
        if (apply_relu)
            for (auto& e : y.v) e = e > T(0) ? e : T(0);
        if (cache_grads) cache_out_ = y;
        return y;
    }

private:
    int stride_ = 1, pad_ = 0;
    bool has_bn_ = false, has_relu_ = false;
    Tensor<T> cache_in_, cache_xhat_, cache_out_;
    std::vector<double> cache_invstd_;
};

// The conv block op with explicit BN/ReLU switches. Rejects non-finite input.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, ConvBlock<T>& p, bool apply_bn, bool apply_relu,
                 bool training) {
    if (!x.all_finite()) throw NumericError("conv2d: non-finite input");
    return p.run(x, apply_bn, apply_relu, training, false);
}

template <typename T>
class LinearLayer {
public:
    LinearLayer() = default;

    LinearLayer(const std::string& name, int in_dim, int out_dim, Rng& rng, bool trainable = true) {
        Tensor<T> w = Tensor<T>::zeros2(out_dim, in_dim);
        const double std_ = std::sqrt(1.0 / in_dim);
        for (auto& e : w.v) e = static_cast<T>(rng.normal(0.0, std_));
        weight.set(name + ".weight", std::move(w), trainable);
        bias.set(name + ".bias", Tensor<T>::zeros1(out_dim), trainable);
    }

    Tensor<T> forward(const Tensor<T>& x, bool cache_grads) {
        if (cache_grads) cache_in_ = x;
        return linear(x, weight.value, bias.value);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        return linear_backward(dy, cache_in_, weight.value, weight.grad, bias.grad);
    }

    void collect(std::vector<Param<T>*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    Param<T> weight, bias;

private:
    Tensor<T> cache_in_;
};

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
    for (Param<T>* p : params)
        if (p->trainable) p->grad.zero();
}

}  // namespace slca
