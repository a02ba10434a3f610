#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "slca/errors.hpp"
#include "slca/layers.hpp"
#include "slca/rng.hpp"

namespace slca {

struct GradReport {
    struct Entry {
        std::string name;
        double max_rel_error = 0.0;
        int checked = 0;
    };
    std::vector<Entry> per_param;
    double global_max_rel_error = 0.0;
    long long params_checked = 0;

    bool pass(double threshold) const { return global_max_rel_error < threshold; }
};

// Scalar check loss mean(0.5 * w_i * y_i^2) with fixed per-position weights
// drawn from [0.5, 1.5). A uniform quadratic is blind to anything upstream
// of a freshly initialized BN (the normalized per-channel moments are fixed),
// so the weights are required to make those gradients observable. The loss
// is C1 at ReLU kinks, which keeps central differences honest there, and the
// mean reduction keeps its magnitude small enough that roundoff in exactly
// degenerate directions (a conv bias under BN) stays below the 1e-8 error
// floor.
template <typename T>
class WeightedQuadLoss {
public:
    explicit WeightedQuadLoss(std::uint64_t seed, double scale = 1.0) : seed_(seed), scale_(scale) {}

    double value(const Tensor<T>& y) {
        ensure(y);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            s += 0.5 * weights_[i] * static_cast<double>(y.v[i]) * static_cast<double>(y.v[i]);
        return s * scale_ / static_cast<double>(y.size());
    }

    Tensor<T> grad(const Tensor<T>& y) {
        ensure(y);
        Tensor<T> g = y;
        for (std::size_t i = 0; i < g.size(); ++i)
            g.v[i] = static_cast<T>(weights_[i] * static_cast<double>(y.v[i]) * scale_ /
                                    static_cast<double>(y.size()));
        return g;
    }

private:
    void ensure(const Tensor<T>& y) {
        if (weights_.size() == y.size()) return;
        Rng rng(derive_seed(seed_, "wquad"));
        weights_.resize(y.size());
        for (auto& w : weights_) w = 0.5 + rng.uniform();
    }
    std::uint64_t seed_;
    double scale_;
    std::vector<double> weights_;
};

// Central-difference check of analytic parameter gradients on a scalar loss.
// loss_fn runs the forward alone; loss_and_grad_fn additionally accumulates
// gradients into each trainable Param's grad tensor (which this function
// zeroes first). Per-entry step is eps_rel * max(1, |theta|). Tensors larger
// than sample_per_tensor are spot-checked on a seeded sample of entries;
// non-trainable parameters are excluded entirely.
template <typename T>
GradReport grad_check(const std::vector<Param<T>*>& params, const std::function<double()>& loss_fn,
                      const std::function<double()>& loss_and_grad_fn, double eps_rel = 1e-3,
                      int sample_per_tensor = 50, std::uint64_t seed = 0,
                      double corrupt_injection = 0.0) {
    for (Param<T>* p : params)
        if (p->trainable) p->grad.zero();
    const double base_loss = loss_and_grad_fn();
    if (!std::isfinite(base_loss)) throw NumericError("grad_check: non-finite loss");

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Param<T>* p : params) {
        std::vector<double> g;
        if (p->trainable) {
            g.resize(p->grad.size());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(p->grad.v[i]);
            if (corrupt_injection != 0.0 && !g.empty()) g[0] += corrupt_injection;
        }
        analytic.push_back(std::move(g));
    }

    GradReport report;
    Rng rng(derive_seed(seed, "grad_check_sampling"));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param<T>* p = params[pi];
        if (!p->trainable) continue;
        const std::size_t n = p->value.size();
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        if (n > static_cast<std::size_t>(sample_per_tensor)) {
            for (int i = 0; i < sample_per_tensor; ++i)
                std::swap(idx[i], idx[i + rng.uniform_int(n - i)]);
            idx.resize(sample_per_tensor);
        }

        GradReport::Entry entry{p->name, 0.0, static_cast<int>(idx.size())};
        for (std::size_t i : idx) {
            const T orig = p->value.v[i];
            const double h = eps_rel * std::max(1.0, std::abs(static_cast<double>(orig)));
            p->value.v[i] = static_cast<T>(orig + h);
            const double lp = loss_fn();
            p->value.v[i] = static_cast<T>(orig - h);
            const double lm = loss_fn();
            p->value.v[i] = orig;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("grad_check: non-finite loss during perturbation");
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
        }
        report.params_checked += entry.checked;
        report.global_max_rel_error = std::max(report.global_max_rel_error, entry.max_rel_error);
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace slca
