#pragma once

// Ready-made 64-bit gradient checks for the three verification targets: the
// standalone SLCA block, the projector head, and the fully assembled
// slca_projector model. Shared by the unit tests, the CLI, and the
// acceptance suite so every caller runs the identical procedure.
//
// All three targets step with eps 1e-6. BN recenters activations onto the
// ReLU threshold, so a larger step risks kink crossings inside the probe
// interval no matter how the input is chosen (the batch-stat shift from a
// weight perturbation is amplified by BN's inverse std). At 1e-6 a crossing
// is vanishingly rare. Check losses are scaled down so that in exactly
// degenerate directions (a conv bias under BN has identically zero
// gradient) the finite-difference roundoff stays below the 1e-8
// error-floor denominator.

#include <string>

#include "slca/gradcheck.hpp"
#include "slca/model.hpp"

namespace slca {

struct GradSuiteResult {
    std::string target;
    double threshold = 0.0;
    GradReport report;
    bool pass() const { return report.pass(threshold); }
};

inline GradSuiteResult gradcheck_slca_block(const ModelSpec& spec, double corrupt = 0.0) {
    SlcaConfig sc = spec.slca;
    sc.g = std::min(sc.g, spec.encoder.grid());
    sc.out_channels = spec.backbone.stage_channels.front();
    Rng rng(derive_seed(spec.seed, "gradcheck_slca"));
    SlcaBlock<double> blk("slca", spec.encoder.embed_dim, sc, rng);

    const int G = spec.encoder.grid();
    Rng xr(derive_seed(spec.seed, "gradcheck_slca_input"));
    Tensor<double> tap = Tensor<double>::zeros4(2, spec.encoder.embed_dim, G, G);
    for (auto& e : tap.v) e = xr.normal();

    std::vector<Param<double>*> params;
    blk.collect(params);
    WeightedQuadLoss<double> wq(derive_seed(spec.seed, "gradcheck_slca_loss"), 1.0 / 256.0);
    auto loss = [&] { return wq.value(blk.forward(tap, true)); };
    auto loss_grad = [&] {
        Tensor<double> a = blk.forward(tap, true);
        blk.backward(wq.grad(a));
        return wq.value(a);
    };
    GradSuiteResult r{"slca", 1e-4, {}};
    r.report = grad_check<double>(params, loss, loss_grad, 1e-6, 50, spec.seed, corrupt);
    return r;
}

inline GradSuiteResult gradcheck_projector(const ModelSpec& spec, double corrupt = 0.0) {
    ProjectorConfig pc = ProjectorConfig::for_backbone(spec.backbone);
    Rng rng(derive_seed(spec.seed, "gradcheck_projector"));
    Projector<double> proj(spec.encoder.neck_out_dim, pc, rng);

    const int G = spec.encoder.grid();
    Rng xr(derive_seed(spec.seed, "gradcheck_projector_input"));
    Tensor<double> neck = Tensor<double>::zeros4(2, spec.encoder.neck_out_dim, G, G);
    for (auto& e : neck.v) e = xr.normal();

    std::vector<Param<double>*> params;
    proj.collect(params);
    WeightedQuadLoss<double> wq(derive_seed(spec.seed, "gradcheck_projector_loss"), 1.0 / 256.0);
    auto loss = [&] { return wq.value(proj.forward(neck, true)); };
    auto loss_grad = [&] {
        Tensor<double> y = proj.forward(neck, true);
        proj.backward(wq.grad(y));
        return wq.value(y);
    };
    GradSuiteResult r{"projector", 1e-4, {}};
    r.report = grad_check<double>(params, loss, loss_grad, 1e-6, 50, spec.seed, corrupt);
    return r;
}

inline GradSuiteResult gradcheck_full_model(const ModelSpec& spec_in, double corrupt = 0.0) {
    ModelSpec spec = spec_in;
    spec.variant = Variant::kSlcaProjector;
    Model<double> model(spec);

    Rng xr(derive_seed(spec.seed, "gradcheck_full_input"));
    Tensor<double> img = Tensor<double>::zeros4(2, 3, spec.backbone.input_size,
                                                spec.backbone.input_size);
    for (auto& e : img.v) e = xr.uniform(-1.0, 1.0);
    std::vector<int> labels;
    for (int n = 0; n < 2; ++n)
        labels.push_back(static_cast<int>(xr.uniform_int(spec.backbone.num_classes)));

    // Frozen taps are constant under trainable-parameter perturbation.
    EncoderTapSet<double> taps = model.encoder().encode_with_taps(img);
    constexpr double kLossScale = 1.0 / 256.0;

    auto params = model.trainable_branch_params();
    auto loss = [&] {
        return softmax_cross_entropy(model.forward(img, true, &taps), labels).first * kLossScale;
    };
    auto loss_grad = [&] {
        Tensor<double> logits = model.forward(img, true, &taps);
        auto [l, dl] = softmax_cross_entropy(logits, labels);
        for (auto& e : dl.v) e = static_cast<double>(e) * kLossScale;
        model.backward(dl);
        return l * kLossScale;
    };
    GradSuiteResult r{"full", 1e-3, {}};
    r.report = grad_check<double>(params, loss, loss_grad, 1e-6, 50, spec.seed, corrupt);
    return r;
}

}  // namespace slca
