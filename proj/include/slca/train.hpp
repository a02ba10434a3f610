#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "slca/data.hpp"
#include "slca/metrics.hpp"
#include "slca/model.hpp"

namespace slca {

struct HyperParams {
    double lr = 0.0001;
    double weight_decay = 0.005;
    int epochs = 30;
    int batch_size = 32;
    int eval_every = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr < 0.0) throw ShapeError("hyper params: lr must be >= 0");
        if (weight_decay < 0.0) throw ShapeError("hyper params: weight_decay must be >= 0");
        if (epochs < 0) throw ShapeError("hyper params: epochs must be >= 0");
        if (batch_size < 2) throw ShapeError("hyper params: batch_size must be >= 2 (BN)");
        if (eval_every < 1) throw ShapeError("hyper params: eval_every must be >= 1");
    }
};

// Decoupled-weight-decay Adam over a fixed list of trainable parameters.
class AdamW {
public:
    AdamW(std::vector<Param<float>*> params, double lr, double wd, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);
    void step();
    std::int64_t step_count() const { return t_; }

private:
    std::vector<Param<float>*> params_;
    std::vector<std::vector<float>> m_, v_;
    double lr_, wd_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// In-place horizontal/vertical flip of every image in a batch.
void flip_images(Tensor<float>& batch, bool horizontal, bool vertical);

// Lazily computed per-image encoder taps, keyed by (sample index, flip
// code). The encoder is frozen and forward passes are deterministic, so a
// cached tap is bitwise identical to a recomputed one.
class TapCache {
public:
    TapCache(Encoder<float>& encoder, const Dataset& dataset);
    // Assembles the batch tap set for the given samples (flip code bit 0 =
    // horizontal, bit 1 = vertical).
    EncoderTapSet<float> batch_taps(const std::vector<int>& indices,
                                    const std::vector<std::uint8_t>& flips);
    std::size_t entries() const { return cache_.size(); }

private:
    const EncoderTapSet<float>& get(int index, std::uint8_t flip);
    Encoder<float>& encoder_;
    const Dataset& dataset_;
    std::unordered_map<std::uint64_t, EncoderTapSet<float>> cache_;
};

struct EpochMetrics {
    int epoch = 0;
    Metrics train;
    Metrics val;
};

struct ExperimentRecord {
    std::string run_id;
    double fraction = 1.0;
    std::uint64_t model_seed = 0;
    std::uint64_t data_seed = 0;
    std::uint64_t hp_seed = 0;
    std::string variant;
    std::vector<EpochMetrics> history;
    Metrics final_test;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
    std::uint64_t encoder_digest_before = 0;
    std::uint64_t encoder_digest_after = 0;
    std::uint64_t trainable_digest_before = 0;
    std::uint64_t trainable_digest_after = 0;
    bool tap_aliasing = false;
    bool diverged = false;
    // Measured but deliberately left out of record.json so identical runs
    // serialize to identical bytes.
    double wall_seconds = 0.0;
};

struct TrainOptions {
    std::string run_id = "run";
    double fraction = 1.0;
    std::uint64_t data_seed = 0;
    std::ostream* metrics_stream = nullptr;  // one JSON object per line
    std::string best_checkpoint_path;        // written when non-empty
    bool cache_taps = true;
    bool augment_flips = true;
};

Metrics evaluate(Model<float>& model, const Dataset& ds, const std::vector<int>& indices,
                 int batch_size, TapCache* cache);

// Full training loop: seeded shuffling and flip augmentation per epoch,
// AdamW on the trainable branch, per-epoch validation metrics, best-val
// checkpoint retention (ties to the earlier epoch). Train and validation
// indices refer to their own datasets (which may be the same object). On
// completion the model holds the best parameters. A non-finite loss aborts
// the run and returns the partial record with diverged = true.
ExperimentRecord train(Model<float>& model, const Dataset& train_data,
                       const std::vector<int>& train_idx, const Dataset& val_data,
                       const std::vector<int>& val_idx, const HyperParams& hp,
                       const TrainOptions& opt);

}  // namespace slca
