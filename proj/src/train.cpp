#include "slca/train.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "slca/checkpoint.hpp"
#include "slca/ops.hpp"

namespace slca {

AdamW::AdamW(std::vector<Param<float>*> params, double lr, double wd, double beta1, double beta2,
             double eps)
    : params_(std::move(params)), lr_(lr), wd_(wd), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param<float>* p : params_) {
        m_.emplace_back(p->trainable ? p->value.size() : 0, 0.0f);
        v_.emplace_back(p->trainable ? p->value.size() : 0, 0.0f);
    }
}

void AdamW::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Param<float>* p = params_[i];
        if (!p->trainable) continue;
        adamw_step(p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(), p->value.size(),
                   lr_, wd_, beta1_, beta2_, eps_, t_);
    }
}

void flip_images(Tensor<float>& batch, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return;
    const int H = batch.h(), W = batch.w();
    for (int n = 0; n < batch.n(); ++n) {
        for (int c = 0; c < batch.c(); ++c) {
            float* pl = batch.plane(n, c);
            if (horizontal) {
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W / 2; ++x) std::swap(pl[y * W + x], pl[y * W + (W - 1 - x)]);
            }
            if (vertical) {
                for (int y = 0; y < H / 2; ++y)
                    for (int x = 0; x < W; ++x) std::swap(pl[y * W + x], pl[(H - 1 - y) * W + x]);
            }
        }
    }
}

TapCache::TapCache(Encoder<float>& encoder, const Dataset& dataset)
    : encoder_(encoder), dataset_(dataset) {}

const EncoderTapSet<float>& TapCache::get(int index, std::uint8_t flip) {
    const std::uint64_t key = static_cast<std::uint64_t>(index) * 4 + flip;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Tensor<float> img = to_feature_map_one(dataset_, index);
    flip_images(img, flip & 1, flip & 2);
    return cache_.emplace(key, encoder_.encode_with_taps(img)).first->second;
}

EncoderTapSet<float> TapCache::batch_taps(const std::vector<int>& indices,
                                          const std::vector<std::uint8_t>& flips) {
    const int B = static_cast<int>(indices.size());
    EncoderTapSet<float> out;
    for (int i = 0; i < B; ++i) {
        const EncoderTapSet<float>& one = get(indices[i], flips.empty() ? 0 : flips[i]);
        auto append = [&](Tensor<float>& dst, const Tensor<float>& src) {
            if (i == 0) {
                dst = Tensor<float>::zeros4(B, src.c(), src.h(), src.w());
                dst.rank = 4;
            }
            std::copy(src.v.begin(), src.v.end(),
                      dst.v.begin() + static_cast<std::size_t>(i) * src.size());
        };
        append(out.pe, one.pe);
        append(out.t_first, one.t_first);
        append(out.t_mid, one.t_mid);
        append(out.t_last, one.t_last);
        append(out.neck, one.neck);
    }
    return out;
}

namespace {

Tensor<float> gather_batch(const Dataset& ds, const std::vector<int>& indices,
                           const std::vector<std::uint8_t>& flips) {
    Tensor<float> batch = to_feature_map(ds, indices);
    if (flips.empty()) return batch;
    // Flips differ per sample, so apply them one image at a time.
    const std::size_t img_size = batch.size() / indices.size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (!flips[i]) continue;
        Tensor<float> one = Tensor<float>::zeros4(1, batch.c(), batch.h(), batch.w());
        std::copy_n(batch.v.begin() + i * img_size, img_size, one.v.begin());
        flip_images(one, flips[i] & 1, flips[i] & 2);
        std::copy_n(one.v.begin(), img_size, batch.v.begin() + i * img_size);
    }
    return batch;
}

void emit_metrics_line(std::ostream* os, const std::string& run_id, int epoch,
                       const char* split, const Metrics& m) {
    if (!os) return;
    nlohmann::json j;
    j["run"] = run_id;
    j["epoch"] = epoch;
    j["split"] = split;
    j["accuracy"] = m.accuracy;
    j["auc"] = m.auc_macro_ovr;
    j["loss"] = m.loss;
    (*os) << j.dump() << "\n";
}

}  // namespace

Metrics evaluate(Model<float>& model, const Dataset& ds, const std::vector<int>& indices,
                 int batch_size, TapCache* cache) {
    const int N = static_cast<int>(indices.size());
    const int K = model.spec().backbone.num_classes;
    Tensor<float> all_logits = Tensor<float>::zeros2(N, K);
    std::vector<int> all_labels(N);
    double loss_sum = 0.0;
    for (int start = 0; start < N; start += batch_size) {
        const int bsz = std::min(batch_size, N - start);
        std::vector<int> batch_idx(indices.begin() + start, indices.begin() + start + bsz);
        std::vector<std::uint8_t> flips;  // no augmentation at eval time
        Tensor<float> images = gather_batch(ds, batch_idx, flips);
        Tensor<float> logits;
        if (model.uses_taps() && cache) {
            EncoderTapSet<float> taps = cache->batch_taps(batch_idx, flips);
            logits = model.forward(images, false, &taps);
        } else {
            logits = model.forward(images, false);
        }
        std::vector<int> labels(bsz);
        for (int i = 0; i < bsz; ++i) labels[i] = ds.labels[batch_idx[i]];
        auto [loss, grad] = softmax_cross_entropy(logits, labels);
        loss_sum += loss * bsz;
        for (int i = 0; i < bsz; ++i) {
            all_labels[start + i] = labels[i];
            for (int k = 0; k < K; ++k) all_logits.at(start + i, k) = logits.at(i, k);
        }
    }
    Metrics m;
    m.loss = loss_sum / N;
    m.accuracy = accuracy(all_logits, all_labels);
    m.auc_macro_ovr = auc_macro_ovr(all_logits, all_labels);
    return m;
}

ExperimentRecord train(Model<float>& model, const Dataset& train_data,
                       const std::vector<int>& train_idx, const Dataset& val_data,
                       const std::vector<int>& val_idx, const HyperParams& hp,
                       const TrainOptions& opt) {
    hp.validate();
    if (train_idx.empty() || val_idx.empty())
        throw ShapeError("train: train and val sets must be non-empty");
    const auto t_start = std::chrono::steady_clock::now();

    ExperimentRecord rec;
    rec.run_id = opt.run_id;
    rec.fraction = opt.fraction;
    rec.model_seed = model.spec().seed;
    rec.data_seed = opt.data_seed;
    rec.hp_seed = hp.seed;
    rec.variant = to_string(model.spec().variant);
    rec.tap_aliasing = model.spec().encoder.taps_alias();
    rec.encoder_digest_before = model.encoder_digest();
    rec.trainable_digest_before = model.trainable_digest();

    auto params = model.trainable_branch_params();
    AdamW opt_state(params, hp.lr, hp.weight_decay);
    std::unique_ptr<TapCache> train_cache, val_cache_own;
    TapCache* val_cache = nullptr;
    if (model.uses_taps() && opt.cache_taps) {
        train_cache = std::make_unique<TapCache>(model.encoder(), train_data);
        if (&val_data == &train_data) {
            val_cache = train_cache.get();
        } else {
            val_cache_own = std::make_unique<TapCache>(model.encoder(), val_data);
            val_cache = val_cache_own.get();
        }
    }

    const int K = model.spec().backbone.num_classes;

    // Best-checkpoint snapshot over all parameters (running stats included).
    auto all_params = model.all_params();
    std::vector<Tensor<float>> best_values;
    auto snapshot = [&] {
        best_values.clear();
        for (Param<float>* p : all_params) best_values.push_back(p->value);
    };
    auto restore = [&] {
        for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best_values[i];
    };

    rec.best_epoch = 0;
    rec.best_val_accuracy = -1.0;

    if (hp.epochs == 0) {
        Metrics m0 = evaluate(model, val_data, val_idx, hp.batch_size, val_cache);
        rec.best_epoch = 0;
        rec.best_val_accuracy = m0.accuracy;
        rec.final_test = m0;
        snapshot();
    }

    for (int epoch = 1; epoch <= hp.epochs && !rec.diverged; ++epoch) {
        Rng erng(derive_seed(hp.seed, "epoch_" + std::to_string(epoch)));
        std::vector<int> order = train_idx;
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[erng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
        std::vector<std::uint8_t> flips(order.size(), 0);
        if (opt.augment_flips)
            for (auto& f : flips) f = static_cast<std::uint8_t>(erng.uniform_int(4));

        const int N = static_cast<int>(order.size());
        Tensor<float> epoch_logits = Tensor<float>::zeros2(N, K);
        std::vector<int> epoch_labels(N);
        double train_loss_sum = 0.0;
        int trained = 0;

        for (int start = 0; start < N; start += hp.batch_size) {
            const int bsz = std::min(hp.batch_size, N - start);
            if (bsz < 2) break;  // BN needs batch statistics
            std::vector<int> batch_idx(order.begin() + start, order.begin() + start + bsz);
            std::vector<std::uint8_t> batch_flips(flips.begin() + start,
                                                  flips.begin() + start + bsz);
            if (!opt.augment_flips) batch_flips.clear();
            Tensor<float> images = gather_batch(train_data, batch_idx, batch_flips);
            std::vector<int> labels(bsz);
            for (int i = 0; i < bsz; ++i) labels[i] = train_data.labels[batch_idx[i]];

            Tensor<float> logits;
            if (model.uses_taps() && train_cache) {
                EncoderTapSet<float> taps = train_cache->batch_taps(batch_idx, batch_flips);
                logits = model.forward(images, true, &taps);
            } else {
                logits = model.forward(images, true);
            }
            auto [loss, dlogits] = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(loss)) {
                rec.diverged = true;
                break;
            }
            zero_grads(params);
            model.backward(dlogits);
            opt_state.step();

            train_loss_sum += loss * bsz;
            for (int i = 0; i < bsz; ++i) {
                epoch_labels[trained + i] = labels[i];
                for (int k = 0; k < K; ++k) epoch_logits.at(trained + i, k) = logits.at(i, k);
            }
            trained += bsz;
        }
        if (rec.diverged) break;

        if (epoch % hp.eval_every == 0 || epoch == hp.epochs) {
            EpochMetrics em;
            em.epoch = epoch;
            Tensor<float> seen = Tensor<float>::zeros2(trained, K);
            std::copy_n(epoch_logits.v.begin(), static_cast<std::size_t>(trained) * K,
                        seen.v.begin());
            std::vector<int> seen_labels(epoch_labels.begin(), epoch_labels.begin() + trained);
            em.train.loss = train_loss_sum / std::max(1, trained);
            em.train.accuracy = accuracy(seen, seen_labels);
            em.train.auc_macro_ovr = auc_macro_ovr(seen, seen_labels);
            em.val = evaluate(model, val_data, val_idx, hp.batch_size, val_cache);
            rec.history.push_back(em);
            emit_metrics_line(opt.metrics_stream, opt.run_id, epoch, "train", em.train);
            emit_metrics_line(opt.metrics_stream, opt.run_id, epoch, "val", em.val);

            if (em.val.accuracy > rec.best_val_accuracy) {
                rec.best_val_accuracy = em.val.accuracy;
                rec.best_epoch = epoch;
                snapshot();
            }
        }
    }

    if (best_values.empty()) snapshot();  // diverged before any eval
    restore();
    rec.final_test = evaluate(model, val_data, val_idx, hp.batch_size, val_cache);

    if (!opt.best_checkpoint_path.empty()) save_checkpoint(all_params, opt.best_checkpoint_path);

    rec.encoder_digest_after = model.encoder_digest();
    rec.trainable_digest_after = model.trainable_digest();
    if (rec.encoder_digest_after != rec.encoder_digest_before)
        throw NumericError("train: frozen-encoder contract violated (digest changed)");
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rec;
}

}  // namespace slca
