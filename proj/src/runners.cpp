#include "slca/runners.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "slca/digest.hpp"

namespace slca {

std::vector<ExperimentRecord> run_grid(const Dataset& train_ds, const Dataset& test_ds,
                                       const std::vector<RunRequest>& requests, int workers) {
    std::vector<ExperimentRecord> records(requests.size());
    std::vector<std::string> errors(requests.size());
    std::atomic<std::size_t> next{0};
    std::vector<int> test_idx(test_ds.num_samples);
    for (std::uint32_t i = 0; i < test_ds.num_samples; ++i) test_idx[i] = static_cast<int>(i);

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            const RunRequest& rq = requests[i];
            try {
                Model<float> model(rq.spec);
                std::vector<int> train_idx = stratified_fraction(train_ds, rq.fraction, rq.data_seed);
                TrainOptions opt;
                opt.run_id = rq.run_id;
                opt.fraction = rq.fraction;
                opt.data_seed = rq.data_seed;
                records[i] = train(model, train_ds, train_idx, test_ds, test_idx, rq.hp, opt);
                std::fprintf(stderr, "[run] %s: acc %.4f auc %.4f (%.0f s)\n",
                             rq.run_id.c_str(), records[i].final_test.accuracy,
                             records[i].final_test.auc_macro_ovr, records[i].wall_seconds);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(requests.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw NumericError("run " + requests[i].run_id + " failed: " + errors[i]);
    return records;
}

CellStat aggregate(const std::vector<const ExperimentRecord*>& records) {
    CellStat s;
    s.n = static_cast<int>(records.size());
    if (s.n == 0) return s;
    for (const ExperimentRecord* r : records) {
        s.mean_acc += r->final_test.accuracy;
        s.mean_auc += r->final_test.auc_macro_ovr;
    }
    s.mean_acc /= s.n;
    s.mean_auc /= s.n;
    if (s.n > 1) {
        double va = 0.0, vu = 0.0;
        for (const ExperimentRecord* r : records) {
            va += (r->final_test.accuracy - s.mean_acc) * (r->final_test.accuracy - s.mean_acc);
            vu += (r->final_test.auc_macro_ovr - s.mean_auc) *
                  (r->final_test.auc_macro_ovr - s.mean_auc);
        }
        s.std_acc = std::sqrt(va / (s.n - 1));
        s.std_auc = std::sqrt(vu / (s.n - 1));
    }
    return s;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"auc", m.auc_macro_ovr}, {"loss", m.loss}};
}

nlohmann::json stat_json(const CellStat& s) {
    return {{"mean_acc", s.mean_acc}, {"std_acc", s.std_acc}, {"mean_auc", s.mean_auc},
            {"std_auc", s.std_auc},   {"runs", s.n}};
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::vector<RunRequest> make_requests(const ModelSpec& spec, const HyperParams& hp,
                                      const std::vector<std::uint64_t>& seeds, double fraction,
                                      std::uint64_t data_seed, const std::string& tag) {
    std::vector<RunRequest> reqs;
    for (std::uint64_t seed : seeds) {
        RunRequest rq;
        rq.spec = spec;
        rq.spec.seed = seed;
        rq.hp = hp;
        rq.hp.seed = seed;
        rq.fraction = fraction;
        rq.data_seed = data_seed;
        rq.run_id = tag + "_f" + fmt(fraction, 2) + "_s" + std::to_string(seed);
        reqs.push_back(std::move(rq));
    }
    return reqs;
}

std::vector<ExperimentRecord> slice(std::vector<ExperimentRecord>& all, std::size_t start,
                                    std::size_t count) {
    return {all.begin() + start, all.begin() + start + count};
}

CellStat stat_of(const std::vector<ExperimentRecord>& runs) {
    std::vector<const ExperimentRecord*> ptrs;
    for (const auto& r : runs) ptrs.push_back(&r);
    return aggregate(ptrs);
}

}  // namespace

nlohmann::json record_to_json(const ExperimentRecord& rec) {
    nlohmann::json j;
    j["run_id"] = rec.run_id;
    j["variant"] = rec.variant;
    j["fraction"] = rec.fraction;
    j["model_seed"] = rec.model_seed;
    j["data_seed"] = rec.data_seed;
    j["hp_seed"] = rec.hp_seed;
    j["history"] = nlohmann::json::array();
    for (const EpochMetrics& em : rec.history) {
        j["history"].push_back({{"epoch", em.epoch},
                                {"train", metrics_json(em.train)},
                                {"val", metrics_json(em.val)}});
    }
    j["final_test"] = metrics_json(rec.final_test);
    j["best_epoch"] = rec.best_epoch;
    j["best_val_accuracy"] = rec.best_val_accuracy;
    j["encoder_digest_before"] = digest_hex(rec.encoder_digest_before);
    j["encoder_digest_after"] = digest_hex(rec.encoder_digest_after);
    j["trainable_digest_before"] = digest_hex(rec.trainable_digest_before);
    j["trainable_digest_after"] = digest_hex(rec.trainable_digest_after);
    j["tap_aliasing"] = rec.tap_aliasing;
    j["diverged"] = rec.diverged;
    return j;
}

nlohmann::json AblationResult::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const AblationRow& row : rows) {
        nlohmann::json r;
        r["variant"] = row.variant;
        r["stat"] = stat_json(row.stat);
        r["per_seed_accuracy"] = nlohmann::json::array();
        for (const auto& rec : row.runs) r["per_seed_accuracy"].push_back(rec.final_test.accuracy);
        rows_json.push_back(std::move(r));
    }
    return {{"table", "fusion_ablation"}, {"rows", rows_json}};
}

std::string AblationResult::to_markdown() const {
    std::string md = "| Method | Acc | AUC |\n|---|---|---|\n";
    for (const AblationRow& row : rows) {
        std::string label = "backbone";
        if (row.variant == "add_no_attention") label = "backbone + add (no attention)";
        if (row.variant == "sigmoid_only") label = "backbone + sigmoid";
        if (row.variant == "slca") label = "backbone + SLCA";
        if (row.variant == "slca_projector") label = "backbone + SLCA + projector head";
        md += "| " + label + " | " + fmt(100.0 * row.stat.mean_acc, 2) + " ± " +
              fmt(100.0 * row.stat.std_acc, 2) + " | " + fmt(100.0 * row.stat.mean_auc, 2) +
              " ± " + fmt(100.0 * row.stat.std_auc, 2) + " |\n";
    }
    return md;
}

AblationResult run_ablation(const ModelSpec& base, const HyperParams& hp, const Dataset& train_ds,
                            const Dataset& test_ds, const std::vector<std::uint64_t>& seeds,
                            std::uint64_t data_seed, int workers) {
    const std::vector<Variant> variants = {Variant::kBaseline, Variant::kAddNoAttention,
                                           Variant::kSigmoidOnly, Variant::kSlca,
                                           Variant::kSlcaProjector};
    std::vector<RunRequest> reqs;
    for (Variant v : variants) {
        ModelSpec spec = base;
        spec.variant = v;
        auto batch = make_requests(spec, hp, seeds, 1.0, data_seed, to_string(v));
        reqs.insert(reqs.end(), batch.begin(), batch.end());
    }
    std::vector<ExperimentRecord> all = run_grid(train_ds, test_ds, reqs, workers);

    AblationResult result;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        AblationRow row;
        row.variant = to_string(variants[vi]);
        row.runs = slice(all, vi * seeds.size(), seeds.size());
        row.stat = stat_of(row.runs);
        result.rows.push_back(std::move(row));
    }
    return result;
}

const FractionCell& FractionSweepResult::cell(const std::string& variant, double fraction) const {
    for (const FractionCell& c : cells)
        if (c.variant == variant && std::abs(c.fraction - fraction) < 1e-12) return c;
    throw ShapeError("fraction sweep: no cell for " + variant + " at " + std::to_string(fraction));
}

double FractionSweepResult::improvement(double fraction) const {
    return cell(variants[0], fraction).stat.mean_acc - cell("baseline", fraction).stat.mean_acc;
}

nlohmann::json FractionSweepResult::to_json() const {
    nlohmann::json cells_json = nlohmann::json::array();
    for (const FractionCell& c : cells) {
        nlohmann::json r;
        r["variant"] = c.variant;
        r["fraction"] = c.fraction;
        r["stat"] = stat_json(c.stat);
        r["per_seed_accuracy"] = nlohmann::json::array();
        for (const auto& rec : c.runs) r["per_seed_accuracy"].push_back(rec.final_test.accuracy);
        cells_json.push_back(std::move(r));
    }
    nlohmann::json improvements = nlohmann::json::array();
    for (double f : fractions)
        improvements.push_back({{"fraction", f}, {"acc_improvement", improvement(f)}});
    return {{"table", "fraction_sweep"}, {"cells", cells_json}, {"improvement", improvements}};
}

std::string FractionSweepResult::to_markdown() const {
    std::string md = "| Method |";
    for (double f : fractions) md += " " + fmt(100.0 * f, 0) + "% Acc | " + fmt(100.0 * f, 0) + "% AUC |";
    md += "\n|---|";
    for (std::size_t i = 0; i < fractions.size() * 2; ++i) md += "---|";
    md += "\n";
    for (const std::string& v : variants) {
        md += "| " + v + " |";
        for (double f : fractions) {
            const FractionCell& c = cell(v, f);
            md += " " + fmt(100.0 * c.stat.mean_acc, 2) + " ± " + fmt(100.0 * c.stat.std_acc, 2) +
                  " | " + fmt(100.0 * c.stat.mean_auc, 2) + " ± " + fmt(100.0 * c.stat.std_auc, 2) +
                  " |";
        }
        md += "\n";
    }
    md += "| improvement (Acc) |";
    for (double f : fractions) md += " " + fmt(100.0 * improvement(f), 2) + " | |";
    md += "\n";
    return md;
}

FractionSweepResult run_fraction_sweep(const ModelSpec& base, const HyperParams& hp,
                                       const Dataset& train_ds, const Dataset& test_ds,
                                       const std::vector<double>& fractions,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::uint64_t data_seed, int workers) {
    FractionSweepResult result;
    result.fractions = fractions;
    result.variants = {to_string(base.variant), "baseline"};

    std::vector<RunRequest> reqs;
    for (const std::string& vname : result.variants) {
        ModelSpec spec = base;
        spec.variant = variant_from_string(vname);
        for (double f : fractions) {
            auto batch = make_requests(spec, hp, seeds, f, data_seed, vname);
            reqs.insert(reqs.end(), batch.begin(), batch.end());
        }
    }
    std::vector<ExperimentRecord> all = run_grid(train_ds, test_ds, reqs, workers);

    std::size_t cursor = 0;
    for (const std::string& vname : result.variants) {
        for (double f : fractions) {
            FractionCell c;
            c.variant = vname;
            c.fraction = f;
            c.runs = slice(all, cursor, seeds.size());
            cursor += seeds.size();
            c.stat = stat_of(c.runs);
            result.cells.push_back(std::move(c));
        }
    }
    return result;
}

nlohmann::json BlockAblationResult::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const BlockAblationRow& row : rows) {
        nlohmann::json r;
        r["label"] = row.label;
        r["tap_assignment"] = row.assignment;
        r["stat"] = stat_json(row.stat);
        rows_json.push_back(std::move(r));
    }
    return {{"table", "block_ablation"}, {"rows", rows_json}};
}

std::string BlockAblationResult::to_markdown() const {
    std::string md = "| Taps | Acc | AUC |\n|---|---|---|\n";
    for (const BlockAblationRow& row : rows)
        md += "| " + row.label + " | " + fmt(100.0 * row.stat.mean_acc, 2) + " ± " +
              fmt(100.0 * row.stat.std_acc, 2) + " | " + fmt(100.0 * row.stat.mean_auc, 2) +
              " ± " + fmt(100.0 * row.stat.std_auc, 2) + " |\n";
    return md;
}

BlockAblationResult run_block_ablation(const ModelSpec& base, const HyperParams& hp,
                                       const Dataset& train_ds, const Dataset& test_ds,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::uint64_t data_seed, int workers) {
    const int points = base.backbone.num_injection_points();
    std::vector<std::pair<std::string, std::vector<std::string>>> assignments;
    for (const std::string& tap : tap_names())
        assignments.emplace_back("all five from " + tap,
                                 std::vector<std::string>(points, tap));
    assignments.emplace_back("mixed (pe, first, mid, last, neck)", base.tap_assignment);

    std::vector<RunRequest> reqs;
    for (std::size_t a = 0; a < assignments.size(); ++a) {
        ModelSpec spec = base;
        spec.variant = Variant::kSlca;
        spec.tap_assignment = assignments[a].second;
        auto batch = make_requests(spec, hp, seeds, 1.0, data_seed, "taps" + std::to_string(a));
        reqs.insert(reqs.end(), batch.begin(), batch.end());
    }
    std::vector<ExperimentRecord> all = run_grid(train_ds, test_ds, reqs, workers);

    BlockAblationResult result;
    for (std::size_t a = 0; a < assignments.size(); ++a) {
        BlockAblationRow row;
        row.label = assignments[a].first;
        row.assignment = assignments[a].second;
        row.runs = slice(all, a * seeds.size(), seeds.size());
        row.stat = stat_of(row.runs);
        result.rows.push_back(std::move(row));
    }
    return result;
}

}  // namespace slca
