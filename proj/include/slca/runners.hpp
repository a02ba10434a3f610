#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "slca/train.hpp"

namespace slca {

struct RunRequest {
    ModelSpec spec;
    HyperParams hp;
    double fraction = 1.0;
    std::uint64_t data_seed = 0;
    std::string run_id;
};

// Executes independent runs, optionally on parallel workers. Each run owns
// its model and tap cache, so results do not depend on worker count or
// scheduling; the output order matches the request order.
std::vector<ExperimentRecord> run_grid(const Dataset& train_ds, const Dataset& test_ds,
                                       const std::vector<RunRequest>& requests, int workers = 1);

struct CellStat {
    double mean_acc = 0.0, std_acc = 0.0;
    double mean_auc = 0.0, std_auc = 0.0;
    int n = 0;
};

CellStat aggregate(const std::vector<const ExperimentRecord*>& records);

nlohmann::json record_to_json(const ExperimentRecord& rec);

struct AblationRow {
    std::string variant;
    CellStat stat;
    std::vector<ExperimentRecord> runs;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

// One row per fusion variant (baseline, add_no_attention, sigmoid_only,
// slca, slca_projector) at the full data fraction, identical data and
// hyperparameters across rows.
AblationResult run_ablation(const ModelSpec& base, const HyperParams& hp, const Dataset& train_ds,
                            const Dataset& test_ds, const std::vector<std::uint64_t>& seeds,
                            std::uint64_t data_seed, int workers = 1);

struct FractionCell {
    std::string variant;
    double fraction = 1.0;
    CellStat stat;
    std::vector<ExperimentRecord> runs;
};

struct FractionSweepResult {
    std::vector<double> fractions;
    std::vector<std::string> variants;  // [variant, baseline]
    std::vector<FractionCell> cells;

    const FractionCell& cell(const std::string& variant, double fraction) const;
    double improvement(double fraction) const;  // variant mean acc - baseline mean acc
    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

// Trains the spec's variant and the baseline over nested data fractions.
FractionSweepResult run_fraction_sweep(const ModelSpec& base, const HyperParams& hp,
                                       const Dataset& train_ds, const Dataset& test_ds,
                                       const std::vector<double>& fractions,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::uint64_t data_seed, int workers = 1);

struct BlockAblationRow {
    std::string label;
    std::vector<std::string> assignment;
    CellStat stat;
    std::vector<ExperimentRecord> runs;
};

struct BlockAblationResult {
    std::vector<BlockAblationRow> rows;
    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

// Five single-tap assignments (one tap name repeated at every injection
// point) plus the mixed default assignment, slca variant throughout.
BlockAblationResult run_block_ablation(const ModelSpec& base, const HyperParams& hp,
                                       const Dataset& train_ds, const Dataset& test_ds,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::uint64_t data_seed, int workers = 1);

}  // namespace slca
