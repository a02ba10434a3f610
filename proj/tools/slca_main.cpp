// Command-line surface: dataset generation, training runs, ablation tables,
// gradient checks, and attention-map export.
//
// Exit codes: 0 success, 1 I/O failure, 2 usage or config error,
//             3 numeric divergence, 4 gradient-check failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "slca/checkpoint.hpp"
#include "slca/config.hpp"
#include "slca/digest.hpp"
#include "slca/gradcheck_suite.hpp"
#include "slca/pgm.hpp"
#include "slca/runners.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitGradFail = 4;

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slca;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path);
    f << text;
    if (!f) throw IoError("write failed for " + path);
}

int cmd_gen_data(const std::string& out, int n, int size, int classes, std::uint64_t seed) {
    Dataset ds = generate_dataset(n, size, classes, seed);
    if (!out.empty() && fs::path(out).has_parent_path())
        fs::create_directories(fs::path(out).parent_path());
    save_dataset(ds, out);
    std::cout << "wrote " << out << " (" << n << " samples, " << size << "x" << size << ", "
              << classes << " classes)\n";
    std::cout << "digest " << digest_hex(ds.content_digest()) << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path) {
    RunConfig cfg = parse_run_config(load_json_file(config_path), /*require_data=*/true);
    Dataset train_ds = load_dataset(cfg.train_path);
    Dataset test_ds = load_dataset(cfg.test_path);
    fs::create_directories(cfg.out_dir);

    Model<float> model(cfg.model);
    std::vector<int> train_idx = stratified_fraction(train_ds, cfg.fraction, cfg.data_seed);
    std::vector<int> test_idx(test_ds.num_samples);
    for (std::uint32_t i = 0; i < test_ds.num_samples; ++i) test_idx[i] = static_cast<int>(i);

    std::ostringstream metrics;
    TrainOptions opt;
    opt.run_id = to_string(cfg.model.variant) + "_s" + std::to_string(cfg.model.seed);
    opt.fraction = cfg.fraction;
    opt.data_seed = cfg.data_seed;
    opt.metrics_stream = &metrics;
    opt.best_checkpoint_path = (fs::path(cfg.out_dir) / "best.ckpt").string();

    ExperimentRecord rec = train(model, train_ds, train_idx, test_ds, test_idx, cfg.hyper, opt);

    write_text((fs::path(cfg.out_dir) / "metrics.jsonl").string(), metrics.str());
    write_text((fs::path(cfg.out_dir) / "record.json").string(), record_to_json(rec).dump(2) + "\n");

    std::cout << "run " << rec.run_id << ": best val acc " << rec.best_val_accuracy << " at epoch "
              << rec.best_epoch << ", final acc " << rec.final_test.accuracy << ", auc "
              << rec.final_test.auc_macro_ovr << "\n";
    std::cout << "encoder digest " << digest_hex(rec.encoder_digest_before)
              << (rec.encoder_digest_before == rec.encoder_digest_after ? " (frozen ok)"
                                                                        : " (FROZEN VIOLATED)")
              << "\n";
    std::cout << "wall seconds " << rec.wall_seconds << "\n";
    if (rec.diverged) {
        std::cerr << "training diverged (non-finite loss); partial record written\n";
        return kExitDiverged;
    }
    if (rec.encoder_digest_before != rec.encoder_digest_after) {
        std::cerr << "frozen-encoder contract violated\n";
        return kExitDiverged;
    }
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& mode, int workers_override) {
    RunConfig cfg = parse_run_config(load_json_file(config_path), /*require_data=*/true);
    if (workers_override > 0) cfg.workers = workers_override;
    Dataset train_ds = load_dataset(cfg.train_path);
    Dataset test_ds = load_dataset(cfg.test_path);
    fs::create_directories(cfg.out_dir);

    json table;
    std::string md;
    if (mode == "fusion") {
        AblationResult res = run_ablation(cfg.model, cfg.hyper, train_ds, test_ds, cfg.seeds,
                                          cfg.data_seed, cfg.workers);
        table = res.to_json();
        md = res.to_markdown();
    } else if (mode == "blocks") {
        BlockAblationResult res = run_block_ablation(cfg.model, cfg.hyper, train_ds, test_ds,
                                                     cfg.seeds, cfg.data_seed, cfg.workers);
        table = res.to_json();
        md = res.to_markdown();
    } else if (mode == "fractions") {
        FractionSweepResult res = run_fraction_sweep(cfg.model, cfg.hyper, train_ds, test_ds,
                                                     cfg.fractions, cfg.seeds, cfg.data_seed,
                                                     cfg.workers);
        table = res.to_json();
        md = res.to_markdown();
    } else {
        std::cerr << "unknown ablate mode: " << mode << "\n";
        return kExitConfig;
    }
    write_text((fs::path(cfg.out_dir) / ("table_" + mode + ".json")).string(),
               table.dump(2) + "\n");
    write_text((fs::path(cfg.out_dir) / ("table_" + mode + ".md")).string(), md);
    std::cout << md;
    return kExitOk;
}

json report_json(const GradSuiteResult& r) {
    json per = json::array();
    for (const auto& e : r.report.per_param)
        per.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}, {"checked", e.checked}});
    return {{"target", r.target},
            {"threshold", r.threshold},
            {"global_max_rel_error", r.report.global_max_rel_error},
            {"params_checked", r.report.params_checked},
            {"pass", r.pass()},
            {"per_param", per}};
}

int cmd_gradcheck(const std::string& config_path, const std::string& block, double corrupt) {
    RunConfig cfg = parse_run_config(load_json_file(config_path), /*require_data=*/false);
    fs::create_directories(cfg.out_dir);

    std::vector<GradSuiteResult> results;
    if (block == "slca" || block == "all") results.push_back(gradcheck_slca_block(cfg.model, corrupt));
    if (block == "projector" || block == "all")
        results.push_back(gradcheck_projector(cfg.model, corrupt));
    if (block == "full" || block == "all") results.push_back(gradcheck_full_model(cfg.model, corrupt));
    if (results.empty()) {
        std::cerr << "unknown gradcheck block: " << block << "\n";
        return kExitConfig;
    }

    json out = json::array();
    bool all_pass = true;
    for (const GradSuiteResult& r : results) {
        out.push_back(report_json(r));
        all_pass = all_pass && r.pass();
        std::cout << "gradcheck " << r.target << ": max rel error "
                  << r.report.global_max_rel_error << " over " << r.report.params_checked
                  << " entries, threshold " << r.threshold << " -> "
                  << (r.pass() ? "PASS" : "FAIL") << "\n";
    }
    write_text((fs::path(cfg.out_dir) / ("gradcheck_" + block + ".json")).string(),
               out.dump(2) + "\n");
    return all_pass ? kExitOk : kExitGradFail;
}

int cmd_viz_attn(const std::string& config_path, const std::string& ckpt, int image_index,
                 const std::string& out_dir_flag) {
    RunConfig cfg = parse_run_config(load_json_file(config_path), /*require_data=*/true);
    const std::string out_dir = out_dir_flag.empty() ? cfg.out_dir : out_dir_flag;
    if (cfg.model.variant == Variant::kBaseline || cfg.model.variant == Variant::kAddNoAttention) {
        std::cerr << "viz-attn needs an attention variant (sigmoid_only, slca, slca_projector)\n";
        return kExitConfig;
    }
    Dataset test_ds = load_dataset(cfg.test_path);
    if (image_index < 0 || image_index >= static_cast<int>(test_ds.num_samples)) {
        std::cerr << "image index " << image_index << " out of range [0, " << test_ds.num_samples
                  << ")\n";
        return kExitConfig;
    }

    Model<float> model(cfg.model);
    auto params = model.all_params();
    load_checkpoint(ckpt, params);
    fs::create_directories(out_dir);

    Tensor<float> img = to_feature_map_one(test_ds, image_index);
    EncoderTapSet<float> taps = model.encoder().encode_with_taps(img);
    model.forward(img, false, &taps);

    constexpr int kMapSize = 128;
    const auto& attn = model.last_attention_maps();
    for (std::size_t p = 0; p < attn.size(); ++p) {
        const std::string path =
            (fs::path(out_dir) / ("attn_point" + std::to_string(p) + ".pgm")).string();
        write_pgm(path, kMapSize, kMapSize, heatmap_bytes(attn[p], kMapSize));
        std::cout << "wrote " << path << "\n";
    }
    const std::string neck_path = (fs::path(out_dir) / "neck_tap.pgm").string();
    write_pgm(neck_path, kMapSize, kMapSize, heatmap_bytes(taps.neck, kMapSize));
    std::cout << "wrote " << neck_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frozen-encoder feature fusion with spatially localized channel attention"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shape-classification dataset");
    std::string gen_out;
    int gen_n = 2500, gen_size = 64, gen_classes = 4;
    std::uint64_t gen_seed = 7;
    gen->add_option("--out", gen_out, "Output dataset file")->required();
    gen->add_option("--n", gen_n, "Number of samples");
    gen->add_option("--size", gen_size, "Image side length");
    gen->add_option("--classes", gen_classes, "Number of classes");
    gen->add_option("--seed", gen_seed, "Generator seed");

    auto* tr = app.add_subcommand("train", "Train one model from a JSON config");
    std::string tr_config;
    tr->add_option("--config", tr_config, "Run config JSON")->required();

    auto* ab = app.add_subcommand("ablate", "Run an ablation or sweep and emit tables");
    std::string ab_config, ab_mode;
    int ab_workers = 0;
    ab->add_option("--config", ab_config, "Run config JSON")->required();
    ab->add_option("--mode", ab_mode, "fusion | blocks | fractions")->required();
    ab->add_option("--workers", ab_workers, "Parallel run workers (overrides config)");

    auto* gc = app.add_subcommand("gradcheck", "64-bit finite-difference gradient checks");
    std::string gc_config, gc_block = "all";
    double gc_corrupt = 0.0;
    gc->add_option("--config", gc_config, "Run config JSON")->required();
    gc->add_option("--block", gc_block, "slca | projector | full | all");
    gc->add_option("--corrupt-grad", gc_corrupt, "Test hook: offset added to one analytic gradient")
        ->group("");  // hidden

    auto* vz = app.add_subcommand("viz-attn", "Export attention heatmaps as PGM");
    std::string vz_config, vz_ckpt, vz_out;
    int vz_index = 0;
    vz->add_option("--config", vz_config, "Run config JSON")->required();
    vz->add_option("--ckpt", vz_ckpt, "Checkpoint file")->required();
    vz->add_option("--image-index", vz_index, "Test-set image index");
    vz->add_option("--out", vz_out, "Output directory (defaults to config out_dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_n, gen_size, gen_classes, gen_seed);
        if (tr->parsed()) return cmd_train(tr_config);
        if (ab->parsed()) return cmd_ablate(ab_config, ab_mode, ab_workers);
        if (gc->parsed()) return cmd_gradcheck(gc_config, gc_block, gc_corrupt);
        if (vz->parsed()) return cmd_viz_attn(vz_config, vz_ckpt, vz_index, vz_out);
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "file format error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitDiverged;
    }
    return kExitConfig;
}
