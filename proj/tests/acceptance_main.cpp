// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion; exits nonzero if any hard criterion
// fails (criterion 7 is soft and reports a warning instead).
//
// Environment:
//   SLCA_CLI_BIN         path to the slca CLI binary (required)
//   SLCA_CONFIG_DIR      directory holding gradcheck.json (required)
//   SLCA_ACCEPT_WORKERS  parallel run workers for the experiment grid (default 2)
//   SLCA_ACCEPT_SCALE    "full" (default) or "smoke" for a fast pipeline check

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "slca/checkpoint.hpp"
#include "slca/metrics.hpp"
#include "slca/runners.hpp"
#include "slca/slca.hpp"

namespace fs = std::filesystem;
using namespace slca;

namespace {

struct Criterion {
    int id;
    std::string name;
    bool pass = false;
    bool soft = false;
    std::string note;
};

std::vector<Criterion> g_results;

void report(int id, const std::string& name, bool pass, const std::string& note,
            bool soft = false) {
    g_results.push_back({id, name, pass, soft, note});
    const char* tag = pass ? "[PASS]" : (soft ? "[WARN]" : "[FAIL]");
    std::cout << tag << " criterion " << id << " (" << name << "): " << note << "\n";
    std::cout.flush();
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? v : fallback;
}

int run_cmd(const std::string& cmd, std::string* output = nullptr) {
    const fs::path out_file = fs::temp_directory_path() / "slca_accept_cmd.txt";
    const int raw = std::system((cmd + " > " + out_file.string() + " 2>&1").c_str());
    if (output) {
        std::ifstream f(out_file);
        std::stringstream ss;
        ss << f.rdbuf();
        *output = ss.str();
    }
    return WEXITSTATUS(raw);
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ModelSpec desk_spec(Variant v, std::uint64_t seed) {
    ModelSpec spec;
    spec.variant = v;
    spec.seed = seed;
    return spec;
}

// ---- criterion 1: gradient suite через the CLI --------------------------

void criterion_gradients(const std::string& cli, const std::string& config_dir,
                         const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string out;
    const std::string cfg = (fs::path(config_dir) / "gradcheck.json").string();
    const int rc = run_cmd(cli + " gradcheck --config " + cfg + " --block all", &out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    (void)work;
    std::ostringstream note;
    note << "cmd_gradcheck exit " << rc << " in " << secs << " s (budget 300 s)";
    report(1, "gradient suite", rc == 0 && secs < 300.0, note.str());
}

// ---- criterion 2: brute-force oracles ------------------------------------

void criterion_oracles() {
    Rng rng(4242);
    auto rmap = [&](int n, int c, int h, int w) {
        Tensor<float> t = Tensor<float>::zeros4(n, c, h, w);
        for (auto& e : t.v) e = static_cast<float>(rng.normal());
        return t;
    };
    int conv_bad = 0, slap_bad = 0, rb_bad = 0, un_bad = 0, auc_bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        {
            const int c = 1 + static_cast<int>(rng.uniform_int(4));
            const int co = 1 + static_cast<int>(rng.uniform_int(5));
            const int h = 3 + static_cast<int>(rng.uniform_int(8));
            const int w = 3 + static_cast<int>(rng.uniform_int(8));
            const int k = rng.coin() ? 3 : 1;
            const int stride = 1 + static_cast<int>(rng.uniform_int(2));
            const int pad = k == 3 ? 1 : 0;
            Tensor<float> x = rmap(2, c, h, w);
            Tensor<float> wt = rmap(co, c, k, k);
            Tensor<float> b = Tensor<float>::zeros1(co);
            for (auto& e : b.v) e = static_cast<float>(rng.normal());
            if (max_abs_diff(conv2d_raw(x, wt, b, stride, pad),
                             oracle::conv2d_naive(x, wt, b, stride, pad)) >= 1e-4)
                ++conv_bad;
        }
        {
            const int h = 2 + static_cast<int>(rng.uniform_int(14));
            const int w = 2 + static_cast<int>(rng.uniform_int(14));
            const int g = 1 + static_cast<int>(rng.uniform_int(std::min(h, w)));
            Tensor<float> x = rmap(2, 3, h, w);
            if (max_abs_diff(slap(x, g), oracle::slap_naive(x, g)) >= 1e-5) ++slap_bad;
        }
        {
            const int h = 1 + static_cast<int>(rng.uniform_int(10));
            const int w = 1 + static_cast<int>(rng.uniform_int(10));
            const int ho = 1 + static_cast<int>(rng.uniform_int(12));
            const int wo = 1 + static_cast<int>(rng.uniform_int(12));
            Tensor<float> x = rmap(1, 2, h, w);
            if (max_abs_diff(resize_bilinear(x, ho, wo),
                             oracle::resize_bilinear_naive(x, ho, wo)) >= 1e-5)
                ++rb_bad;
            if (max_abs_diff(upsample_nearest(x, ho, wo),
                             oracle::upsample_nearest_naive(x, ho, wo)) != 0.0)
                ++un_bad;
        }
        {
            const int n = 5 + static_cast<int>(rng.uniform_int(196));
            const int k = 2 + static_cast<int>(rng.uniform_int(4));
            Tensor<double> scores = Tensor<double>::zeros2(n, k);
            std::vector<std::vector<double>> rows(n, std::vector<double>(k));
            std::vector<int> labels(n);
            const bool quantize = rng.coin();
            for (int i = 0; i < n; ++i) {
                labels[i] = static_cast<int>(rng.uniform_int(k));
                for (int j = 0; j < k; ++j) {
                    double v = rng.uniform();
                    if (quantize) v = std::round(v * 8.0) / 8.0;
                    scores.at(i, j) = v;
                    rows[i][j] = v;
                }
            }
            for (int j = 0; j < k; ++j) labels[j % n] = j;
            if (std::abs(auc_macro_ovr(scores, labels) -
                         oracle::auc_macro_ovr_pairs(rows, labels, k)) >= 1e-9)
                ++auc_bad;
        }
    }
    std::ostringstream note;
    note << "100 instances each; mismatches: conv2d " << conv_bad << ", slap " << slap_bad
         << ", resize " << rb_bad << ", upsample " << un_bad << ", auc " << auc_bad;
    report(2, "oracle suite", conv_bad + slap_bad + rb_bad + un_bad + auc_bad == 0, note.str());
}

// ---- criteria 3 and 8: frozen contract + round trips ---------------------

void criterion_frozen_and_roundtrip(const fs::path& work) {
    Dataset train_ds = generate_dataset(400, 64, 4, 7001);
    Dataset test_ds = generate_dataset(200, 64, 4, 7002);
    std::vector<int> tr(train_ds.num_samples), te(test_ds.num_samples);
    for (std::size_t i = 0; i < tr.size(); ++i) tr[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < te.size(); ++i) te[i] = static_cast<int>(i);

    ModelSpec spec = desk_spec(Variant::kSlca, 11);
    Model<float> model(spec);
    HyperParams hp;
    hp.epochs = 5;
    hp.seed = 11;
    TrainOptions opt;
    opt.run_id = "accept_frozen";
    opt.best_checkpoint_path = (work / "accept_best.ckpt").string();
    ExperimentRecord rec = train(model, train_ds, tr, test_ds, te, hp, opt);

    const bool frozen_ok = rec.encoder_digest_before == rec.encoder_digest_after;
    const bool backbone_moved = rec.trainable_digest_before != rec.trainable_digest_after;
    std::ostringstream note3;
    note3 << "5-epoch run: encoder digest " << digest_hex(rec.encoder_digest_before)
          << (frozen_ok ? " unchanged" : " CHANGED") << ", backbone digest "
          << (backbone_moved ? "changed" : "UNCHANGED");
    report(3, "frozen contract", frozen_ok && backbone_moved, note3.str());

    // Criterion 8: checkpoint and dataset round trips.
    Model<float> fresh(spec);
    auto params = fresh.all_params();
    load_checkpoint(opt.best_checkpoint_path, params);
    Model<float> trained_ref(spec);
    auto ref_params = trained_ref.all_params();
    load_checkpoint(opt.best_checkpoint_path, ref_params);
    const bool ckpt_bits = params_digest(params) == params_digest(ref_params);

    TapCache cache(fresh.encoder(), test_ds);
    Metrics re_eval = evaluate(fresh, test_ds, te, hp.batch_size, &cache);
    const bool best_reproduced = re_eval.accuracy == rec.best_val_accuracy;

    const fs::path ds_a = work / "accept_ds_a.bin";
    const fs::path ds_b = work / "accept_ds_b.bin";
    save_dataset(train_ds, ds_a.string());
    Dataset loaded = load_dataset(ds_a.string());
    save_dataset(loaded, ds_b.string());
    const bool ds_bits = read_file(ds_a) == read_file(ds_b) &&
                         loaded.content_digest() == train_ds.content_digest();

    std::ostringstream note8;
    note8 << "checkpoint bits " << (ckpt_bits ? "ok" : "BAD") << ", best-val re-eval "
          << re_eval.accuracy << " vs recorded " << rec.best_val_accuracy
          << (best_reproduced ? " (exact)" : " (MISMATCH)") << ", dataset bits "
          << (ds_bits ? "ok" : "BAD");
    report(8, "round-trip suite", ckpt_bits && best_reproduced && ds_bits, note8.str());
}

// ---- criterion 4: Eq.1 structure -----------------------------------------

void criterion_locality() {
    Rng rng(555);
    bool leak_free = true;
    // Zero-leakage locality across several random blocks and cells.
    for (int trial = 0; trial < 20 && leak_free; ++trial) {
        const int c_in = 8 + static_cast<int>(rng.uniform_int(3)) * 8;
        SlcaConfig sc;
        sc.r = 1 << rng.uniform_int(3);
        sc.g = 2 + static_cast<int>(rng.uniform_int(3));
        sc.out_channels = 4 + static_cast<int>(rng.uniform_int(12));
        Rng brng(rng.next_u64());
        SlcaBlock<float> blk("b", c_in, sc, brng);
        const int H = sc.g * (1 + static_cast<int>(rng.uniform_int(3)));
        Tensor<float> tap = Tensor<float>::zeros4(1, c_in, H, H);
        for (auto& e : tap.v) e = static_cast<float>(rng.normal());
        Tensor<float> base = blk.forward(tap, false);

        const int ci = static_cast<int>(rng.uniform_int(sc.g));
        const int cj = static_cast<int>(rng.uniform_int(sc.g));
        Tensor<float> poked = tap;
        const int h0 = ci * H / sc.g, h1 = (ci + 1) * H / sc.g;
        const int w0 = cj * H / sc.g, w1 = (cj + 1) * H / sc.g;
        for (int c = 0; c < c_in; ++c)
            for (int y = h0; y < h1; ++y)
                for (int x = w0; x < w1; ++x) poked.at(0, c, y, x) += 0.71f;
        Tensor<float> after = blk.forward(poked, false);
        for (int c = 0; c < sc.out_channels && leak_free; ++c)
            for (int i = 0; i < sc.g && leak_free; ++i)
                for (int j = 0; j < sc.g && leak_free; ++j)
                    if (!(i == ci && j == cj) && base.at(0, c, i, j) != after.at(0, c, i, j))
                        leak_free = false;
    }

    // Open-interval range on 1000 random inputs.
    SlcaConfig sc;
    sc.out_channels = 16;
    Rng brng(556);
    SlcaBlock<float> blk("r", 32, sc, brng);
    bool in_range = true;
    for (int trial = 0; trial < 1000 && in_range; ++trial) {
        Tensor<float> tap = Tensor<float>::zeros4(1, 32, 8, 8);
        for (auto& e : tap.v) e = static_cast<float>(rng.normal(0.0, 2.0));
        for (float e : blk.forward(tap, false).v)
            if (!(e > 0.0f && e < 1.0f)) in_range = false;
    }
    std::ostringstream note;
    note << "single-cell perturbation leakage: " << (leak_free ? "zero" : "NONZERO")
         << "; attention range (0,1) on 1000 inputs: " << (in_range ? "ok" : "VIOLATED");
    report(4, "Eq.1 structure", leak_free && in_range, note.str());
}

// ---- criterion 5: determinism --------------------------------------------

void criterion_determinism(const std::string& cli, const fs::path& work) {
    const fs::path train_bin = work / "det_train.bin";
    const fs::path test_bin = work / "det_test.bin";
    std::string out1, out2;
    run_cmd(cli + " gen-data --out " + train_bin.string() + " --n 80 --size 32 --seed 31", &out1);
    const std::string bytes1 = read_file(train_bin);
    run_cmd(cli + " gen-data --out " + train_bin.string() + " --n 80 --size 32 --seed 31", &out2);
    const bool gen_stable = bytes1 == read_file(train_bin) && !bytes1.empty();
    run_cmd(cli + " gen-data --out " + test_bin.string() + " --n 40 --size 32 --seed 32");

    nlohmann::json cfg;
    cfg["model"] = {{"variant", "slca"},
                    {"seed", 5},
                    {"encoder",
                     {{"input_size", 32}, {"patch_size", 8}, {"embed_dim", 16}, {"num_blocks", 2},
                      {"num_heads", 2}}},
                    {"backbone",
                     {{"input_size", 32}, {"stem_channels", 8}, {"stage_channels", {8, 16}},
                      {"blocks_per_stage", 1}, {"num_classes", 4}}},
                    {"tap_assignment", {"pe", "t_mid", "neck"}}};
    cfg["hyper"] = {{"lr", 0.001}, {"epochs", 2}, {"batch_size", 16}, {"seed", 5}};
    cfg["data"] = {{"train", train_bin.string()}, {"test", test_bin.string()}};

    auto run_train = [&](const fs::path& out_dir) {
        cfg["out_dir"] = out_dir.string();
        const fs::path cfg_path = work / "det_cfg.json";
        std::ofstream(cfg_path) << cfg.dump(2);
        return run_cmd(cli + " train --config " + cfg_path.string());
    };
    const int rc1 = run_train(work / "det_a");
    const int rc2 = run_train(work / "det_b");
    const bool record_same =
        read_file(work / "det_a" / "record.json") == read_file(work / "det_b" / "record.json");
    const bool metrics_same =
        read_file(work / "det_a" / "metrics.jsonl") == read_file(work / "det_b" / "metrics.jsonl");
    const bool nonempty = !read_file(work / "det_a" / "record.json").empty();

    std::ostringstream note;
    note << "gen-data bytes " << (gen_stable ? "stable" : "UNSTABLE") << "; cmd_train twice (exit "
         << rc1 << "/" << rc2 << "): record.json " << (record_same ? "identical" : "DIFFERS")
         << ", metrics.jsonl " << (metrics_same ? "identical" : "DIFFERS");
    report(5, "determinism", gen_stable && rc1 == 0 && rc2 == 0 && record_same && metrics_same &&
                             nonempty,
           note.str());
}

// ---- criteria 6 and 7: desk-scale experiments ----------------------------

void criteria_experiments(int workers, bool smoke) {
    const int n_train = smoke ? 200 : 2000;
    const int n_test = smoke ? 100 : 500;
    const int epochs = smoke ? 3 : 30;
    const std::vector<std::uint64_t> seeds = smoke ? std::vector<std::uint64_t>{1, 2}
                                                   : std::vector<std::uint64_t>{1, 2, 3, 4, 5};

    Dataset train_ds = generate_dataset(n_train, 64, 4, 7);
    Dataset test_ds = generate_dataset(n_test, 64, 4, 8);
    HyperParams hp;
    hp.epochs = epochs;

    struct Cell {
        Variant variant;
        double fraction;
    };
    const std::vector<Cell> cells = {{Variant::kBaseline, 1.0},
                                     {Variant::kSlca, 1.0},
                                     {Variant::kSlcaProjector, 1.0},
                                     {Variant::kBaseline, 0.1},
                                     {Variant::kSlcaProjector, 0.1}};
    std::vector<RunRequest> reqs;
    for (const Cell& cell : cells) {
        for (std::uint64_t seed : seeds) {
            RunRequest rq;
            rq.spec = desk_spec(cell.variant, seed);
            rq.hp = hp;
            rq.hp.seed = seed;
            rq.fraction = cell.fraction;
            rq.data_seed = 12345;
            rq.run_id = to_string(cell.variant) + "_f" + std::to_string(cell.fraction) + "_s" +
                        std::to_string(seed);
            reqs.push_back(std::move(rq));
        }
    }
    std::cout << "running " << reqs.size() << " desk-scale experiments (" << epochs
              << " epochs each, " << workers << " workers)...\n";
    std::cout.flush();
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<ExperimentRecord> recs = run_grid(train_ds, test_ds, reqs, workers);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto cell_stats = [&](Variant v, double f) {
        std::vector<const ExperimentRecord*> ptrs;
        for (std::size_t i = 0; i < reqs.size(); ++i)
            if (reqs[i].spec.variant == v && std::abs(reqs[i].fraction - f) < 1e-12)
                ptrs.push_back(&recs[i]);
        return aggregate(ptrs);
    };
    auto per_seed = [&](Variant v, double f) {
        std::vector<double> acc;
        for (std::size_t i = 0; i < reqs.size(); ++i)
            if (reqs[i].spec.variant == v && std::abs(reqs[i].fraction - f) < 1e-12)
                acc.push_back(recs[i].final_test.accuracy);
        return acc;
    };

    const CellStat base100 = cell_stats(Variant::kBaseline, 1.0);
    const CellStat slca100 = cell_stats(Variant::kSlca, 1.0);
    const CellStat proj100 = cell_stats(Variant::kSlcaProjector, 1.0);
    const CellStat base10 = cell_stats(Variant::kBaseline, 0.1);
    const CellStat proj10 = cell_stats(Variant::kSlcaProjector, 0.1);

    const auto base_seed_acc = per_seed(Variant::kBaseline, 1.0);
    const auto slca_seed_acc = per_seed(Variant::kSlca, 1.0);
    int slca_wins = 0;
    for (std::size_t i = 0; i < base_seed_acc.size(); ++i)
        if (slca_seed_acc[i] > base_seed_acc[i]) ++slca_wins;

    const bool ordering = proj100.mean_acc >= slca100.mean_acc &&
                          slca100.mean_acc > base100.mean_acc;
    const bool margin = proj100.mean_acc - base100.mean_acc >= 0.02;
    const bool wins = slca_wins >= static_cast<int>(seeds.size()) - 1;

    std::ostringstream note6;
    note6 << "mean acc: baseline " << base100.mean_acc << " (±" << base100.std_acc << "), slca "
          << slca100.mean_acc << " (±" << slca100.std_acc << "), slca_projector "
          << proj100.mean_acc << " (±" << proj100.std_acc << "); margin "
          << (proj100.mean_acc - base100.mean_acc) << " (need >= 0.02); slca beats baseline in "
          << slca_wins << "/" << seeds.size() << " seeds; " << secs << " s total";
    report(6, "desk-scale fusion ordering", ordering && margin && wins, note6.str());

    const double imp10 = proj10.mean_acc - base10.mean_acc;
    const double imp100 = proj100.mean_acc - base100.mean_acc;
    std::ostringstream note7;
    note7 << "improvement at 10% " << imp10 << " (baseline " << base10.mean_acc << " ±"
          << base10.std_acc << ", slca_projector " << proj10.mean_acc << " ±" << proj10.std_acc
          << ") vs at 100% " << imp100 << (imp10 >= imp100 ? "" : " -- data-efficiency trend not "
                                                                  "observed at this scale (soft)");
    report(7, "data-efficiency trend (soft)", imp10 >= imp100, note7.str(), /*soft=*/true);
}

}  // namespace

int main() {
    const std::string cli = env_or("SLCA_CLI_BIN", "");
    const std::string config_dir = env_or("SLCA_CONFIG_DIR", "configs");
    const int workers = std::atoi(env_or("SLCA_ACCEPT_WORKERS", "2").c_str());
    const bool smoke = env_or("SLCA_ACCEPT_SCALE", "full") == "smoke";
    if (cli.empty()) {
        std::cerr << "SLCA_CLI_BIN must point to the slca binary\n";
        return 2;
    }
    fs::path work = fs::temp_directory_path() / "slca_acceptance";
    fs::create_directories(work);

    criterion_gradients(cli, config_dir, work);
    criterion_oracles();
    criterion_frozen_and_roundtrip(work);
    criterion_locality();
    criterion_determinism(cli, work);
    criteria_experiments(std::max(1, workers), smoke);

    std::sort(g_results.begin(), g_results.end(),
              [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
    bool all_pass = true;
    int warns = 0;
    for (const Criterion& c : g_results) {
        if (!c.pass && !c.soft) all_pass = false;
        if (!c.pass && c.soft) ++warns;
    }
    std::cout << "\nacceptance: " << (all_pass ? "PASS" : "FAIL");
    if (warns) std::cout << " (" << warns << " soft warning" << (warns > 1 ? "s" : "") << ")";
    std::cout << "\n";
    return all_pass ? 0 : 1;
}
