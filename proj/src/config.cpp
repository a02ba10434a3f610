#include "slca/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "slca/errors.hpp"

namespace slca {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ShapeError("config: " + where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ShapeError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_epochs(const json& j, int& out) {
    if (!j.contains("epochs")) return;
    const json& e = j.at("epochs");
    if (e.is_string()) {
        const std::string name = e.get<std::string>();
        if (name == "retina-preset")
            out = 100;
        else if (name == "isic-preset")
            out = 400;
        else
            throw ShapeError("config: unknown epochs preset '" + name + "'");
    } else {
        out = e.get<int>();
    }
}

EncoderConfig parse_encoder(const json& j) {
    reject_unknown(j, {"input_size", "patch_size", "embed_dim", "num_blocks", "num_heads",
                       "mlp_ratio", "neck_out_dim", "seed"},
                   "model.encoder");
    EncoderConfig cfg;
    read(j, "input_size", cfg.input_size);
    read(j, "patch_size", cfg.patch_size);
    read(j, "embed_dim", cfg.embed_dim);
    read(j, "num_blocks", cfg.num_blocks);
    read(j, "num_heads", cfg.num_heads);
    read(j, "mlp_ratio", cfg.mlp_ratio);
    if (j.contains("neck_out_dim"))
        cfg.neck_out_dim = j.at("neck_out_dim").get<int>();
    else
        cfg.neck_out_dim = cfg.embed_dim;
    read(j, "seed", cfg.seed);
    return cfg;
}

BackboneConfig parse_backbone(const json& j) {
    reject_unknown(j, {"stem_channels", "stage_channels", "blocks_per_stage", "input_size",
                       "num_classes"},
                   "model.backbone");
    BackboneConfig cfg;
    read(j, "stem_channels", cfg.stem_channels);
    read(j, "stage_channels", cfg.stage_channels);
    read(j, "blocks_per_stage", cfg.blocks_per_stage);
    read(j, "input_size", cfg.input_size);
    read(j, "num_classes", cfg.num_classes);
    return cfg;
}

SlcaConfig parse_slca(const json& j) {
    reject_unknown(j, {"r", "g"}, "model.slca");
    SlcaConfig cfg;
    read(j, "r", cfg.r);
    read(j, "g", cfg.g);
    return cfg;
}

ModelSpec parse_model(const json& j) {
    reject_unknown(j, {"variant", "tap_assignment", "encoder", "backbone", "slca", "seed"},
                   "model");
    ModelSpec spec;
    if (j.contains("variant")) spec.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("encoder")) spec.encoder = parse_encoder(j.at("encoder"));
    if (j.contains("backbone")) spec.backbone = parse_backbone(j.at("backbone"));
    if (j.contains("slca")) spec.slca = parse_slca(j.at("slca"));
    read(j, "seed", spec.seed);
    if (j.contains("tap_assignment"))
        spec.tap_assignment = j.at("tap_assignment").get<std::vector<std::string>>();
    else if (spec.backbone.num_injection_points() != 5)
        throw ShapeError("config: tap_assignment required when the backbone has " +
                         std::to_string(spec.backbone.num_injection_points()) +
                         " injection points");
    return spec;
}

HyperParams parse_hyper(const json& j) {
    reject_unknown(j, {"lr", "weight_decay", "epochs", "batch_size", "eval_every", "seed"},
                   "hyper");
    HyperParams hp;
    read(j, "lr", hp.lr);
    read(j, "weight_decay", hp.weight_decay);
    read_epochs(j, hp.epochs);
    read(j, "batch_size", hp.batch_size);
    read(j, "eval_every", hp.eval_every);
    read(j, "seed", hp.seed);
    if (hp.lr <= 0.0) throw ShapeError("config: hyper.lr must be > 0");
    return hp;
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ShapeError(std::string("config: invalid JSON: ") + e.what());
    }
    return j;
}

RunConfig parse_run_config(const nlohmann::json& j, bool require_data) {
    reject_unknown(j,
                   {"model", "hyper", "data", "out_dir", "fraction", "seeds", "fractions",
                    "data_seed", "workers"},
                   "top level");
    RunConfig cfg;
    if (j.contains("model")) cfg.model = parse_model(j.at("model"));
    if (j.contains("hyper")) cfg.hyper = parse_hyper(j.at("hyper"));
    if (j.contains("data")) {
        reject_unknown(j.at("data"), {"train", "test"}, "data");
        read(j.at("data"), "train", cfg.train_path);
        read(j.at("data"), "test", cfg.test_path);
    }
    if (require_data && (cfg.train_path.empty() || cfg.test_path.empty()))
        throw ShapeError("config: data.train and data.test paths are required");

    if (j.contains("out_dir")) {
        cfg.out_dir = j.at("out_dir").get<std::string>();
    } else if (const char* env = std::getenv("SLCA_OUT_DIR")) {
        cfg.out_dir = env;
    }
    read(j, "fraction", cfg.fraction);
    read(j, "seeds", cfg.seeds);
    read(j, "fractions", cfg.fractions);
    read(j, "data_seed", cfg.data_seed);
    read(j, "workers", cfg.workers);
    if (cfg.fraction <= 0.0 || cfg.fraction > 1.0)
        throw ShapeError("config: fraction must be in (0, 1]");
    if (cfg.seeds.empty()) throw ShapeError("config: seeds must be non-empty");
    if (cfg.workers < 1) throw ShapeError("config: workers must be >= 1");
    cfg.model.validate();
    cfg.hyper.validate();
    return cfg;
}

}  // namespace slca
