#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "slca/model.hpp"
#include "slca/train.hpp"

namespace slca {

// Run configuration: ModelSpec + HyperParams + dataset paths + output
// directory, all under strict schema validation (unknown keys rejected).
struct RunConfig {
    ModelSpec model;
    HyperParams hyper;
    std::string train_path;
    std::string test_path;
    std::string out_dir = ".";
    double fraction = 1.0;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<double> fractions = {0.1, 0.5, 1.0};
    std::uint64_t data_seed = 12345;
    int workers = 1;
};

nlohmann::json load_json_file(const std::string& path);

// require_data: train/ablate/viz need dataset paths; gradcheck does not.
RunConfig parse_run_config(const nlohmann::json& j, bool require_data);

}  // namespace slca
