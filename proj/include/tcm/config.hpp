#pragma once

#include "tcm/dcm.hpp"
#include "tcm/proxy.hpp"
#include "tcm/scm.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace tcm {

struct ScmConfig {
    BenchmarkSpecOptions spec;
    std::size_t source_samples = 2000;
    std::size_t target_samples = 2000;
};

struct BaselineConfig {
    std::size_t iterations = 2000;
    std::size_t batch_size = 32;
    NesterovHyper sgd{1e-2, 0.9};
    double alpha = 1.0;
    std::size_t disc_hidden = 16;
    double init_std = 0.02;
};

struct BenchConfig {
    std::size_t oracle_samples = 100000;
    std::size_t ablation_oracle_samples = 10000;
    std::size_t eval_points = 2000;  // leading target rows scored against the oracle
    std::vector<std::size_t> ablation_k{1, 2, 3, 5};
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    std::string out = "runs/default";
    ScmConfig scm;
    DcmConfig dcm;
    ProxyConfig proxy;
    BaselineConfig baseline;
    BenchConfig bench;
};

// Missing keys keep their defaults. Unknown keys, wrong types and invalid
// values throw ConfigError whose key() is the dotted path ("scm.sigma_u").
// Objects may carry a free-form "_notes" member.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

ExperimentConfig load_config(const std::string& path);

} // namespace tcm
