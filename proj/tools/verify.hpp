#pragma once

#include "tcm/config.hpp"

#include <string>
#include <vector>

namespace tcm::cli {

enum class VerifyLevel { Quick, Full };

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyOptions {
    VerifyLevel level = VerifyLevel::Quick;
    bool corrupt_pinv = false;  // test hook: drop the last Jacobi sweep inside the Penrose suite
    std::uint64_t seed = 7;
    ExperimentConfig experiment;  // used by the end-to-end suite
};

SuiteResult penrose_suite(std::size_t matrices, bool corrupt, std::uint64_t seed);
SuiteResult gradient_suite(std::size_t instances, std::uint64_t seed);
SuiteResult proxy_identity_suite(std::size_t instances, std::size_t draws, std::uint64_t seed);
SuiteResult faithfulness_suite(std::size_t scms, std::uint64_t seed);
SuiteResult winner_suite(std::size_t steps, std::uint64_t seed);
SuiteResult end_to_end_suite(const ExperimentConfig& config);

std::vector<SuiteResult> run_verify(const VerifyOptions& options);

} // namespace tcm::cli
