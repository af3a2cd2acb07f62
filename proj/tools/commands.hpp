#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tcm::cli {

enum ExitCode : int {
    kOk = 0,
    kVerifyFailed = 1,
    kConfigError = 2,
    kMissingPrerequisite = 3,
    kMismatch = 4,
};

struct CommonOptions {
    std::optional<std::string> config;  // JSON path; defaults when absent
    std::optional<std::uint64_t> seed;  // overrides the config seed
};

int cmd_gen(const CommonOptions& common, const std::optional<std::string>& out_dir);
int cmd_train(const CommonOptions& common, const std::string& data_dir, const std::optional<std::string>& out_dir,
              const std::string& stage);
int cmd_infer(const std::string& checkpoint_dir, const std::string& data_file, const std::string& out_file);
int cmd_verify(const CommonOptions& common, const std::string& level, bool corrupt_pinv);
int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_file);
int cmd_bench(const CommonOptions& common, const std::optional<std::string>& out_dir, bool no_shift);
int cmd_ablate(const CommonOptions& common, const std::optional<std::string>& out_dir);

} // namespace tcm::cli
