#pragma once

#include "tcm/config.hpp"
#include "tcm/dcm.hpp"
#include "tcm/proxy.hpp"
#include "tcm/scm.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace tcm {

inline constexpr int kCheckpointVersion = 1;

// Doubles are written with 17 significant digits so text round-trips are exact.
std::string format_double(double v);

nlohmann::json to_json(const ScmSpec& spec);
ScmSpec spec_from_json(const nlohmann::json& j);

// source.csv and target.csv with columns id,x0..x{n-1},y,domain (y left empty
// on target rows) and meta.json holding the spec, its hash, the seed and every
// hidden column.
void write_dataset_files(const std::filesystem::path& dir, const ScmSpec& spec, std::uint64_t seed,
                         const Dataset& source, const Dataset& target);

struct LoadedData {
    ScmSpec spec;
    std::uint64_t seed = 0;
    Dataset source;
    Dataset target;  // hidden labels restored from meta.json
};
LoadedData read_dataset_files(const std::filesystem::path& dir);

// Feature rows of a dataset CSV; id, y and domain columns are recognised by
// header name.
struct FeatureTable {
    std::vector<std::string> ids;
    Matrix x;
};
FeatureTable read_feature_csv(const std::filesystem::path& path);

nlohmann::json params_to_json(const ParamStore& store);
ParamStore params_from_json(const nlohmann::json& j);

nlohmann::json mlp_spec_to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

nlohmann::json dcm_checkpoint(const DcmModel& model, const ExperimentConfig& config, const std::string& spec_hash);
// MismatchError on version, kind or spec-hash mismatch.
DcmModel load_dcm_checkpoint(const nlohmann::json& j, const std::string& expected_hash);

nlohmann::json proxy_checkpoint(const ProxyModel& model, const ExperimentConfig& config, const std::string& spec_hash);
ProxyModel load_proxy_checkpoint(const nlohmann::json& j, const DcmModel& dcm, const std::string& expected_hash);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace tcm
