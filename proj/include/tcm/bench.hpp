#pragma once

#include "tcm/config.hpp"
#include "tcm/dcm.hpp"
#include "tcm/proxy.hpp"
#include "tcm/scm.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tcm {

// Every experiment derives its streams from one seed so that ablation runs
// share data and initialisation streams.
struct ExperimentStreams {
    RngStream spec, source, target, dcm, proxy, baseline, oracle;
    explicit ExperimentStreams(std::uint64_t seed);
};

struct BenchData {
    ScmSpec spec;
    Dataset source;
    Dataset target;
};

BenchData make_bench_data(const ScmConfig& config, std::uint64_t seed);
// Same generator with mu_s forced equal to mu_t.
BenchData make_null_bench_data(const ScmConfig& config, std::uint64_t seed);

// ---- baselines ----

enum class BaselineKind { SourceOnly, DomainMap };
std::string to_string(BaselineKind k);

struct BaselineModel {
    BaselineKind kind = BaselineKind::SourceOnly;
    std::size_t n = 0;
    std::size_t c = 0;
    MlpSpec adapter;
    MlpSpec discriminator;
    ParamStore params;  // cls.W (c x n), cls.b; domain-map adds adapter.* and align.*
    std::optional<DcmModel> mapping;

    Vector logits(std::span<const double> x) const;
    Vector predict(std::span<const double> x) const;  // probabilities
};

BaselineModel source_only_baseline(const BaselineConfig& config, const Dataset& source, std::size_t classes,
                                   RngStream rng);

// One non-competitive pair trained on (source, target), then a classifier on
// phi(M(x_s)) aligned to phi(x_t) adversarially. Pass `mapping` to reuse a
// trained pair instead of training one.
BaselineModel domain_map_baseline(const BaselineConfig& config, const DcmConfig& dcm_config, const Dataset& source,
                                  const Dataset& target, std::size_t classes, RngStream rng,
                                  std::optional<DcmModel> mapping = std::nullopt);

// ---- metrics ----

using Predictor = std::function<Vector(std::span<const double>)>;

struct OracleTable {
    std::size_t mc_samples = 0;
    std::vector<Vector> probs;  // one row per evaluated target sample
};

// Transport-oracle posteriors for the first `points` target samples; point i
// uses rng.split(i).
OracleTable oracle_table(const ScmSpec& spec, const Dataset& target, std::size_t points, std::size_t mc_samples,
                         RngStream rng);

// Win attribution: every post-warmup win of pair i is credited to the true
// factor j maximising mean_batch |(A^+ (M_i(x) - x))_j| over the source batch.
class PurityTracker {
public:
    PurityTracker(const ScmSpec& spec, std::size_t pairs);
    DcmObserver observer();
    const Matrix& counts() const noexcept { return counts_; }  // pairs x factors
    Matrix purity() const;                                     // row-normalised, zero rows kept
    double purity_min() const;   // over pairs with at least one credited win
    double purity_mean() const;

private:
    const ScmSpec* spec_;
    Matrix a_pinv_;
    Matrix counts_;
};

struct MetricsReport {
    std::string method;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    double accuracy = 0.0;
    double oracle_agreement = 0.0;
    double tv_distance = 0.0;
    std::optional<Matrix> purity;
    std::optional<double> purity_min;
    std::optional<double> purity_mean;
    std::vector<std::size_t> wins;  // post-warmup wins per pair
    std::optional<double> seconds;
    nlohmann::json config = nlohmann::json::object();
};

// Accuracy against hidden labels, oracle-argmax agreement and mean TV
// distance over the rows covered by `oracle`.
MetricsReport evaluate(const Predictor& predictor, const Dataset& target, const OracleTable& oracle);
MetricsReport evaluate(const Predictor& predictor, const ScmSpec& spec, const Dataset& target,
                       std::size_t mc_samples, RngStream rng);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);

// ---- pipelines ----

struct TcmRun {
    DcmTrainResult stage1;
    Stage2Result stage2;
    Matrix purity_counts;
};

TcmRun run_tcm(const ExperimentConfig& config, const BenchData& data, const ExperimentStreams& streams,
               PurityTracker* tracker = nullptr);

Predictor tcm_predictor(const ProxyModel& model);
Predictor baseline_predictor(const BaselineModel& model);

struct BenchReports {
    MetricsReport tcm;
    MetricsReport source_only;
    MetricsReport domain_map;
    MetricsReport oracle;  // the oracle scored against itself: the agreement ceiling
};

MetricsReport oracle_report(const Dataset& target, const OracleTable& oracle);

// Full comparison on one seed: TCM, source-only and domain-map, all scored
// against one oracle table.
BenchReports run_bench(const ExperimentConfig& config, const BenchData& data);

std::vector<MetricsReport> ablate_k(const ExperimentConfig& config, const std::vector<std::size_t>& ks);

inline constexpr const char* kAblationCsvHeader = "k,accuracy,oracle_agreement,tv_distance,purity_min,purity_mean,seconds";
std::string ablation_csv(const std::vector<MetricsReport>& rows);

} // namespace tcm
