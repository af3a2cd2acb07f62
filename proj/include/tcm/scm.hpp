#pragma once

#include "tcm/matrix.hpp"
#include "tcm/random.hpp"

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tcm {

enum class Domain { Source, Target };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);
inline Domain other(Domain d) { return d == Domain::Source ? Domain::Target : Domain::Source; }

// Ground-truth linear-Gaussian selection-diagram SCM:
//   u ~ N(mu_domain, sigma_u^2 I),  x = A u + b + eps,  eps ~ N(0, noise_std^2 I),
//   y ~ softmax((W_u u + W_x x) / tau).
struct ScmSpec {
    std::size_t k = 0;  // factors
    std::size_t n = 0;  // observation dim
    std::size_t c = 0;  // classes
    Matrix a;           // n x k
    Vector b;           // n
    Matrix w_u;         // c x k
    Matrix w_x;         // c x n
    Vector mu_s;        // k
    Vector mu_t;        // k
    double sigma_u = 0.3;
    double tau = 0.5;
    double noise_std = 0.01;

    const Vector& mu(Domain d) const { return d == Domain::Source ? mu_s : mu_t; }
    Vector shift() const { return sub(mu_t, mu_s); }

    // Throws SpecError naming the violated invariant. The no-shift null
    // experiment legitimately sets mu_s == mu_t, hence the flag.
    void validate(bool require_shift = true) const;
    // Stable 16-hex-digit FNV-1a digest of every field.
    std::string hash() const;
};

struct BenchmarkSpecOptions {
    std::size_t k = 3;
    std::size_t n = 8;
    std::size_t c = 3;
    double sigma_u = 0.3;
    double tau = 0.5;
    double noise_std = 0.01;
    double max_condition = 5.0;
    Vector shifts{1.5, -1.0, 0.8};
    double w_u_std = 1.0;
    double w_x_std = 0.35;
    bool center_target_logits = true;
};

// Random A (condition number clamped), b, W_u, W_x; mu_s = 0, mu_t = shifts.
// With center_target_logits, b is moved inside the row space of W_x so the
// noiseless logits at u = mu_t are all zero.
ScmSpec make_benchmark_spec(const BenchmarkSpecOptions& options, RngStream rng);

struct LabeledSample {
    Vector x;
    std::optional<std::size_t> y;
    Domain domain = Domain::Source;
    Vector u_true;  // evaluation only
    Vector noise;   // evaluation only: the eps added to A u + b
};

// Samples of one domain. Learner-facing accessors strip hidden columns and
// refuse target labels; evaluation accessors are named as such.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::string spec_hash, Domain domain, std::uint64_t seed, std::vector<LabeledSample> samples);

    const std::string& spec_hash() const noexcept { return spec_hash_; }
    Domain domain() const noexcept { return domain_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t dim() const { return samples_.empty() ? 0 : samples_.front().x.size(); }

    const Vector& x(std::size_t i) const;
    Matrix features(std::span<const std::size_t> rows) const;
    Matrix features() const;
    // Source labels only; ContractError for target data.
    std::size_t label(std::size_t i) const;
    std::vector<std::size_t> labels(std::span<const std::size_t> rows) const;

    std::optional<std::size_t> evaluation_label(std::size_t i) const { return samples_.at(i).y; }
    const LabeledSample& evaluation_sample(std::size_t i) const { return samples_.at(i); }
    const std::vector<LabeledSample>& evaluation_samples() const noexcept { return samples_; }

    // Rows handed to learners so far (shared across copies).
    std::uint64_t learner_reads() const { return reads_->load(); }

private:
    void count(std::size_t rows) const { reads_->fetch_add(rows); }

    std::string spec_hash_;
    Domain domain_ = Domain::Source;
    std::uint64_t seed_ = 0;
    std::vector<LabeledSample> samples_;
    std::shared_ptr<std::atomic<std::uint64_t>> reads_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

Dataset sample_dataset(const ScmSpec& spec, Domain domain, std::size_t count, RngStream rng);

Vector softmax(std::span<const double> logits);

// P(Y | X = x, U = u).
Vector label_posterior(const ScmSpec& spec, std::span<const double> x, std::span<const double> u);

struct OracleResult {
    Vector probs;
    Vector std_error;
};

// Sum over u of P(Y|x,u) P(u|S=prior), estimated by Monte Carlo over the
// prior of the given domain (target by default).
OracleResult transport_oracle(const ScmSpec& spec, std::span<const double> x, std::size_t mc_samples, RngStream rng,
                              Domain prior = Domain::Target);

// Finite-U override: explicit P(U = j | S) and P(Y | x, U = j) tables for a fixed x.
struct DiscreteTransport {
    Vector prior;                  // P(U = j | S = t)
    std::vector<Vector> posterior; // posterior[j] = P(Y | x, U = j)
};
Vector transport_exact(const DiscreteTransport& table);

struct AffineMap {
    Matrix linear;
    Vector offset;
    Vector operator()(std::span<const double> x) const;
    AffineMap then(const AffineMap& next) const;
};

enum class Direction { SourceToTarget, TargetToSource };

// x -> x + A * delta * e_i.
AffineMap factor_intervention(const ScmSpec& spec, std::size_t factor, double delta);
// Ground-truth disentangled mechanism for factor i: shift by mu_t[i] - mu_s[i] (negated t->s).
AffineMap true_mechanism(const ScmSpec& spec, std::size_t factor, Direction direction);

// u = A^+ (x - b - noise).
Vector abduct(const ScmSpec& spec, std::span<const double> x, std::span<const double> noise = {});

struct DisentanglementScore {
    double off_score = 0.0;  // max_{j != i} mean |du_j|
    double on_score = 0.0;   // mean |du_i|
    Vector mean_abs_shift;   // mean |du_j| for every j
};

using VectorMap = std::function<Vector(std::span<const double>)>;

DisentanglementScore disentanglement_score(const ScmSpec& spec, const VectorMap& mech, std::size_t factor,
                                           const Dataset& probe);

// Mean log-likelihood of the abducted factors of mech(x) under N(mu_domain, sigma_u^2 I).
double factor_loglik(const ScmSpec& spec, const VectorMap& mech, const Dataset& data, Domain domain);

} // namespace tcm
