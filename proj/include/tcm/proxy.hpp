#pragma once

#include "tcm/dcm.hpp"
#include "tcm/mlp.hpp"
#include "tcm/optim.hpp"
#include "tcm/scm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tcm {

enum class WeightingMode { Density, Uniform };
enum class ZMode { Sample, Mean };

std::string to_string(WeightingMode m);
WeightingMode weighting_from_string(const std::string& s);
std::string to_string(ZMode m);
ZMode z_mode_from_string(const std::string& s);

struct ProxyConfig {
    std::size_t latent = 3;  // l, must be < n
    std::size_t vae_hidden = 16;
    std::size_t disc_hidden = 16;
    std::size_t iterations = 2000;
    std::size_t batch_size = 32;
    double alpha = 1.0;
    NesterovHyper sgd{1e-3, 0.9};
    WeightingMode weighting = WeightingMode::Density;
    ZMode z_mode = ZMode::Sample;
    double init_std = 0.02;
    double adapter_lr_scale = 1.0;  // 0 freezes phi_beta at identity
    std::size_t log_every = 1;
};

// Linear heads of the proxy model.
//   f_y(z, x)    = W1 z + W2 x + b1   (logits, c)
//   f_xhat(z, x) = W3 z + W4 x + b2   (n)
struct LinearHeads {
    Matrix w1;  // c x l
    Matrix w2;  // c x n
    Vector b1;  // c
    Matrix w3;  // n x l
    Matrix w4;  // n x n
    Vector b2;  // n
    // Isotropic noise scales of the two heads; they cancel from h_y and stay fixed.
    double sigma1_sq = 1.0;
    double sigma2_sq = 1.0;
};

struct HeadsOutput {
    Vector logits;
    Vector xhat_pred;
};
HeadsOutput heads_forward(const LinearHeads& heads, std::span<const double> z, std::span<const double> x);

// Closed-form proxy function
//   h_y(x, xhat) = b1 - W1 W3^+ b2 + W1 W3^+ xhat + (W2 - W1 W3^+ W4) x
// with W1 W3^+ evaluated once per heads snapshot.
class ProxyFunction {
public:
    explicit ProxyFunction(const LinearHeads& heads);
    Vector operator()(std::span<const double> x, std::span<const double> xhat) const;
    const Matrix& w1_w3_pinv() const noexcept { return w1_w3p_; }
    double w3_smallest_singular_value() const noexcept { return w3_smin_; }

private:
    Matrix w1_w3p_;
    Vector intercept_;
    Matrix x_coef_;
    double w3_smin_ = 0.0;
};

Vector solve_h_y(const LinearHeads& heads, std::span<const double> x, std::span<const double> xhat);

struct ProxyPrior {
    Vector mean;
    double variance = 1.0;
    std::string warning;
};

// Slot layout in ProxyModel::params:
//   adapter.*  (beta)   vae.enc.* vae.dec.* (theta)
//   heads.W1 W2 b1 W3 W4 b2 (omega)   pdisc.s.* pdisc.t.* (gamma)
struct ProxyModel {
    std::size_t n = 0;
    std::size_t l = 0;
    std::size_t c = 0;
    MlpSpec adapter;
    MlpSpec encoder;
    MlpSpec decoder;
    MlpSpec discriminator;
    ParamStore params;
    DcmModel dcm;
    std::optional<ProxyPrior> prior;
    WeightingMode weighting = WeightingMode::Density;
    ZMode z_mode = ZMode::Sample;

    std::size_t k() const { return dcm.k; }
    LinearHeads heads() const;
    std::vector<SlotId> minimizer_slots() const;     // omega, beta, theta
    std::vector<SlotId> discriminator_slots() const; // gamma
};

ProxyModel init_proxy_model(std::size_t n, std::size_t c, const DcmModel& dcm, const ProxyConfig& config,
                            RngStream rng);

// phi_beta applied to rows of raw inputs.
Matrix adapt(const ProxyModel& model, const Matrix& x);
// Adapter-space proxies: source x -> phi(M_i(x)), target x -> phi(M_i^-1(x)).
std::vector<Vector> adapted_proxies(const ProxyModel& model, std::span<const double> x, Domain domain);

// ---- losses (recorded on a tape whose store is model.params) ----

struct VaeTerms {
    Var total;
    Var recon;
    Var kl;
    Var z;  // the reparameterised draw (or encoder mean in mean mode)
};
// `features` are adapter-space rows; `noise` is the frozen eps (rows x l).
VaeTerms vae_terms(const ProxyModel& model, Var features, const Matrix& noise);

struct ClassificationTerms {
    Var total;
    Var cross_entropy;
    Var proxy_mse;
};
// `proxies[i]` holds the adapter-space rows of proxy i for the same batch.
ClassificationTerms classification_terms(const ProxyModel& model, Var z, Var features, std::span<const Var> proxies,
                                         std::span<const std::size_t> labels);

Var proxy_terms(const ProxyModel& model, Var x_s, std::span<const Var> proxies_s, Var x_t,
                std::span<const Var> proxies_t);

struct VaeValue {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};
VaeValue vae_loss(const ProxyModel& model, std::span<const double> features, RngStream rng);

double classification_loss(const ProxyModel& model, const Matrix& x_s, std::span<const std::size_t> labels,
                           RngStream rng);

double proxy_loss(const ProxyModel& model, const Matrix& x_s, const Matrix& x_t);

struct Stage2LogEntry {
    std::size_t iteration = 0;
    double classification = 0.0;
    double cross_entropy = 0.0;
    double proxy_mse = 0.0;
    double vae = 0.0;
    double recon = 0.0;
    double kl = 0.0;
    double proxy = 0.0;
    double objective = 0.0;
    double w3_smin = 0.0;
    bool w3_rank_warning = false;
};

struct Stage2Result {
    ProxyModel model;
    std::vector<Stage2LogEntry> log;
};

inline constexpr double kW3RankFloor = 1e-8;

Stage2Result train_stage2(const ProxyConfig& config, const DcmModel& dcm, const Dataset& source, const Dataset& target,
                          std::size_t classes, RngStream rng);

ProxyPrior fit_proxy_prior(const ProxyModel& model, const Dataset& target);

struct Inference {
    Vector logits;
    Vector probs;
    std::size_t predicted = 0;
    Vector weights;
};

Inference infer(const ProxyModel& model, const ProxyFunction& h_y, std::span<const double> x_t);
Inference infer(const ProxyModel& model, std::span<const double> x_t);

} // namespace tcm
