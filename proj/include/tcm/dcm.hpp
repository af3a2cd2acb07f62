#pragma once

#include "tcm/autodiff.hpp"
#include "tcm/mlp.hpp"
#include "tcm/optim.hpp"
#include "tcm/scm.hpp"

#include <functional>
#include <string>
#include <vector>

namespace tcm {

enum class MechanismClass { Affine, TanhHidden };

std::string to_string(MechanismClass m);
MechanismClass mechanism_class_from_string(const std::string& s);

struct CycleGanWeights {
    double cyc = 10.0;  // alpha_1
    double idt = 5.0;   // alpha_2
};

struct DcmConfig {
    std::size_t pairs = 3;
    std::size_t warmup = 500;
    std::size_t iterations = 3000;  // total, warmup included
    std::size_t batch_size = 32;    // per domain
    CycleGanWeights weights;
    MechanismClass mechanism = MechanismClass::Affine;
    std::size_t mechanism_hidden = 16;
    double init_std = 0.02;
    std::size_t disc_hidden = 16;
    AdamHyper adam{2e-3};
    bool per_sample_winners = false;
};

inline constexpr double kProbClampLo = 1e-6;
inline constexpr double kProbClampHi = 1.0 - 1e-6;

// k mechanism pairs (M_i: s->t, M_i^-1: t->s) and the two domain
// discriminators D'_s, D'_t, all stored in one ParamStore.
//   pair<i>.fwd.*  pair<i>.rev.*  disc.s.*  disc.t.*
struct DcmModel {
    std::size_t n = 0;
    std::size_t k = 0;
    MlpSpec mechanism;
    MlpSpec discriminator;
    ParamStore params;

    static std::string mechanism_prefix(std::size_t pair, Direction dir);
    static std::string discriminator_prefix(Domain d);
    std::vector<SlotId> pair_slots(std::size_t pair) const;
    std::vector<SlotId> discriminator_slots() const;
};

DcmModel init_dcm(std::size_t n, const DcmConfig& config, RngStream rng);

MlpSpec mechanism_spec(std::size_t n, MechanismClass kind, std::size_t hidden);
MlpSpec discriminator_spec(std::size_t n, std::size_t hidden);

// M_i on source rows or M_i^-1 on target rows.
Matrix apply_mechanism(const DcmModel& model, std::size_t pair, Direction dir, const Matrix& x);
// Source x -> [M_i(x)], target x -> [M_i^-1(x)], in pair order.
std::vector<Vector> apply_dcms(const DcmModel& model, std::span<const double> x, Domain domain);

struct CycleGanTerms {
    Var total;
    Var adv;
    Var cyc;
    Var idt;
    Var per_sample;  // rows x 1 total loss per sample
};

// Batch-mean CycleGAN loss of one pair for rows of x drawn from `domain`.
CycleGanTerms cyclegan_terms(Tape& tape, const DcmModel& model, std::size_t pair, const Matrix& x, Domain domain,
                             const CycleGanWeights& weights);

struct CycleGanValue {
    double total = 0.0;
    double adv = 0.0;
    double cyc = 0.0;
    double idt = 0.0;
};
CycleGanValue cyclegan_loss(const DcmModel& model, std::size_t pair, std::span<const double> x, Domain domain,
                            const CycleGanWeights& weights);

// Discriminator objective (to be maximised) for rows of x from `domain`:
// mean of log D'_domain(x) + (1/k) sum_i L_adv^i(x). Mechanism outputs are
// constants on the tape.
Var discriminator_objective(Tape& tape, const DcmModel& model, const Matrix& x, Domain domain);
double discriminator_loss(const DcmModel& model, std::span<const double> x, Domain domain);

struct DcmBatch {
    Matrix source;  // B_s x n
    Matrix target;  // B_t x n
    std::size_t size() const { return source.rows() + target.rows(); }
};

struct PairStats {
    std::size_t wins = 0;
    std::size_t post_warmup_wins = 0;
    std::size_t source_wins = 0;  // per-sample mode: samples won per domain
    std::size_t target_wins = 0;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
};

struct DcmTrainerState {
    std::size_t iteration = 0;
    std::size_t warmup = 0;
    CycleGanWeights weights;
    bool per_sample_winners = false;
    std::vector<OptState> pair_opt;
    OptState disc_opt;
    std::vector<PairStats> stats;

    bool in_warmup() const { return iteration < warmup; }
};

DcmTrainerState make_trainer_state(const DcmModel& model, const DcmConfig& config);

struct DcmStepResult {
    std::size_t iteration = 0;
    bool warmup = false;
    std::vector<double> pair_loss;  // batch-mean CycleGAN loss before the update
    std::size_t winner = 0;
    std::vector<bool> updated;
    double disc_objective = 0.0;
};

// One step of competitive training: all pair losses, argmin winner (lowest
// index on ties), update of all pairs during warmup or the winner(s) after,
// then one discriminator ascent step.
DcmStepResult competitive_step(DcmTrainerState& state, DcmModel& model, const DcmBatch& batch);

// Called after every step with the updated model.
using DcmObserver = std::function<void(const DcmStepResult&, const DcmModel&, const DcmBatch&)>;

struct DcmTrainResult {
    DcmModel model;
    DcmTrainerState state;
    std::vector<DcmStepResult> log;
};

DcmBatch sample_dcm_batch(const Dataset& source, const Dataset& target, std::size_t batch_size, RngStream& rng);

DcmTrainResult train_dcms(const DcmConfig& config, const Dataset& source, const Dataset& target, RngStream rng,
                          const DcmObserver& observer = {});

} // namespace tcm
