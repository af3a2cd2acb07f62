#include "tcm/dcm.hpp"

#include "tcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace tcm {

std::string to_string(MechanismClass m) { return m == MechanismClass::Affine ? "affine" : "tanh-mlp"; }

MechanismClass mechanism_class_from_string(const std::string& s) {
    if (s == "affine") return MechanismClass::Affine;
    if (s == "tanh-mlp") return MechanismClass::TanhHidden;
    throw ContractError("unknown mechanism class '" + s + "'");
}

std::string DcmModel::mechanism_prefix(std::size_t pair, Direction dir) {
    return "pair" + std::to_string(pair) + (dir == Direction::SourceToTarget ? ".fwd" : ".rev");
}

std::string DcmModel::discriminator_prefix(Domain d) { return d == Domain::Source ? "disc.s" : "disc.t"; }

std::vector<SlotId> DcmModel::pair_slots(std::size_t pair) const {
    auto out = params.group("pair" + std::to_string(pair) + ".");
    if (out.empty()) throw ContractError("no parameters for pair " + std::to_string(pair));
    return out;
}

std::vector<SlotId> DcmModel::discriminator_slots() const { return params.group("disc."); }

MlpSpec mechanism_spec(std::size_t n, MechanismClass kind, std::size_t hidden) {
    if (kind == MechanismClass::Affine) return {{n, n}, Activation::Linear, Activation::Linear};
    return {{n, hidden, n}, Activation::Tanh, Activation::Linear};
}

MlpSpec discriminator_spec(std::size_t n, std::size_t hidden) {
    return {{n, hidden, 1}, Activation::LeakyRelu, Activation::Sigmoid, 0.2};
}

DcmModel init_dcm(std::size_t n, const DcmConfig& config, RngStream rng) {
    if (config.pairs == 0) throw ContractError("DCM needs at least one mechanism pair");
    DcmModel m;
    m.n = n;
    m.k = config.pairs;
    m.mechanism = mechanism_spec(n, config.mechanism, config.mechanism_hidden);
    m.discriminator = discriminator_spec(n, config.disc_hidden);
    const MlpInit init = config.mechanism == MechanismClass::Affine ? MlpInit::NearIdentity : MlpInit::Gaussian;
    for (std::size_t i = 0; i < m.k; ++i) {
        register_mlp(m.params, DcmModel::mechanism_prefix(i, Direction::SourceToTarget), m.mechanism, rng,
                     config.init_std, init);
        register_mlp(m.params, DcmModel::mechanism_prefix(i, Direction::TargetToSource), m.mechanism, rng,
                     config.init_std, init);
    }
    register_mlp(m.params, DcmModel::discriminator_prefix(Domain::Source), m.discriminator, rng, config.init_std);
    register_mlp(m.params, DcmModel::discriminator_prefix(Domain::Target), m.discriminator, rng, config.init_std);
    return m;
}

Matrix apply_mechanism(const DcmModel& model, std::size_t pair, Direction dir, const Matrix& x) {
    if (pair >= model.k) throw ContractError("pair index out of range");
    Matrix y = mlp_forward(model.mechanism, model.params, DcmModel::mechanism_prefix(pair, dir), x);
    // The tanh-mlp mechanism is residual so that it also starts near identity.
    if (model.mechanism.layers() > 1) y += x;
    return y;
}

std::vector<Vector> apply_dcms(const DcmModel& model, std::span<const double> x, Domain domain) {
    if (x.size() != model.n)
        throw ShapeError("apply_dcms: x has " + std::to_string(x.size()) + " dims, model expects " +
                         std::to_string(model.n));
    const Direction dir = domain == Domain::Source ? Direction::SourceToTarget : Direction::TargetToSource;
    const Matrix row = Matrix::row(x);
    std::vector<Vector> out;
    out.reserve(model.k);
    for (std::size_t i = 0; i < model.k; ++i) out.push_back(apply_mechanism(model, i, dir, row).row_vector(0));
    return out;
}

namespace {

Var mechanism_on_tape(const DcmModel& model, std::size_t pair, Direction dir, Var x) {
    Var y = mlp_apply(model.mechanism, DcmModel::mechanism_prefix(pair, dir), x);
    if (model.mechanism.layers() > 1) y = y + x;
    return y;
}

Var clamped_disc(const DcmModel& model, Domain which, Var x) {
    return ad::clamp_straight_through(mlp_apply(model.discriminator, DcmModel::discriminator_prefix(which), x),
                                      kProbClampLo, kProbClampHi);
}

void require_finite(const Var& v, const char* component) {
    if (!v.value().all_finite()) throw NumericError(std::string("non-finite ") + component);
}

} // namespace

CycleGanTerms cyclegan_terms(Tape& tape, const DcmModel& model, std::size_t pair, const Matrix& x, Domain domain,
                             const CycleGanWeights& w) {
    if (x.cols() != model.n) throw ShapeError("cyclegan_terms: x width mismatch");
    if (x.rows() == 0) throw ContractError("cyclegan_terms: empty input");
    const Direction there = domain == Domain::Source ? Direction::SourceToTarget : Direction::TargetToSource;
    const Direction back = domain == Domain::Source ? Direction::TargetToSource : Direction::SourceToTarget;
    Var xv = tape.constant(x);
    Var fake = mechanism_on_tape(model, pair, there, xv);
    Var adv = ad::log(ad::add_scalar(-1.0 * clamped_disc(model, other(domain), fake), 1.0));
    // L1 distances are averaged over coordinates, as in the reference CycleGAN losses.
    const double inv_n = 1.0 / static_cast<double>(model.n);
    Var cyc = inv_n * ad::row_sum(ad::abs(mechanism_on_tape(model, pair, back, fake) - xv));
    Var idt = inv_n * ad::row_sum(ad::abs(mechanism_on_tape(model, pair, back, xv) - xv));
    require_finite(adv, "adversarial loss");
    require_finite(cyc, "cycle loss");
    require_finite(idt, "identity loss");
    Var per = adv + w.cyc * cyc + w.idt * idt;
    return {ad::mean(per), ad::mean(adv), ad::mean(cyc), ad::mean(idt), per};
}

CycleGanValue cyclegan_loss(const DcmModel& model, std::size_t pair, std::span<const double> x, Domain domain,
                            const CycleGanWeights& weights) {
    Tape tape(&model.params);
    auto t = cyclegan_terms(tape, model, pair, Matrix::row(x), domain, weights);
    return {t.total.scalar(), t.adv.scalar(), t.cyc.scalar(), t.idt.scalar()};
}

Var discriminator_objective(Tape& tape, const DcmModel& model, const Matrix& x, Domain domain) {
    if (model.k == 0) throw ContractError("discriminator objective needs at least one pair");
    if (x.rows() == 0) throw ContractError("discriminator objective: empty input");
    const Direction there = domain == Domain::Source ? Direction::SourceToTarget : Direction::TargetToSource;
    Var real = ad::log(clamped_disc(model, domain, tape.constant(x)));
    Var fake_sum;
    for (std::size_t i = 0; i < model.k; ++i) {
        Var fake = tape.constant(apply_mechanism(model, i, there, x));
        Var term = ad::log(ad::add_scalar(-1.0 * clamped_disc(model, other(domain), fake), 1.0));
        fake_sum = i == 0 ? term : fake_sum + term;
    }
    Var obj = ad::mean(real + (1.0 / static_cast<double>(model.k)) * fake_sum);
    require_finite(obj, "discriminator loss");
    return obj;
}

double discriminator_loss(const DcmModel& model, std::span<const double> x, Domain domain) {
    Tape tape(&model.params);
    return discriminator_objective(tape, model, Matrix::row(x), domain).scalar();
}

DcmTrainerState make_trainer_state(const DcmModel& model, const DcmConfig& config) {
    DcmTrainerState s;
    s.warmup = config.warmup;
    s.weights = config.weights;
    s.per_sample_winners = config.per_sample_winners;
    for (std::size_t i = 0; i < model.k; ++i) s.pair_opt.push_back(make_adam(model.params, model.pair_slots(i), config.adam));
    s.disc_opt = make_adam(model.params, model.discriminator_slots(), config.adam);
    s.stats.resize(model.k);
    return s;
}

DcmStepResult competitive_step(DcmTrainerState& state, DcmModel& model, const DcmBatch& batch) {
    if (batch.size() == 0) throw ContractError("competitive_step: empty batch");
    const std::size_t k = model.k;
    const std::size_t bs = batch.source.rows();
    const std::size_t bt = batch.target.rows();
    const double total_rows = static_cast<double>(bs + bt);

    struct PairTape {
        std::unique_ptr<Tape> tape;
        Var loss;
        std::vector<double> per_sample;  // source rows then target rows
        Var per_s;
        Var per_t;
        bool has_s = false;
        bool has_t = false;
    };
    std::vector<PairTape> tapes(k);
    DcmStepResult result;
    result.iteration = state.iteration;
    result.warmup = state.in_warmup();
    result.pair_loss.resize(k);
    result.updated.assign(k, false);

    for (std::size_t i = 0; i < k; ++i) {
        PairTape& pt = tapes[i];
        pt.tape = std::make_unique<Tape>(&model.params);
        Var sum;
        bool have = false;
        auto add_part = [&](const Matrix& x, Domain d, Var& per_out, bool& flag) {
            if (x.rows() == 0) return;
            auto terms = cyclegan_terms(*pt.tape, model, i, x, d, state.weights);
            per_out = terms.per_sample;
            flag = true;
            for (double v : terms.per_sample.value().data()) pt.per_sample.push_back(v);
            Var s = ad::sum(terms.per_sample);
            sum = have ? sum + s : s;
            have = true;
        };
        add_part(batch.source, Domain::Source, pt.per_s, pt.has_s);
        add_part(batch.target, Domain::Target, pt.per_t, pt.has_t);
        pt.loss = (1.0 / total_rows) * sum;
        result.pair_loss[i] = pt.loss.scalar();
    }
    result.winner = static_cast<std::size_t>(
        std::min_element(result.pair_loss.begin(), result.pair_loss.end()) - result.pair_loss.begin());

    // Discriminator gradients from pre-update parameters.
    Gradients disc_grads;
    {
        Tape tape(&model.params);
        Var obj;
        bool have = false;
        if (bs > 0) {
            obj = (static_cast<double>(bs) / total_rows) * discriminator_objective(tape, model, batch.source, Domain::Source);
            have = true;
        }
        if (bt > 0) {
            Var t = (static_cast<double>(bt) / total_rows) * discriminator_objective(tape, model, batch.target, Domain::Target);
            obj = have ? obj + t : t;
        }
        result.disc_objective = obj.scalar();
        disc_grads = tape.backward(-1.0 * obj);
    }

    std::vector<Gradients> pair_grads(k);
    if (result.warmup) {
        for (std::size_t i = 0; i < k; ++i) {
            pair_grads[i] = tapes[i].tape->backward(tapes[i].loss);
            result.updated[i] = true;
        }
    } else if (!state.per_sample_winners) {
        const std::size_t w = result.winner;
        pair_grads[w] = tapes[w].tape->backward(tapes[w].loss);
        result.updated[w] = true;
    } else {
        const std::size_t rows = bs + bt;
        std::vector<std::size_t> owner(rows, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 1; i < k; ++i)
                if (tapes[i].per_sample[r] < tapes[owner[r]].per_sample[r]) owner[r] = i;
            auto& st = state.stats[owner[r]];
            (r < bs ? st.source_wins : st.target_wins) += 1;
        }
        for (std::size_t i = 0; i < k; ++i) {
            Matrix mask_s(bs, 1), mask_t(bt, 1);
            std::size_t won = 0;
            for (std::size_t r = 0; r < rows; ++r) {
                if (owner[r] != i) continue;
                ++won;
                if (r < bs) mask_s(r, 0) = 1.0;
                else mask_t(r - bs, 0) = 1.0;
            }
            if (won == 0) continue;
            Tape& t = *tapes[i].tape;
            Var sum;
            bool have = false;
            if (tapes[i].has_s) {
                sum = ad::sum(ad::mul(tapes[i].per_s, t.constant(mask_s)));
                have = true;
            }
            if (tapes[i].has_t) {
                Var st = ad::sum(ad::mul(tapes[i].per_t, t.constant(mask_t)));
                sum = have ? sum + st : st;
            }
            pair_grads[i] = t.backward((1.0 / static_cast<double>(won)) * sum);
            result.updated[i] = true;
        }
    }

    for (std::size_t i = 0; i < k; ++i)
        if (result.updated[i]) adam_step(state.pair_opt[i], model.params, pair_grads[i]);
    adam_step(state.disc_opt, model.params, disc_grads);

    auto& ws = state.stats[result.winner];
    ++ws.wins;
    if (!result.warmup) ++ws.post_warmup_wins;
    for (std::size_t i = 0; i < k; ++i) {
        state.stats[i].loss_sum += result.pair_loss[i];
        ++state.stats[i].loss_count;
    }
    ++state.iteration;
    return result;
}

DcmBatch sample_dcm_batch(const Dataset& source, const Dataset& target, std::size_t batch_size, RngStream& rng) {
    std::vector<std::size_t> rs(batch_size), rt(batch_size);
    for (auto& r : rs) r = rng.below(source.size());
    for (auto& r : rt) r = rng.below(target.size());
    return {source.features(rs), target.features(rt)};
}

DcmTrainResult train_dcms(const DcmConfig& config, const Dataset& source, const Dataset& target, RngStream rng,
                          const DcmObserver& observer) {
    if (source.empty() || target.empty()) throw ContractError("train_dcms: empty dataset");
    if (source.dim() != target.dim()) throw ShapeError("train_dcms: source and target dimensions differ");
    if (config.batch_size == 0) throw ContractError("train_dcms: batch size must be positive");
    DcmTrainResult out{init_dcm(source.dim(), config, rng.split(1)), {}, {}};
    out.state = make_trainer_state(out.model, config);
    RngStream batch_rng = rng.split(2);
    out.log.reserve(config.iterations);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const DcmBatch batch = sample_dcm_batch(source, target, config.batch_size, batch_rng);
        try {
            out.log.push_back(competitive_step(out.state, out.model, batch));
        } catch (const NumericError& e) {
            throw NumericError("DCM iteration " + std::to_string(it) + ": " + e.what());
        }
        if (observer) observer(out.log.back(), out.model, batch);
    }
    return out;
}

} // namespace tcm
