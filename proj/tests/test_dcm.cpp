#include "support.hpp"

#include "tcm/dcm.hpp"
#include "tcm/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace tcm;

namespace {

DcmConfig small_config(std::size_t pairs) {
    DcmConfig c;
    c.pairs = pairs;
    c.disc_hidden = 4;
    c.init_std = 0.3;
    return c;
}

// Zeroes every discriminator weight so both discriminators output sigmoid(0) = 0.5.
void flatten_discriminators(DcmModel& m) {
    for (SlotId id : m.discriminator_slots()) {
        Matrix z(m.params.value(id).rows(), m.params.value(id).cols());
        m.params.set(id, z);
    }
}

void make_identity_pairs(DcmModel& m) {
    for (std::size_t i = 0; i < m.k; ++i)
        for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
            const std::string p = DcmModel::mechanism_prefix(i, d);
            m.params.set(weight_slot(p, 0), Matrix::identity(m.n));
            m.params.set(bias_slot(p, 0), Matrix(1, m.n));
        }
}

void copy_pair(DcmModel& m, std::size_t from, std::size_t to) {
    for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
        const std::string src = DcmModel::mechanism_prefix(from, d), dst = DcmModel::mechanism_prefix(to, d);
        for (std::size_t l = 0; l < m.mechanism.layers(); ++l) {
            m.params.set(weight_slot(dst, l), m.params.value(weight_slot(src, l)));
            m.params.set(bias_slot(dst, l), m.params.value(bias_slot(src, l)));
        }
    }
}

std::vector<Matrix> pair_snapshot(const DcmModel& m, std::size_t pair) {
    std::vector<Matrix> out;
    for (SlotId id : m.pair_slots(pair)) out.push_back(m.params.value(id));
    return out;
}

DcmBatch random_batch(RngStream& rng, std::size_t n, std::size_t rows) {
    return {ref::gaussian(rng, rows, n), ref::gaussian(rng, rows, n, 1.5)};
}

} // namespace

TEST_SUITE("dcm") {

TEST_CASE("identity maps have zero cycle and identity loss") {
    DcmModel m = init_dcm(4, small_config(1), RngStream(31, 1));
    make_identity_pairs(m);
    RngStream rng(31, 2);
    const Vector x = ref::gaussian_vector(rng, 4);
    for (Domain d : {Domain::Source, Domain::Target}) {
        const CycleGanValue v = cyclegan_loss(m, 0, x, d, {10.0, 5.0});
        CHECK(v.cyc == 0.0);
        CHECK(v.idt == 0.0);
    }
}

TEST_CASE("constant discriminators") {
    DcmModel m = init_dcm(3, small_config(1), RngStream(32, 1));
    flatten_discriminators(m);
    RngStream rng(32, 2);
    const Vector x = ref::gaussian_vector(rng, 3);
    CHECK(cyclegan_loss(m, 0, x, Domain::Source, {}).adv == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(cyclegan_loss(m, 0, x, Domain::Source, {}).adv == doctest::Approx(-0.6931471805599453));
    CHECK(discriminator_loss(m, x, Domain::Source) == doctest::Approx(-1.3862943611198906).epsilon(1e-15));
    CHECK(discriminator_loss(m, x, Domain::Target) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("saturated discriminators give an objective near zero") {
    DcmConfig c = small_config(1);
    c.disc_hidden = 1;
    DcmModel m = init_dcm(1, c, RngStream(33, 1));
    for (Domain d : {Domain::Source, Domain::Target}) {
        const std::string p = DcmModel::discriminator_prefix(d);
        m.params.set(weight_slot(p, 0), Matrix{{1.0}});
        m.params.set(bias_slot(p, 0), Matrix{{0.0}});
        m.params.set(weight_slot(p, 1), Matrix{{1000.0}});
        m.params.set(bias_slot(p, 1), Matrix{{0.0}});
    }
    // Real samples are positive, the mechanism flips the sign so fakes are negative.
    m.params.set(weight_slot(DcmModel::mechanism_prefix(0, Direction::SourceToTarget), 0), Matrix{{-1.0}});
    m.params.set(bias_slot(DcmModel::mechanism_prefix(0, Direction::SourceToTarget), 0), Matrix{{0.0}});
    const double obj = discriminator_loss(m, Vector{1.0}, Domain::Source);
    CHECK(obj < 0.0);
    CHECK(obj > -3e-6);
}

TEST_CASE("cyclegan components recombine") {
    DcmModel m = init_dcm(5, small_config(2), RngStream(34, 1));
    RngStream rng(34, 2);
    const Matrix x = ref::gaussian(rng, 7, 5);
    const CycleGanWeights w{10.0, 5.0};
    for (Domain d : {Domain::Source, Domain::Target})
        for (std::size_t i = 0; i < 2; ++i) {
            Tape tape(&m.params);
            const CycleGanTerms t = cyclegan_terms(tape, m, i, x, d, w);
            CHECK(std::abs(t.total.scalar() - (t.adv.scalar() + w.cyc * t.cyc.scalar() + w.idt * t.idt.scalar())) <
                  1e-12);
        }
}

TEST_CASE("cyclegan components against a hand computation") {
    DcmModel m = init_dcm(3, small_config(1), RngStream(35, 1));
    RngStream rng(35, 2);
    const Vector x = ref::gaussian_vector(rng, 3);
    const Matrix fwd_w = m.params.value(weight_slot(DcmModel::mechanism_prefix(0, Direction::SourceToTarget), 0));
    const Matrix fwd_b = m.params.value(bias_slot(DcmModel::mechanism_prefix(0, Direction::SourceToTarget), 0));
    const Matrix rev_w = m.params.value(weight_slot(DcmModel::mechanism_prefix(0, Direction::TargetToSource), 0));
    const Matrix rev_b = m.params.value(bias_slot(DcmModel::mechanism_prefix(0, Direction::TargetToSource), 0));
    auto affine = [](const Matrix& w, const Matrix& b, const Vector& v) {
        Vector o = ref::mul(w, v);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] += b(0, j);
        return o;
    };
    const Vector fake = affine(fwd_w, fwd_b, x);
    const Vector back = affine(rev_w, rev_b, fake);
    const Vector idt = affine(rev_w, rev_b, x);
    double cyc = 0.0, id = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        cyc += std::abs(back[j] - x[j]) / 3.0;
        id += std::abs(idt[j] - x[j]) / 3.0;
    }
    const std::string dt = DcmModel::discriminator_prefix(Domain::Target);
    Vector h = affine(m.params.value(weight_slot(dt, 0)), m.params.value(bias_slot(dt, 0)), fake);
    for (double& v : h) v = v > 0.0 ? v : 0.2 * v;
    const double logit = affine(m.params.value(weight_slot(dt, 1)), m.params.value(bias_slot(dt, 1)), h)[0];
    const double adv = std::log(1.0 - 1.0 / (1.0 + std::exp(-logit)));

    const CycleGanValue v = cyclegan_loss(m, 0, x, Domain::Source, {10.0, 5.0});
    CHECK(v.cyc == doctest::Approx(cyc).epsilon(1e-13));
    CHECK(v.idt == doctest::Approx(id).epsilon(1e-13));
    CHECK(v.adv == doctest::Approx(adv).epsilon(1e-13));
}

TEST_CASE("discriminator objective expands over pairs") {
    DcmModel m = init_dcm(4, small_config(2), RngStream(36, 1));
    RngStream rng(36, 2);
    const Vector x = ref::gaussian_vector(rng, 4);
    const std::string ds = DcmModel::discriminator_prefix(Domain::Source);
    const Matrix real = mlp_forward(m.discriminator, m.params, ds, Matrix::row(x));
    double expect = std::log(real(0, 0));
    for (std::size_t i = 0; i < 2; ++i) expect += 0.5 * cyclegan_loss(m, i, x, Domain::Source, {}).adv;
    CHECK(discriminator_loss(m, x, Domain::Source) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("discriminator objective is symmetric under a domain swap") {
    DcmModel m = init_dcm(4, small_config(2), RngStream(37, 1));
    DcmModel swapped = m;
    for (std::size_t l = 0; l < m.discriminator.layers(); ++l)
        for (auto slot : {&weight_slot, &bias_slot}) {
            const std::string s = slot(DcmModel::discriminator_prefix(Domain::Source), l);
            const std::string t = slot(DcmModel::discriminator_prefix(Domain::Target), l);
            swapped.params.set(s, m.params.value(t));
            swapped.params.set(t, m.params.value(s));
        }
    for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t l = 0; l < m.mechanism.layers(); ++l)
            for (auto slot : {&weight_slot, &bias_slot}) {
                const std::string f = slot(DcmModel::mechanism_prefix(i, Direction::SourceToTarget), l);
                const std::string r = slot(DcmModel::mechanism_prefix(i, Direction::TargetToSource), l);
                swapped.params.set(f, m.params.value(r));
                swapped.params.set(r, m.params.value(f));
            }
    RngStream rng(37, 2);
    for (int t = 0; t < 5; ++t) {
        const Vector x = ref::gaussian_vector(rng, 4);
        CHECK(discriminator_loss(m, x, Domain::Source) == discriminator_loss(swapped, x, Domain::Target));
    }
}

TEST_CASE("dcm losses match finite differences") {
    RngStream rng(38, 2);
    for (MechanismClass kind : {MechanismClass::Affine, MechanismClass::TanhHidden}) {
        DcmConfig c = small_config(2);
        c.mechanism = kind;
        c.mechanism_hidden = 5;
        const DcmModel m = init_dcm(3, c, RngStream(38, 1));
        const Matrix xs = ref::gaussian(rng, 6, 3), xt = ref::gaussian(rng, 6, 3);
        for (Domain d : {Domain::Source, Domain::Target}) {
            const Matrix& x = d == Domain::Source ? xs : xt;
            const auto gen = finite_diff_check(
                [&](Tape& t, const ParamStore&) { return cyclegan_terms(t, m, 1, x, d, {10.0, 5.0}).total; },
                m.params);
            CHECK(gen.max_rel_error < 1e-4);
            const auto disc = finite_diff_check(
                [&](Tape& t, const ParamStore&) { return discriminator_objective(t, m, x, d); }, m.params,
                1e-5, m.discriminator_slots());
            CHECK(disc.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("apply_dcms") {
    DcmModel m = init_dcm(3, small_config(3), RngStream(39, 1));
    make_identity_pairs(m);
    const Vector x{0.5, -1.0, 2.0};
    const auto out = apply_dcms(m, x, Domain::Target);
    CHECK(out.size() == 3);
    for (const auto& v : out) CHECK(v == x);
}

TEST_CASE("true mechanisms loaded as pairs shift one factor exactly") {
    const ScmSpec s = make_benchmark_spec({}, RngStream(40, 1));
    DcmModel m = init_dcm(s.n, small_config(s.k), RngStream(40, 2));
    for (std::size_t i = 0; i < s.k; ++i)
        for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
            const AffineMap t = true_mechanism(s, i, d);
            m.params.set(weight_slot(DcmModel::mechanism_prefix(i, d), 0), t.linear);
            m.params.set(bias_slot(DcmModel::mechanism_prefix(i, d), 0), Matrix::row(t.offset));
        }
    ScmSpec quiet = s;
    quiet.noise_std = 0.0;
    const Dataset d = sample_dataset(quiet, Domain::Source, 10, RngStream(40, 3));
    const Vector delta = s.shift();
    const Matrix left = ref::left_inverse(s.a);
    for (const auto& smp : d.evaluation_samples()) {
        const auto out = apply_dcms(m, smp.x, Domain::Source);
        for (std::size_t i = 0; i < s.k; ++i) {
            Vector diff(s.n);
            for (std::size_t r = 0; r < s.n; ++r) diff[r] = out[i][r] - smp.x[r];
            const Vector du = ref::mul(left, diff);
            for (std::size_t j = 0; j < s.k; ++j) CHECK(std::abs(du[j] - (i == j ? delta[i] : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("competitive step updates only the winner after warmup") {
    DcmConfig c = small_config(2);
    c.warmup = 0;
    DcmModel m = init_dcm(3, c, RngStream(41, 1));
    // Pair 0 is pushed far from identity so its cycle loss is larger.
    const std::string p0 = DcmModel::mechanism_prefix(0, Direction::SourceToTarget);
    m.params.set(weight_slot(p0, 0), 3.0 * Matrix::identity(3));
    DcmTrainerState st = make_trainer_state(m, c);
    RngStream rng(41, 2);
    const DcmBatch batch = random_batch(rng, 3, 8);
    const auto before0 = pair_snapshot(m, 0);
    const auto before1 = pair_snapshot(m, 1);
    const DcmStepResult r = competitive_step(st, m, batch);
    CHECK(r.pair_loss[1] < r.pair_loss[0]);
    CHECK(r.winner == 1);
    CHECK(pair_snapshot(m, 0) == before0);
    CHECK(pair_snapshot(m, 1) != before1);
    CHECK(st.stats[1].post_warmup_wins == 1);
    CHECK(st.stats[0].post_warmup_wins == 0);
}

TEST_CASE("ties go to the lowest index") {
    DcmConfig c = small_config(3);
    c.warmup = 0;
    DcmModel m = init_dcm(3, c, RngStream(42, 1));
    copy_pair(m, 2, 0);
    copy_pair(m, 2, 1);
    DcmTrainerState st = make_trainer_state(m, c);
    RngStream rng(42, 2);
    const DcmStepResult r = competitive_step(st, m, random_batch(rng, 3, 8));
    CHECK(r.pair_loss[0] == r.pair_loss[1]);
    CHECK(r.pair_loss[1] == r.pair_loss[2]);
    CHECK(r.winner == 0);
    CHECK(r.updated == std::vector<bool>{true, false, false});
}

TEST_CASE("every pair updates during warmup") {
    DcmConfig c = small_config(3);
    c.warmup = 5;
    DcmModel m = init_dcm(3, c, RngStream(43, 1));
    DcmTrainerState st = make_trainer_state(m, c);
    RngStream rng(43, 2);
    const DcmStepResult r = competitive_step(st, m, random_batch(rng, 3, 4));
    CHECK(r.warmup);
    CHECK(r.updated == std::vector<bool>{true, true, true});
}

TEST_CASE("empty batch is rejected") {
    DcmConfig c = small_config(1);
    DcmModel m = init_dcm(2, c, RngStream(44, 1));
    DcmTrainerState st = make_trainer_state(m, c);
    CHECK_THROWS_AS(competitive_step(st, m, DcmBatch{Matrix(0, 2), Matrix(0, 2)}), ContractError);
}

TEST_CASE("training") {
    BenchmarkSpecOptions o;
    o.k = 1;
    o.shifts = {1.5};
    const ScmSpec s = make_benchmark_spec(o, RngStream(45, 1));
    const Dataset src = sample_dataset(s, Domain::Source, 500, RngStream(45, 2));
    const Dataset tgt = sample_dataset(s, Domain::Target, 500, RngStream(45, 3));

    SUBCASE("zero iterations keep the initialisation") {
        DcmConfig c;
        c.iterations = 0;
        const DcmTrainResult r = train_dcms(c, src, tgt, RngStream(45, 4));
        CHECK(r.model.params == init_dcm(s.n, c, RngStream(45, 4).split(1)).params);
        CHECK(r.log.empty());
    }
    SUBCASE("the winning pair improves and runs are reproducible") {
        DcmConfig c;
        c.pairs = 2;
        c.warmup = 50;
        c.iterations = 350;
        const DcmTrainResult a = train_dcms(c, src, tgt, RngStream(45, 5));
        const DcmTrainResult b = train_dcms(c, src, tgt, RngStream(45, 5));
        CHECK(a.model.params == b.model.params);
        REQUIRE(a.log.size() == b.log.size());
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].pair_loss == b.log[i].pair_loss);
            CHECK(a.log[i].winner == b.log[i].winner);
        }
        std::size_t post = 0;
        for (const auto& e : a.log) post += !e.warmup;
        CHECK(post == 300);

        const auto& first = a.log.front();
        const auto& last = a.log.back();
        CHECK(last.pair_loss[last.winner] < first.pair_loss[last.winner]);
    }
}

}
