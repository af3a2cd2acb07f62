#include "support.hpp"

#include "tcm/errors.hpp"
#include "tcm/proxy.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace tcm;

namespace {

ProxyConfig small_proxy(std::size_t latent = 2) {
    ProxyConfig c;
    c.latent = latent;
    c.vae_hidden = 5;
    c.disc_hidden = 4;
    c.init_std = 0.4;
    return c;
}

DcmModel small_dcm(std::size_t n, std::size_t pairs, std::uint64_t seed) {
    DcmConfig c;
    c.pairs = pairs;
    c.disc_hidden = 4;
    c.init_std = 0.2;
    return init_dcm(n, c, RngStream(seed, 1));
}

void zero_group(ParamStore& p, const std::string& prefix) {
    for (SlotId id : p.group(prefix)) p.set(id, Matrix(p.value(id).rows(), p.value(id).cols()));
}

void set_pair(DcmModel& m, std::size_t pair, Direction d, const Matrix& w, const Vector& b) {
    m.params.set(weight_slot(DcmModel::mechanism_prefix(pair, d), 0), w);
    m.params.set(bias_slot(DcmModel::mechanism_prefix(pair, d), 0), Matrix::row(b));
}

Dataset target_rows(const std::vector<Vector>& xs) {
    std::vector<LabeledSample> s;
    for (const auto& x : xs) s.push_back({x, std::nullopt, Domain::Target, {}, {}});
    return Dataset("test", Domain::Target, 0, std::move(s));
}

LinearHeads random_heads(RngStream& rng, std::size_t c, std::size_t l, std::size_t n) {
    return {ref::gaussian(rng, c, l), ref::gaussian(rng, c, n), ref::gaussian_vector(rng, c),
            ref::gaussian(rng, n, l), ref::gaussian(rng, n, n), ref::gaussian_vector(rng, n)};
}

} // namespace

TEST_SUITE("proxy") {

TEST_CASE("heads forward") {
    RngStream rng(51, 1);
    LinearHeads zero{Matrix(3, 2), Matrix(3, 4), {1.0, 2.0, 3.0}, Matrix(4, 2), Matrix(4, 4), {4.0, 5.0, 6.0, 7.0}};
    const HeadsOutput o = heads_forward(zero, Vector{0.3, 0.1}, Vector{1.0, 2.0, 3.0, 4.0});
    CHECK(o.logits == zero.b1);
    CHECK(o.xhat_pred == zero.b2);

    LinearHeads pass{Matrix(3, 2), Matrix::identity(3), {0.0, 0.0, 0.0}, Matrix(3, 2), Matrix(3, 3), {0, 0, 0}};
    CHECK(heads_forward(pass, Vector{5.0, 6.0}, Vector{1.0, -2.0, 0.5}).logits == Vector{1.0, -2.0, 0.5});

    const LinearHeads h = random_heads(rng, 3, 2, 5);
    const Vector z = ref::gaussian_vector(rng, 2), x = ref::gaussian_vector(rng, 5);
    const HeadsOutput r = heads_forward(h, z, x);
    const Vector a = ref::mul(h.w1, z), b = ref::mul(h.w2, x), c = ref::mul(h.w3, z), d = ref::mul(h.w4, x);
    for (std::size_t y = 0; y < 3; ++y) CHECK(r.logits[y] == doctest::Approx(a[y] + b[y] + h.b1[y]).epsilon(1e-14));
    for (std::size_t j = 0; j < 5; ++j) CHECK(r.xhat_pred[j] == doctest::Approx(c[j] + d[j] + h.b2[j]).epsilon(1e-14));
    CHECK_THROWS_AS(heads_forward(h, x, x), ShapeError);
}

TEST_CASE("closed-form proxy function") {
    RngStream rng(52, 1);
    SUBCASE("W1 = 0 drops every xhat term") {
        LinearHeads h = random_heads(rng, 3, 2, 4);
        h.w1 = Matrix(3, 2);
        const Vector x = ref::gaussian_vector(rng, 4), xhat = ref::gaussian_vector(rng, 4);
        const Vector expect = ref::mul(h.w2, x);
        const Vector got = solve_h_y(h, x, xhat);
        for (std::size_t y = 0; y < 3; ++y) CHECK(got[y] == doctest::Approx(expect[y] + h.b1[y]).epsilon(1e-14));
    }
    SUBCASE("identity W3") {
        LinearHeads h = random_heads(rng, 3, 4, 4);
        h.w3 = Matrix::identity(4);
        h.w4 = Matrix(4, 4);
        h.b2 = Vector(4, 0.0);
        const Vector x = ref::gaussian_vector(rng, 4), xhat = ref::gaussian_vector(rng, 4);
        const Vector a = ref::mul(h.w1, xhat), b = ref::mul(h.w2, x);
        const Vector got = solve_h_y(h, x, xhat);
        for (std::size_t y = 0; y < 3; ++y) CHECK(got[y] == doctest::Approx(h.b1[y] + a[y] + b[y]).epsilon(1e-13));
    }
    SUBCASE("random full-column-rank W3 against a left-inverse evaluation") {
        for (int t = 0; t < 10; ++t) {
            const LinearHeads h = random_heads(rng, 3, 3, 7);
            const Vector x = ref::gaussian_vector(rng, 7), xhat = ref::gaussian_vector(rng, 7);
            const Vector wx = ref::mul(h.w4, x);
            Vector r(7);
            for (std::size_t j = 0; j < 7; ++j) r[j] = xhat[j] - wx[j] - h.b2[j];
            const Vector lz = ref::mul(ref::left_inverse(h.w3), r);
            const Vector a = ref::mul(h.w1, lz), b = ref::mul(h.w2, x);
            const Vector got = solve_h_y(h, x, xhat);
            for (std::size_t y = 0; y < 3; ++y) CHECK(std::abs(got[y] - (h.b1[y] + a[y] + b[y])) < 1e-10);
        }
    }
    SUBCASE("plugging in the head mean reproduces f_y") {
        for (int t = 0; t < 20; ++t) {
            const LinearHeads h = random_heads(rng, 3, 2, 6);
            const Vector z = ref::gaussian_vector(rng, 2), x = ref::gaussian_vector(rng, 6);
            const HeadsOutput f = heads_forward(h, z, x);
            CHECK(ref::max_abs(solve_h_y(h, x, f.xhat_pred), f.logits) < 1e-10);
        }
    }
    SUBCASE("evaluation is pure") {
        const LinearHeads h = random_heads(rng, 3, 2, 6);
        const ProxyFunction f(h);
        const Vector x = ref::gaussian_vector(rng, 6), xhat = ref::gaussian_vector(rng, 6);
        CHECK(f(x, xhat) == f(x, xhat));
        CHECK(f(x, xhat) == solve_h_y(h, x, xhat));
        CHECK(f.w3_smallest_singular_value() > 0.0);
    }
}

TEST_CASE("vae loss closed forms") {
    const DcmModel dcm = small_dcm(4, 1, 53);
    ProxyModel m = init_proxy_model(4, 3, dcm, small_proxy(), RngStream(53, 2));
    const Vector x{0.1, -0.2, 0.3, 0.4};
    zero_group(m.params, "vae.enc");
    CHECK(vae_loss(m, x, RngStream(53, 3)).kl == 0.0);

    m.params.set(bias_slot("vae.enc", 1), Matrix{{1.5, -2.0, 0.0, 0.0}});
    CHECK(vae_loss(m, x, RngStream(53, 3)).kl == doctest::Approx((1.5 * 1.5 + 4.0) / 2.0).epsilon(1e-15));

    const VaeValue v = vae_loss(m, x, RngStream(53, 4));
    CHECK(v.total == doctest::Approx(v.recon + v.kl).epsilon(1e-15));
}

TEST_CASE("vae kl agrees with a Monte-Carlo estimate") {
    const DcmModel dcm = small_dcm(4, 1, 54);
    ProxyModel m = init_proxy_model(4, 3, dcm, small_proxy(), RngStream(54, 2));
    Matrix bias = m.params.value(bias_slot("vae.enc", 1));
    bias(0, 0) += 2.0;
    bias(0, 1) -= 1.5;
    bias(0, 2) -= 1.0;
    bias(0, 3) += 0.5;
    m.params.set(bias_slot("vae.enc", 1), bias);
    const Vector x{0.7, -0.3, 1.1, 0.2};
    const Matrix enc = mlp_forward(m.encoder, m.params, "vae.enc", Matrix::row(x));
    const Vector mu{enc(0, 0), enc(0, 1)}, lv{enc(0, 2), enc(0, 3)};
    RngStream rng(54, 3);
    double acc = 0.0;
    const std::size_t draws = 100000;
    for (std::size_t d = 0; d < draws; ++d) {
        double log_ratio = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            const double e = rng.normal();
            const double z = mu[j] + std::exp(0.5 * lv[j]) * e;
            log_ratio += -0.5 * lv[j] - 0.5 * e * e + 0.5 * z * z;
        }
        acc += log_ratio;
    }
    const double mc = acc / draws;
    const double closed = vae_loss(m, x, RngStream(54, 4)).kl;
    CHECK(closed > 1.0);
    CHECK(std::abs(mc - closed) / closed < 0.01);
}

TEST_CASE("classification loss") {
    const DcmModel dcm = small_dcm(4, 2, 55);
    ProxyModel m = init_proxy_model(4, 3, dcm, small_proxy(), RngStream(55, 2));
    RngStream rng(55, 3);
    const Matrix x = ref::gaussian(rng, 6, 4), z = ref::gaussian(rng, 6, 2);
    const std::vector<Matrix> prox{ref::gaussian(rng, 6, 4), ref::gaussian(rng, 6, 4)};
    const std::vector<std::size_t> labels{0, 1, 2, 2, 1, 0};

    auto run = [&](const ProxyModel& model, const std::vector<Matrix>& p) {
        Tape tape(&model.params);
        std::vector<Var> pv;
        for (const auto& m2 : p) pv.push_back(tape.constant(m2));
        const ClassificationTerms t = classification_terms(model, tape.constant(z), tape.constant(x), pv, labels);
        return std::array<double, 3>{t.total.scalar(), t.cross_entropy.scalar(), t.proxy_mse.scalar()};
    };

    SUBCASE("uniform logits give ln 3") {
        ProxyModel u = m;
        zero_group(u.params, "heads.W1");
        zero_group(u.params, "heads.W2");
        CHECK(run(u, prox)[1] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
        CHECK(run(u, prox)[1] == doctest::Approx(1.0986122886681098));
    }
    SUBCASE("perfect logits and perfect proxy regression") {
        ProxyModel p = m;
        zero_group(p.params, "heads.");
        p.params.set("heads.W4", Matrix::identity(4));
        const std::vector<std::size_t> same(6, 1);
        p.params.set("heads.b1", Matrix{{0.0, 1000.0, 0.0}});
        Tape tape(&p.params);
        std::vector<Var> pv{tape.constant(x), tape.constant(x)};
        const ClassificationTerms t = classification_terms(p, tape.constant(z), tape.constant(x), pv, same);
        CHECK(t.total.scalar() < 1e-12);
    }
    SUBCASE("recomposes as cross-entropy plus mean squared error") {
        const LinearHeads h = m.heads();
        double ce = 0.0, mse = 0.0;
        for (std::size_t r = 0; r < 6; ++r) {
            const HeadsOutput f = heads_forward(h, z.row_vector(r), x.row_vector(r));
            ce -= std::log(ref::softmax(f.logits)[labels[r]]) / 6.0;
            for (const auto& p : prox)
                for (std::size_t j = 0; j < 4; ++j) {
                    const double d = f.xhat_pred[j] - p(r, j);
                    mse += d * d / (6.0 * 2.0);
                }
        }
        const auto got = run(m, prox);
        CHECK(got[1] == doctest::Approx(ce).epsilon(1e-13));
        CHECK(got[2] == doctest::Approx(mse).epsilon(1e-13));
        CHECK(got[0] == doctest::Approx(ce + mse).epsilon(1e-13));
    }
    SUBCASE("missing labels") {
        Tape tape(&m.params);
        std::vector<Var> pv{tape.constant(prox[0])};
        const std::vector<std::size_t> short_labels{0, 1};
        CHECK_THROWS_AS(classification_terms(m, tape.constant(z), tape.constant(x), pv, short_labels), ContractError);
    }
}

TEST_CASE("proxy loss") {
    const DcmModel dcm = small_dcm(3, 2, 56);
    RngStream rng(56, 3);
    const Matrix xs = ref::gaussian(rng, 5, 3), xt = ref::gaussian(rng, 5, 3);
    const std::vector<Matrix> ps{ref::gaussian(rng, 5, 3), ref::gaussian(rng, 5, 3)};
    const std::vector<Matrix> pt{ref::gaussian(rng, 5, 3), ref::gaussian(rng, 5, 3)};
    auto run = [&](const ProxyModel& model, const Matrix& a, const std::vector<Matrix>& pa, const Matrix& b,
                   const std::vector<Matrix>& pb) {
        Tape tape(&model.params);
        std::vector<Var> va, vb;
        for (const auto& m2 : pa) va.push_back(tape.constant(m2));
        for (const auto& m2 : pb) vb.push_back(tape.constant(m2));
        return proxy_terms(model, tape.constant(a), va, tape.constant(b), vb).scalar();
    };

    SUBCASE("constant discriminators") {
        ProxyModel m = init_proxy_model(3, 2, dcm, small_proxy(), RngStream(56, 2));
        zero_group(m.params, "pdisc.");
        CHECK(run(m, xs, ps, xt, pt) == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-15));
        CHECK(run(m, xs, ps, xt, pt) == doctest::Approx(-2.772588722239781));
    }
    SUBCASE("saturated discriminators") {
        ProxyConfig c = small_proxy();
        c.disc_hidden = 1;
        ProxyModel m = init_proxy_model(3, 2, dcm, c, RngStream(56, 2));
        for (const char* p : {"pdisc.s", "pdisc.t"}) {
            m.params.set(weight_slot(p, 0), Matrix{{1.0, 0.0, 0.0}});
            m.params.set(bias_slot(p, 0), Matrix{{0.0}});
            m.params.set(weight_slot(p, 1), Matrix{{1000.0}});
            m.params.set(bias_slot(p, 1), Matrix{{0.0}});
        }
        // Real rows have a positive first coordinate, proxies a negative one.
        const Matrix real{{1.0, 0.3, -2.0}, {2.0, -1.0, 0.0}};
        const Matrix fake{{-1.0, 0.3, -2.0}, {-2.0, -1.0, 0.0}};
        const double v = run(m, real, {fake, fake}, real, {fake, fake});
        CHECK(v < 0.0);
        CHECK(v > -5e-6);
    }
    SUBCASE("term-by-term expansion with two proxies") {
        const ProxyModel m = init_proxy_model(3, 2, dcm, small_proxy(), RngStream(56, 2));
        auto d = [&](const char* which, const Matrix& x) {
            const Matrix o = mlp_forward(m.discriminator, m.params, which, x);
            Vector v(o.rows());
            for (std::size_t r = 0; r < o.rows(); ++r) v[r] = std::clamp(o(r, 0), 1e-6, 1.0 - 1e-6);
            return v;
        };
        auto mean_log = [](const Vector& v, bool complement) {
            double s = 0.0;
            for (double p : v) s += std::log(complement ? 1.0 - p : p);
            return s / static_cast<double>(v.size());
        };
        double expect = mean_log(d("pdisc.s", xs), false) + mean_log(d("pdisc.t", xt), false);
        for (std::size_t i = 0; i < 2; ++i)
            expect += 0.5 * mean_log(d("pdisc.t", ps[i]), true) + 0.5 * mean_log(d("pdisc.s", pt[i]), true);
        CHECK(run(m, xs, ps, xt, pt) == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("stage-2 losses match finite differences") {
    const DcmModel dcm = small_dcm(4, 2, 57);
    const ProxyModel m = init_proxy_model(4, 3, dcm, small_proxy(), RngStream(57, 2));
    RngStream rng(57, 3);
    const Matrix xs = ref::gaussian(rng, 5, 4), xt = ref::gaussian(rng, 5, 4);
    const Matrix noise = ref::gaussian(rng, 5, 2);
    const std::vector<std::size_t> labels{0, 2, 1, 1, 0};
    std::vector<Matrix> ps, pt;
    for (std::size_t i = 0; i < 2; ++i) {
        ps.push_back(apply_mechanism(dcm, i, Direction::SourceToTarget, xs));
        pt.push_back(apply_mechanism(dcm, i, Direction::TargetToSource, xt));
    }
    auto adapted = [&](Tape& t, const Matrix& x) { return mlp_apply(m.adapter, "adapter", t.constant(x)); };

    for (ZMode mode : {ZMode::Sample, ZMode::Mean}) {
        ProxyModel mm = m;
        mm.z_mode = mode;
        const auto vae = finite_diff_check(
            [&](Tape& t, const ParamStore&) { return vae_terms(mm, adapted(t, xs), noise).total; }, mm.params);
        CHECK(vae.max_rel_error < 1e-4);
        const auto cls = finite_diff_check(
            [&](Tape& t, const ParamStore&) {
                Var f = adapted(t, xs);
                std::vector<Var> p{adapted(t, ps[0]), adapted(t, ps[1])};
                return classification_terms(mm, vae_terms(mm, f, noise).z, f, p, labels).total;
            },
            mm.params);
        CHECK(cls.max_rel_error < 1e-4);
    }
    const auto lp = finite_diff_check(
        [&](Tape& t, const ParamStore&) {
            std::vector<Var> a{adapted(t, ps[0]), adapted(t, ps[1])}, b{adapted(t, pt[0]), adapted(t, pt[1])};
            return proxy_terms(m, adapted(t, xs), a, adapted(t, xt), b);
        },
        m.params);
    CHECK(lp.max_rel_error < 1e-4);
}

TEST_CASE("proxy prior") {
    SUBCASE("two proxies in population convention") {
        DcmModel dcm = small_dcm(2, 2, 58);
        set_pair(dcm, 0, Direction::TargetToSource, Matrix(2, 2), {0.0, 0.0});
        set_pair(dcm, 1, Direction::TargetToSource, Matrix(2, 2), {2.0, 2.0});
        const ProxyModel m = init_proxy_model(2, 2, dcm, small_proxy(1), RngStream(58, 2));
        const ProxyPrior p = fit_proxy_prior(m, target_rows({{0.3, 0.4}}));
        CHECK(p.mean == Vector{1.0, 1.0});
        CHECK(p.variance == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(p.warning.empty());
    }
    SUBCASE("identical proxies clamp the variance") {
        DcmModel dcm = small_dcm(2, 2, 58);
        for (std::size_t i = 0; i < 2; ++i) set_pair(dcm, i, Direction::TargetToSource, Matrix(2, 2), {0.5, -1.0});
        const ProxyModel m = init_proxy_model(2, 2, dcm, small_proxy(1), RngStream(58, 2));
        const ProxyPrior p = fit_proxy_prior(m, target_rows({{0.3, 0.4}, {1.0, 2.0}}));
        CHECK(p.mean == Vector{0.5, -1.0});
        CHECK(p.variance == 1e-8);
        CHECK_FALSE(p.warning.empty());
    }
    SUBCASE("too few proxies") {
        const ProxyModel m = init_proxy_model(2, 2, small_dcm(2, 1, 58), small_proxy(1), RngStream(58, 2));
        CHECK_THROWS_AS(fit_proxy_prior(m, target_rows({{0.3, 0.4}})), ContractError);
    }
}

TEST_CASE("transported inference") {
    RngStream rng(59, 3);
    SUBCASE("k = 1") {
        ProxyModel m = init_proxy_model(4, 3, small_dcm(4, 1, 59), small_proxy(), RngStream(59, 2));
        const Vector x = ref::gaussian_vector(rng, 4);
        CHECK_THROWS_AS(infer(m, x), ContractError);
        m.prior = ProxyPrior{Vector(4, 0.0), 1.0, {}};
        const Inference r = infer(m, x);
        CHECK(r.weights == Vector{1.0});
        const Vector xhat = apply_mechanism(m.dcm, 0, Direction::TargetToSource, Matrix::row(x)).row_vector(0);
        CHECK(ref::max_abs(r.logits, solve_h_y(m.heads(), x, xhat)) < 1e-12);
        CHECK(ref::max_abs(r.probs, ref::softmax(r.logits)) < 1e-15);
    }
    SUBCASE("equal densities average the two proxy functions") {
        DcmModel dcm = small_dcm(4, 2, 59);
        const Vector v{0.5, -0.25, 1.0, 0.0}, minus_v{-0.5, 0.25, -1.0, 0.0};
        set_pair(dcm, 0, Direction::TargetToSource, Matrix::identity(4), v);
        set_pair(dcm, 1, Direction::TargetToSource, Matrix::identity(4), minus_v);
        ProxyModel m = init_proxy_model(4, 3, dcm, small_proxy(), RngStream(59, 2));
        m.prior = ProxyPrior{Vector(4, 0.0), 0.7, {}};
        const Vector x(4, 0.0);
        const Inference r = infer(m, x);
        CHECK(r.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
        const Vector a = solve_h_y(m.heads(), x, v), b = solve_h_y(m.heads(), x, minus_v);
        for (std::size_t y = 0; y < 3; ++y) CHECK(r.logits[y] == doctest::Approx(0.5 * (a[y] + b[y])).epsilon(1e-12));
    }
    SUBCASE("weights normalise and a common logit shift leaves the prediction") {
        ProxyModel m = init_proxy_model(4, 3, small_dcm(4, 3, 60), small_proxy(), RngStream(60, 2));
        m.prior = ProxyPrior{ref::gaussian_vector(rng, 4), 1.3, {}};
        for (int t = 0; t < 20; ++t) {
            const Vector x = ref::gaussian_vector(rng, 4);
            const Inference r = infer(m, x);
            double s = 0.0;
            for (double w : r.weights) s += w;
            CHECK(std::abs(s - 1.0) < 1e-12);

            ProxyModel shifted = m;
            Matrix b1 = m.params.value("heads.b1");
            for (double& v : b1.data()) v += 3.7;
            shifted.params.set("heads.b1", b1);
            const Inference q = infer(shifted, x);
            for (std::size_t y = 0; y < 3; ++y) CHECK(q.logits[y] == doctest::Approx(r.logits[y] + 3.7).epsilon(1e-12));
            CHECK(q.predicted == r.predicted);
        }
    }
    SUBCASE("uniform weighting") {
        ProxyModel m = init_proxy_model(4, 3, small_dcm(4, 3, 61), small_proxy(), RngStream(61, 2));
        m.prior = ProxyPrior{Vector(4, 0.0), 1.0, {}};
        m.weighting = WeightingMode::Uniform;
        for (double w : infer(m, ref::gaussian_vector(rng, 4)).weights) CHECK(w == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("latent dimension must stay below n") {
    CHECK_THROWS_AS(init_proxy_model(3, 2, small_dcm(3, 1, 62), small_proxy(3), RngStream(62, 2)), ContractError);
}

TEST_CASE("stage-2 training") {
    const ScmSpec s = make_benchmark_spec({}, RngStream(63, 1));
    const Dataset src = sample_dataset(s, Domain::Source, 2000, RngStream(63, 2));
    const Dataset tgt = sample_dataset(s, Domain::Target, 2000, RngStream(63, 3));
    const DcmModel dcm = train_dcms(DcmConfig{}, src, tgt, RngStream(63, 4)).model;

    SUBCASE("zero iterations keep the initialisation") {
        ProxyConfig c;
        c.iterations = 0;
        const Stage2Result r = train_stage2(c, dcm, src, tgt, s.c, RngStream(63, 5));
        CHECK(r.model.params == init_proxy_model(s.n, s.c, dcm, c, RngStream(63, 5).split(1)).params);
        CHECK(r.model.prior.has_value());
    }
    SUBCASE("default budget lowers the classification loss, reproducibly") {
        const ProxyConfig c;
        const Stage2Result a = train_stage2(c, dcm, src, tgt, s.c, RngStream(63, 6));
        const Stage2Result b = train_stage2(c, dcm, src, tgt, s.c, RngStream(63, 6));
        REQUIRE(a.log.size() == c.iterations);
        CHECK(a.log.back().classification < a.log.front().classification);
        CHECK(a.model.params == b.model.params);
        for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].objective == b.log[i].objective);
        CHECK(std::isfinite(gauss_logpdf(adapted_proxies(a.model, tgt.x(0), Domain::Target)[0], a.model.prior->mean,
                                         a.model.prior->variance)));
        CHECK(a.model.prior->variance > 1e-8);
    }
}

}
