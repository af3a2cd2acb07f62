#include "verify.hpp"

#include "tcm/bench.hpp"
#include "tcm/errors.hpp"
#include "tcm/linalg.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace tcm::cli {

namespace {

template <class F>
SuiteResult timed(const std::string& name, F body) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r;
    r.name = name;
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Matrix gaussian(RngStream& rng, std::size_t r, std::size_t c, double std = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = std * rng.normal();
    return m;
}

ScmSpec random_affine_scm(RngStream& rng) {
    BenchmarkSpecOptions o;
    o.k = 1 + rng.below(4);
    o.n = o.k + 1 + rng.below(6);
    o.c = 2 + rng.below(3);
    o.shifts.clear();
    for (std::size_t i = 0; i < o.k; ++i) o.shifts.push_back((rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform()));
    return make_benchmark_spec(o, rng);
}

} // namespace

SuiteResult penrose_suite(std::size_t matrices, bool corrupt, std::uint64_t seed) {
    return timed("penrose", [&](SuiteResult& r) {
        RngStream rng(seed, 101);
        SvdOptions opt;
        opt.skip_last_sweep = corrupt;
        double worst = 0.0;
        for (std::size_t t = 0; t < matrices; ++t) {
            const std::size_t m = 1 + rng.below(16), n = 1 + rng.below(16);
            const Matrix a = gaussian(rng, m, n);
            worst = std::max(worst, penrose_residual(a, pinv(a, kDefaultRcond, opt)).worst());
        }
        r.passed = worst < 1e-8;
        r.detail = fmt("%g matrices, worst residual %.3g (limit 1e-8)", static_cast<double>(matrices), worst);
    });
}

SuiteResult gradient_suite(std::size_t instances, std::uint64_t seed) {
    return timed("gradients", [&](SuiteResult& r) {
        double worst = 0.0;
        std::string worst_loss;
        auto track = [&](const std::string& loss, const FiniteDiffReport& rep) {
            if (rep.max_rel_error >= worst) {
                worst = rep.max_rel_error;
                worst_loss = loss + " (" + rep.worst_slot + ")";
            }
        };
        for (std::size_t t = 0; t < instances; ++t) {
            RngStream rng(seed, 200 + t);
            const std::size_t n = 4, rows = 5, c = 3;
            DcmConfig dc;
            dc.pairs = 2;
            dc.init_std = 0.3;
            dc.disc_hidden = 5;
            const DcmModel dcm = init_dcm(n, dc, rng.split(1));
            ProxyConfig pc;
            pc.latent = 2;
            pc.vae_hidden = 5;
            pc.disc_hidden = 5;
            pc.init_std = 0.5;
            ProxyModel pm = init_proxy_model(n, c, dcm, pc, rng.split(2));
            RngStream data = rng.split(3);
            const Matrix xs = gaussian(data, rows, n), xt = gaussian(data, rows, n);
            const Matrix noise = gaussian(data, rows, pc.latent);
            std::vector<std::size_t> labels(rows);
            for (auto& y : labels) y = data.below(c);
            const CycleGanWeights w{10.0, 5.0};

            auto adapted = [&](Tape& tape, const Matrix& raw) { return mlp_apply(pm.adapter, "adapter", tape.constant(raw)); };
            auto proxies = [&](Tape& tape, const Matrix& raw, Direction d) {
                std::vector<Var> out;
                for (std::size_t i = 0; i < dcm.k; ++i) out.push_back(adapted(tape, apply_mechanism(dcm, i, d, raw)));
                return out;
            };

            track("vae", finite_diff_check([&](Tape& tape, const ParamStore&) {
                       return vae_terms(pm, adapted(tape, xs), noise).total;
                   }, pm.params));
            track("classification", finite_diff_check([&](Tape& tape, const ParamStore&) {
                       Var f = adapted(tape, xs);
                       auto ps = proxies(tape, xs, Direction::SourceToTarget);
                       return classification_terms(pm, vae_terms(pm, f, noise).z, f, ps, labels).total;
                   }, pm.params));
            track("proxy", finite_diff_check([&](Tape& tape, const ParamStore&) {
                       auto ps = proxies(tape, xs, Direction::SourceToTarget);
                       auto pt = proxies(tape, xt, Direction::TargetToSource);
                       return proxy_terms(pm, adapted(tape, xs), ps, adapted(tape, xt), pt);
                   }, pm.params));
            for (Domain d : {Domain::Source, Domain::Target}) {
                const Matrix& x = d == Domain::Source ? xs : xt;
                track("cyclegan", finite_diff_check([&](Tape& tape, const ParamStore&) {
                           return cyclegan_terms(tape, dcm, t % dcm.k, x, d, w).total;
                       }, dcm.params));
                track("discriminator", finite_diff_check([&](Tape& tape, const ParamStore&) {
                           return discriminator_objective(tape, dcm, x, d);
                       }, dcm.params, 1e-5, dcm.discriminator_slots()));
            }
        }
        r.passed = worst < 1e-4;
        r.detail = fmt("%g instances per loss, worst relative error %.3g (limit 1e-4)", static_cast<double>(instances),
                       worst) +
                   ", worst at " + worst_loss;
    });
}

SuiteResult proxy_identity_suite(std::size_t instances, std::size_t draws, std::uint64_t seed) {
    return timed("proxy-identity", [&](SuiteResult& r) {
        double worst_mc = 0.0, worst_exact = 0.0;
        for (std::size_t t = 0; t < instances; ++t) {
            RngStream rng(seed, 300 + t);
            const std::size_t n = 6, l = 3, c = 3;
            Matrix w3 = gaussian(rng, n, l);
            while (condition_number(w3) > 10.0) w3 = gaussian(rng, n, l);
            LinearHeads h{gaussian(rng, c, l), gaussian(rng, c, n), gaussian(rng, 1, c).row_vector(0),
                          w3, gaussian(rng, n, n), gaussian(rng, 1, n).row_vector(0)};
            const Vector z = gaussian(rng, 1, l).row_vector(0), x = gaussian(rng, 1, n).row_vector(0);
            const HeadsOutput f = heads_forward(h, z, x);
            const ProxyFunction h_y(h);
            Vector mean(c, 0.0), xhat(n);
            for (std::size_t d = 0; d < draws; ++d) {
                for (std::size_t j = 0; j < n; ++j) xhat[j] = f.xhat_pred[j] + rng.normal();
                const Vector v = h_y(x, xhat);
                for (std::size_t y = 0; y < c; ++y) mean[y] += v[y];
            }
            double norm = 0.0, mc = 0.0, exact = 0.0;
            const Vector plug = h_y(x, f.xhat_pred);
            for (std::size_t y = 0; y < c; ++y) {
                const double e = mean[y] / static_cast<double>(draws) - f.logits[y];
                norm += f.logits[y] * f.logits[y];
                mc += e * e;
                exact = std::max(exact, std::abs(plug[y] - f.logits[y]));
            }
            worst_mc = std::max(worst_mc, std::sqrt(mc / norm));
            worst_exact = std::max(worst_exact, exact);
        }
        r.passed = worst_mc < 0.01 && worst_exact < 1e-10;
        r.detail = fmt("Monte-Carlo relative error %.3g (limit 0.01), plug-in error %.3g (limit 1e-10)", worst_mc,
                       worst_exact);
    });
}

SuiteResult faithfulness_suite(std::size_t scms, std::uint64_t seed) {
    return timed("faithfulness", [&](SuiteResult& r) {
        double worst_true = 0.0, weakest_control = 1e300;
        std::size_t iff_failures = 0;
        for (std::size_t t = 0; t < scms; ++t) {
            RngStream rng(seed, 400 + t);
            const ScmSpec spec = random_affine_scm(rng);
            const Dataset probe = sample_dataset(spec, Domain::Source, 64, rng.split(1));
            const Matrix a_pinv = pinv(spec.a);
            for (std::size_t i = 0; i < spec.k; ++i) {
                const AffineMap m = true_mechanism(spec, i, Direction::SourceToTarget);
                worst_true = std::max(worst_true, disentanglement_score(spec, m, i, probe).off_score);

                // g o M' o g^-1 with M' acting on u_i only (scale and shift) or on u_i and u_j.
                const double scale = 0.5 + rng.uniform(), shift = rng.normal();
                const std::size_t j = spec.k > 1 ? (i + 1 + rng.below(spec.k - 1)) % spec.k : i;
                const double leak = spec.k > 1 ? (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.2 + rng.uniform()) : 0.0;
                auto in_u = [&](bool entangle) {
                    return [&, entangle](std::span<const double> x) {
                        Vector u = matvec(a_pinv, sub(x, spec.b));
                        u[i] = scale * u[i] + shift;
                        if (entangle) u[j] += leak;
                        return add(matvec(spec.a, u), spec.b);
                    };
                };
                const double single = disentanglement_score(spec, in_u(false), i, probe).off_score;
                worst_true = std::max(worst_true, single);
                if (!(single < 1e-8)) ++iff_failures;
                if (spec.k > 1) {
                    const double entangled = disentanglement_score(spec, in_u(true), i, probe).off_score;
                    weakest_control = std::min(weakest_control, entangled);
                    if (entangled < 1e-8) ++iff_failures;
                }
            }
        }
        r.passed = worst_true < 1e-8 && weakest_control > 0.1 && iff_failures == 0;
        r.detail = fmt("worst disentangled leakage %.3g (limit 1e-8), weakest entangled control %.3g (limit 0.1), ",
                       worst_true, weakest_control) +
                   std::to_string(iff_failures) + " iff violations over " + std::to_string(scms) + " SCMs";
    });
}

SuiteResult winner_suite(std::size_t steps, std::uint64_t seed) {
    return timed("winner-exclusivity", [&](SuiteResult& r) {
        ExperimentConfig cfg;
        const BenchData data = make_bench_data(cfg.scm, seed);
        DcmConfig dc = cfg.dcm;
        dc.warmup = 20;
        DcmModel model = init_dcm(data.spec.n, dc, RngStream(seed, 500));
        DcmTrainerState state = make_trainer_state(model, dc);
        RngStream batches(seed, 501);
        std::size_t violations = 0, checked = 0;
        for (std::size_t s = 0; s < dc.warmup + steps; ++s) {
            const DcmBatch batch = sample_dcm_batch(data.source, data.target, dc.batch_size, batches);
            const ParamStore before = model.params;
            const DcmStepResult res = competitive_step(state, model, batch);
            if (res.warmup) continue;
            ++checked;
            for (std::size_t i = 0; i < model.k; ++i) {
                bool changed = false;
                for (SlotId id : model.pair_slots(i)) changed |= !(before.value(id) == model.params.value(id));
                if (changed != (i == res.winner)) ++violations;
            }
        }

        // Ties: identical pairs must resolve to the lowest index.
        DcmConfig tc = dc;
        tc.warmup = 0;
        DcmModel tied = init_dcm(data.spec.n, tc, RngStream(seed, 502));
        for (std::size_t i = 1; i < tied.k; ++i) {
            const auto src = tied.pair_slots(0), dst = tied.pair_slots(i);
            for (std::size_t q = 0; q < src.size(); ++q) tied.params.set(dst[q], tied.params.value(src[q]));
        }
        DcmTrainerState ts = make_trainer_state(tied, tc);
        const DcmBatch batch = sample_dcm_batch(data.source, data.target, tc.batch_size, batches);
        const DcmStepResult tie = competitive_step(ts, tied, batch);
        const bool all_equal = tie.pair_loss[1] == tie.pair_loss[0] && tie.pair_loss[2] == tie.pair_loss[0];
        const bool tie_ok = all_equal && tie.winner == 0;

        r.passed = violations == 0 && checked == steps && tie_ok;
        r.detail = std::to_string(checked) + " post-warmup steps, " + std::to_string(violations) +
                   " exclusivity violations; three-way tie resolved to pair " + std::to_string(tie.winner);
    });
}

SuiteResult end_to_end_suite(const ExperimentConfig& config) {
    return timed("end-to-end", [&](SuiteResult& r) {
        const BenchData data = make_bench_data(config.scm, config.seed);
        const BenchReports rep = run_bench(config, data);
        r.passed = rep.tcm.oracle_agreement > rep.source_only.oracle_agreement &&
                   rep.tcm.tv_distance < rep.source_only.tv_distance;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "oracle agreement tcm %.3f / source-only %.3f / domain-map %.3f; TV tcm %.3f / source-only %.3f "
                      "/ domain-map %.3f",
                      rep.tcm.oracle_agreement, rep.source_only.oracle_agreement, rep.domain_map.oracle_agreement,
                      rep.tcm.tv_distance, rep.source_only.tv_distance, rep.domain_map.tv_distance);
        r.detail = buf;
    });
}

std::vector<SuiteResult> run_verify(const VerifyOptions& o) {
    const bool full = o.level == VerifyLevel::Full;
    std::vector<SuiteResult> out;
    out.push_back(penrose_suite(200, o.corrupt_pinv, o.seed));
    out.push_back(gradient_suite(full ? 20 : 4, o.seed));
    out.push_back(proxy_identity_suite(full ? 100 : 5, 100000, o.seed));
    out.push_back(faithfulness_suite(50, o.seed));
    out.push_back(winner_suite(full ? 500 : 100, o.seed));
    if (full) out.push_back(end_to_end_suite(o.experiment));
    return out;
}

} // namespace tcm::cli
