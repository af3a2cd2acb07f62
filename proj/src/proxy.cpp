#include "tcm/proxy.hpp"

#include "tcm/errors.hpp"
#include "tcm/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace tcm {

std::string to_string(WeightingMode m) { return m == WeightingMode::Density ? "density" : "uniform"; }

WeightingMode weighting_from_string(const std::string& s) {
    if (s == "density") return WeightingMode::Density;
    if (s == "uniform") return WeightingMode::Uniform;
    throw ContractError("unknown weighting mode '" + s + "'");
}

std::string to_string(ZMode m) { return m == ZMode::Sample ? "sample" : "mean"; }

ZMode z_mode_from_string(const std::string& s) {
    if (s == "sample") return ZMode::Sample;
    if (s == "mean") return ZMode::Mean;
    throw ContractError("unknown z mode '" + s + "'");
}

// ---------------------------------------------------------------- heads / h_y

HeadsOutput heads_forward(const LinearHeads& h, std::span<const double> z, std::span<const double> x) {
    if (z.size() != h.w1.cols() || x.size() != h.w2.cols())
        throw ShapeError("heads_forward: z has " + std::to_string(z.size()) + " dims, x has " +
                         std::to_string(x.size()));
    return {add(add(matvec(h.w1, z), matvec(h.w2, x)), h.b1), add(add(matvec(h.w3, z), matvec(h.w4, x)), h.b2)};
}

ProxyFunction::ProxyFunction(const LinearHeads& h) {
    if (!h.w1.all_finite() || !h.w2.all_finite() || !h.w3.all_finite() || !h.w4.all_finite())
        throw NumericError("proxy function: non-finite heads");
    const Svd d = svd(h.w3);
    w3_smin_ = d.s.empty() ? 0.0 : d.s.back();
    w1_w3p_ = matmul(h.w1, pinv(h.w3));
    intercept_ = sub(h.b1, matvec(w1_w3p_, h.b2));
    x_coef_ = h.w2 - matmul(w1_w3p_, h.w4);
}

Vector ProxyFunction::operator()(std::span<const double> x, std::span<const double> xhat) const {
    if (x.size() != x_coef_.cols() || xhat.size() != w1_w3p_.cols())
        throw ShapeError("h_y: x has " + std::to_string(x.size()) + " dims, xhat has " + std::to_string(xhat.size()));
    return add(add(intercept_, matvec(w1_w3p_, xhat)), matvec(x_coef_, x));
}

Vector solve_h_y(const LinearHeads& heads, std::span<const double> x, std::span<const double> xhat) {
    return ProxyFunction(heads)(x, xhat);
}

// ---------------------------------------------------------------- model

LinearHeads ProxyModel::heads() const {
    LinearHeads h;
    h.w1 = params.value("heads.W1");
    h.w2 = params.value("heads.W2");
    h.b1 = params.value("heads.b1").row_vector(0);
    h.w3 = params.value("heads.W3");
    h.w4 = params.value("heads.W4");
    h.b2 = params.value("heads.b2").row_vector(0);
    return h;
}

std::vector<SlotId> ProxyModel::minimizer_slots() const {
    std::vector<SlotId> out;
    for (const char* prefix : {"adapter.", "vae.", "heads."}) {
        auto g = params.group(prefix);
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

std::vector<SlotId> ProxyModel::discriminator_slots() const { return params.group("pdisc."); }

ProxyModel init_proxy_model(std::size_t n, std::size_t c, const DcmModel& dcm, const ProxyConfig& config,
                            RngStream rng) {
    if (config.latent == 0 || config.latent >= n)
        throw ContractError("latent dimension l must satisfy 0 < l < n (l=" + std::to_string(config.latent) +
                            ", n=" + std::to_string(n) + ")");
    if (dcm.n != n) throw ShapeError("proxy model: DCM dimension differs from data dimension");
    ProxyModel m;
    m.n = n;
    m.l = config.latent;
    m.c = c;
    m.dcm = dcm;
    m.weighting = config.weighting;
    m.z_mode = config.z_mode;
    m.adapter = {{n, n}, Activation::Linear, Activation::Linear};
    m.encoder = {{n, config.vae_hidden, 2 * m.l}, Activation::Relu, Activation::Linear};
    m.decoder = {{m.l, config.vae_hidden, n}, Activation::Relu, Activation::Linear};
    m.discriminator = discriminator_spec(n, config.disc_hidden);

    register_mlp(m.params, "adapter", m.adapter, rng, 0.0, MlpInit::NearIdentity);
    register_mlp(m.params, "vae.enc", m.encoder, rng, config.init_std);
    register_mlp(m.params, "vae.dec", m.decoder, rng, config.init_std);
    auto gaussian = [&](std::size_t r, std::size_t cc) {
        Matrix w(r, cc);
        for (auto& v : w.data()) v = config.init_std * rng.normal();
        return w;
    };
    m.params.add("heads.W1", gaussian(c, m.l));
    m.params.add("heads.W2", gaussian(c, n));
    m.params.add("heads.b1", Matrix(1, c));
    m.params.add("heads.W3", gaussian(n, m.l));
    m.params.add("heads.W4", gaussian(n, n));
    m.params.add("heads.b2", Matrix(1, n));
    register_mlp(m.params, "pdisc.s", m.discriminator, rng, config.init_std);
    register_mlp(m.params, "pdisc.t", m.discriminator, rng, config.init_std);
    return m;
}

Matrix adapt(const ProxyModel& model, const Matrix& x) { return mlp_forward(model.adapter, model.params, "adapter", x); }

std::vector<Vector> adapted_proxies(const ProxyModel& model, std::span<const double> x, Domain domain) {
    std::vector<Vector> raw = apply_dcms(model.dcm, x, domain);
    const Matrix a = adapt(model, stack_rows(raw));
    std::vector<Vector> out;
    out.reserve(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out.push_back(a.row_vector(i));
    return out;
}

// ---------------------------------------------------------------- losses

namespace {

Var clamped_disc(const ProxyModel& model, Domain which, Var x) {
    return ad::clamp_straight_through(
        mlp_apply(model.discriminator, which == Domain::Source ? "pdisc.s" : "pdisc.t", x), kProbClampLo,
        kProbClampHi);
}

Var log_one_minus(Var p) { return ad::log(ad::add_scalar(-1.0 * p, 1.0)); }

void require_finite(const Var& v, const char* what) {
    if (!v.value().all_finite()) throw NumericError(std::string("non-finite ") + what);
}

Var zero_row(Tape& tape, std::size_t width) { return tape.constant(Matrix(1, width)); }

struct StepTerms {
    VaeTerms vae;
    ClassificationTerms cls;
    Var proxy;
    Var objective;
};

Var adapter_on_tape(const ProxyModel& model, Tape& tape, const Matrix& raw) {
    return mlp_apply(model.adapter, "adapter", tape.constant(raw));
}

} // namespace

VaeTerms vae_terms(const ProxyModel& model, Var features, const Matrix& noise) {
    Tape& tape = *features.tape;
    if (noise.rows() != features.rows() || noise.cols() != model.l)
        throw ShapeError("vae_terms: noise must be rows x l");
    Var enc = mlp_apply(model.encoder, "vae.enc", features);
    Var mu = ad::slice_cols(enc, 0, model.l);
    Var logvar = ad::slice_cols(enc, model.l, model.l);
    require_finite(logvar, "VAE log-variance");
    Var z = mu + ad::mul(ad::exp(0.5 * logvar), tape.constant(noise));
    Var recon_rows = ad::row_sum(ad::square(features - mlp_apply(model.decoder, "vae.dec", z)));
    Var kl_rows = 0.5 * ad::row_sum(ad::add_scalar(ad::exp(logvar) + ad::square(mu) - logvar, -1.0));
    Var recon = ad::mean(recon_rows);
    Var kl = ad::mean(kl_rows);
    Var total = recon + kl;
    require_finite(total, "VAE loss");
    return {total, recon, kl, model.z_mode == ZMode::Sample ? z : mu};
}

ClassificationTerms classification_terms(const ProxyModel& model, Var z, Var features, std::span<const Var> proxies,
                                         std::span<const std::size_t> labels) {
    Tape& tape = *features.tape;
    if (labels.size() != features.rows()) throw ContractError("classification loss: every source row needs a label");
    if (proxies.empty()) throw ContractError("classification loss: no proxies");
    Var logits = ad::affine(z, tape.param("heads.W1"), tape.param("heads.b1")) +
                 ad::affine(features, tape.param("heads.W2"), zero_row(tape, model.c));
    Var xhat_pred = ad::affine(z, tape.param("heads.W3"), tape.param("heads.b2")) +
                    ad::affine(features, tape.param("heads.W4"), zero_row(tape, model.n));
    Var ce = -1.0 * ad::mean(ad::pick(ad::log_softmax_rows(logits), labels));
    Var mse_sum;
    for (std::size_t i = 0; i < proxies.size(); ++i) {
        Var term = ad::mean(ad::row_sum(ad::square(xhat_pred - proxies[i])));
        mse_sum = i == 0 ? term : mse_sum + term;
    }
    Var mse = (1.0 / static_cast<double>(proxies.size())) * mse_sum;
    Var total = ce + mse;
    require_finite(total, "classification loss");
    return {total, ce, mse};
}

Var proxy_terms(const ProxyModel& model, Var x_s, std::span<const Var> proxies_s, Var x_t,
                std::span<const Var> proxies_t) {
    if (proxies_s.empty() || proxies_s.size() != proxies_t.size())
        throw ContractError("proxy loss: need the same non-zero number of proxies per side");
    const double inv_k = 1.0 / static_cast<double>(proxies_s.size());
    Var fake_s, fake_t;
    for (std::size_t i = 0; i < proxies_s.size(); ++i) {
        Var fs = ad::mean(log_one_minus(clamped_disc(model, Domain::Target, proxies_s[i])));
        Var ft = ad::mean(log_one_minus(clamped_disc(model, Domain::Source, proxies_t[i])));
        fake_s = i == 0 ? fs : fake_s + fs;
        fake_t = i == 0 ? ft : fake_t + ft;
    }
    Var total = ad::mean(ad::log(clamped_disc(model, Domain::Source, x_s))) + inv_k * fake_s +
                ad::mean(ad::log(clamped_disc(model, Domain::Target, x_t))) + inv_k * fake_t;
    require_finite(total, "proxy loss");
    return total;
}

VaeValue vae_loss(const ProxyModel& model, std::span<const double> features, RngStream rng) {
    Tape tape(&model.params);
    Matrix noise(1, model.l);
    for (auto& v : noise.data()) v = rng.normal();
    auto t = vae_terms(model, tape.constant(Matrix::row(features)), noise);
    return {t.total.scalar(), t.recon.scalar(), t.kl.scalar()};
}

double classification_loss(const ProxyModel& model, const Matrix& x_s, std::span<const std::size_t> labels,
                           RngStream rng) {
    Tape tape(&model.params);
    Var xs = adapter_on_tape(model, tape, x_s);
    std::vector<Var> proxies;
    for (std::size_t i = 0; i < model.k(); ++i)
        proxies.push_back(adapter_on_tape(model, tape, apply_mechanism(model.dcm, i, Direction::SourceToTarget, x_s)));
    Matrix noise(x_s.rows(), model.l);
    for (auto& v : noise.data()) v = rng.normal();
    auto vae = vae_terms(model, xs, noise);
    return classification_terms(model, vae.z, xs, proxies, labels).total.scalar();
}

double proxy_loss(const ProxyModel& model, const Matrix& x_s, const Matrix& x_t) {
    Tape tape(&model.params);
    std::vector<Var> ps, pt;
    for (std::size_t i = 0; i < model.k(); ++i) {
        ps.push_back(adapter_on_tape(model, tape, apply_mechanism(model.dcm, i, Direction::SourceToTarget, x_s)));
        pt.push_back(adapter_on_tape(model, tape, apply_mechanism(model.dcm, i, Direction::TargetToSource, x_t)));
    }
    return proxy_terms(model, adapter_on_tape(model, tape, x_s), ps, adapter_on_tape(model, tape, x_t), pt).scalar();
}

// ---------------------------------------------------------------- training

Stage2Result train_stage2(const ProxyConfig& config, const DcmModel& dcm, const Dataset& source, const Dataset& target,
                          std::size_t classes, RngStream rng) {
    if (source.empty() || target.empty()) throw ContractError("train_stage2: empty dataset");
    if (source.dim() != target.dim()) throw ShapeError("train_stage2: source and target dimensions differ");
    if (config.batch_size == 0) throw ContractError("train_stage2: batch size must be positive");
    Stage2Result out{init_proxy_model(source.dim(), classes, dcm, config, rng.split(1)), {}};
    ProxyModel& model = out.model;
    std::vector<SlotId> head_slots;
    for (SlotId id : model.minimizer_slots())
        if (!model.params.name(id).starts_with("adapter.")) head_slots.push_back(id);
    OptState min_opt = make_sgd_nesterov(model.params, head_slots, config.sgd);
    NesterovHyper adapter_hyper = config.sgd;
    adapter_hyper.lr *= config.adapter_lr_scale;
    OptState adapter_opt = make_sgd_nesterov(model.params, model.params.group("adapter."), adapter_hyper);
    OptState max_opt = make_sgd_nesterov(model.params, model.discriminator_slots(), config.sgd);
    RngStream batch_rng = rng.split(2);
    RngStream noise_rng = rng.split(3);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        std::vector<std::size_t> rs(config.batch_size), rt(config.batch_size);
        for (auto& r : rs) r = batch_rng.below(source.size());
        for (auto& r : rt) r = batch_rng.below(target.size());
        const Matrix xs_raw = source.features(rs);
        const Matrix xt_raw = target.features(rt);
        const std::vector<std::size_t> ys = source.labels(rs);
        Matrix noise(config.batch_size, model.l);
        for (auto& v : noise.data()) v = noise_rng.normal();

        Tape tape(&model.params);
        try {
            Var xs = adapter_on_tape(model, tape, xs_raw);
            Var xt = adapter_on_tape(model, tape, xt_raw);
            std::vector<Var> ps, pt;
            for (std::size_t i = 0; i < model.k(); ++i) {
                ps.push_back(adapter_on_tape(model, tape, apply_mechanism(dcm, i, Direction::SourceToTarget, xs_raw)));
                pt.push_back(adapter_on_tape(model, tape, apply_mechanism(dcm, i, Direction::TargetToSource, xt_raw)));
            }
            VaeTerms vae = vae_terms(model, xs, noise);
            ClassificationTerms cls = classification_terms(model, vae.z, xs, ps, ys);
            Var lp = proxy_terms(model, xs, ps, xt, pt);
            Var objective = cls.total + vae.total + config.alpha * lp;

            if (config.log_every > 0 && it % config.log_every == 0) {
                Stage2LogEntry e;
                e.iteration = it;
                e.classification = cls.total.scalar();
                e.cross_entropy = cls.cross_entropy.scalar();
                e.proxy_mse = cls.proxy_mse.scalar();
                e.vae = vae.total.scalar();
                e.recon = vae.recon.scalar();
                e.kl = vae.kl.scalar();
                e.proxy = lp.scalar();
                e.objective = objective.scalar();
                const Svd d = svd(model.params.value("heads.W3"));
                e.w3_smin = d.s.back();
                e.w3_rank_warning = e.w3_smin < kW3RankFloor;
                out.log.push_back(e);
            }

            const Gradients g_min = tape.backward(objective);
            const Gradients g_max = tape.backward(-1.0 * lp);
            sgd_nesterov_step(min_opt, model.params, g_min);
            if (config.adapter_lr_scale != 0.0) sgd_nesterov_step(adapter_opt, model.params, g_min);
            sgd_nesterov_step(max_opt, model.params, g_max);
        } catch (const NumericError& e) {
            throw NumericError("stage-2 iteration " + std::to_string(it) + ": " + e.what());
        }
    }
    model.prior = fit_proxy_prior(model, target);
    return out;
}

ProxyPrior fit_proxy_prior(const ProxyModel& model, const Dataset& target) {
    if (target.empty()) throw ContractError("fit_proxy_prior: empty target dataset");
    const Matrix x = target.features();
    std::vector<Matrix> blocks;
    for (std::size_t i = 0; i < model.k(); ++i)
        blocks.push_back(adapt(model, apply_mechanism(model.dcm, i, Direction::TargetToSource, x)));
    const std::size_t count = blocks.size() * x.rows();
    if (count < 2) throw ContractError("fit_proxy_prior: needs at least two proxy vectors");

    ProxyPrior p;
    p.mean.assign(model.n, 0.0);
    for (const auto& b : blocks)
        for (std::size_t r = 0; r < b.rows(); ++r)
            for (std::size_t j = 0; j < model.n; ++j) p.mean[j] += b(r, j);
    for (auto& v : p.mean) v /= static_cast<double>(count);
    double ss = 0.0;
    for (const auto& b : blocks)
        for (std::size_t r = 0; r < b.rows(); ++r)
            for (std::size_t j = 0; j < model.n; ++j) ss += (b(r, j) - p.mean[j]) * (b(r, j) - p.mean[j]);
    p.variance = ss / static_cast<double>(count * model.n);
    if (!(p.variance >= 1e-8)) {
        p.warning = "proxy prior variance " + std::to_string(p.variance) + " clamped to 1e-8";
        p.variance = 1e-8;
    }
    return p;
}

Inference infer(const ProxyModel& model, const ProxyFunction& h_y, std::span<const double> x_t) {
    if (!model.prior) throw ContractError("infer: proxy prior has not been fitted");
    if (x_t.size() != model.n) throw ShapeError("infer: sample dimension does not match the model");
    const Vector x = adapt(model, Matrix::row(x_t)).row_vector(0);
    const std::vector<Vector> proxies = adapted_proxies(model, x_t, Domain::Target);
    const std::size_t k = proxies.size();

    Inference out;
    out.weights.assign(k, 1.0 / static_cast<double>(k));
    if (model.weighting == WeightingMode::Density) {
        Vector logw(k);
        for (std::size_t i = 0; i < k; ++i) logw[i] = gauss_logpdf(proxies[i], model.prior->mean, model.prior->variance);
        out.weights = softmax(logw);
    }
    out.logits.assign(model.c, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const Vector h = h_y(x, proxies[i]);
        for (std::size_t y = 0; y < model.c; ++y) out.logits[y] += out.weights[i] * h[y];
    }
    out.probs = softmax(out.logits);
    out.predicted = static_cast<std::size_t>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
    return out;
}

Inference infer(const ProxyModel& model, std::span<const double> x_t) { return infer(model, ProxyFunction(model.heads()), x_t); }

} // namespace tcm
