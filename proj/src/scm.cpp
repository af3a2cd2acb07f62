#include "tcm/scm.hpp"

#include "tcm/errors.hpp"
#include "tcm/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>

namespace tcm {

std::string to_string(Domain d) { return d == Domain::Source ? "s" : "t"; }

Domain domain_from_string(const std::string& s) {
    if (s == "s" || s == "source") return Domain::Source;
    if (s == "t" || s == "target") return Domain::Target;
    throw ContractError("unknown domain '" + s + "'");
}

// ---------------------------------------------------------------- ScmSpec

void ScmSpec::validate(bool require_shift) const {
    auto dims = [](const std::string& what, std::size_t got, std::size_t want) {
        if (got != want)
            throw SpecError(what + " has " + std::to_string(got) + " entries, expected " + std::to_string(want));
    };
    if (k == 0 || n == 0 || c < 2) throw SpecError("need k >= 1, n >= 1, c >= 2");
    if (a.rows() != n || a.cols() != k) throw SpecError("A must be n x k, got " + a.shape_string());
    if (w_u.rows() != c || w_u.cols() != k) throw SpecError("W_u must be c x k, got " + w_u.shape_string());
    if (w_x.rows() != c || w_x.cols() != n) throw SpecError("W_x must be c x n, got " + w_x.shape_string());
    dims("b", b.size(), n);
    dims("mu_s", mu_s.size(), k);
    dims("mu_t", mu_t.size(), k);
    if (!(sigma_u > 0.0)) throw SpecError("sigma_u must be positive");
    if (!(tau > 0.0)) throw SpecError("tau must be positive");
    if (!(noise_std >= 0.0)) throw SpecError("noise_std must be non-negative");
    if (!a.all_finite() || !w_u.all_finite() || !w_x.all_finite()) throw SpecError("non-finite weights");
    if (smallest_singular_value(a) <= 1e-6) throw SpecError("A is rank deficient (smallest singular value <= 1e-6)");
    if (require_shift && mu_s == mu_t) throw SpecError("mu_s equals mu_t: no domain shift");
}

std::string ScmSpec::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_u64 = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    auto mix_d = [&](double d) { mix_u64(std::bit_cast<std::uint64_t>(d)); };
    auto mix_span = [&](std::span<const double> s) {
        mix_u64(s.size());
        for (double d : s) mix_d(d);
    };
    mix_u64(k);
    mix_u64(n);
    mix_u64(c);
    mix_span(a.data());
    mix_span(b);
    mix_span(w_u.data());
    mix_span(w_x.data());
    mix_span(mu_s);
    mix_span(mu_t);
    mix_d(sigma_u);
    mix_d(tau);
    mix_d(noise_std);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ScmSpec make_benchmark_spec(const BenchmarkSpecOptions& o, RngStream rng) {
    if (o.shifts.size() != o.k) throw SpecError("shifts must have k entries");
    if (!(o.max_condition >= 1.0)) throw SpecError("max_condition must be >= 1");
    ScmSpec s;
    s.k = o.k;
    s.n = o.n;
    s.c = o.c;
    s.sigma_u = o.sigma_u;
    s.tau = o.tau;
    s.noise_std = o.noise_std;

    Matrix g(o.n, o.k);
    for (auto& v : g.data()) v = rng.normal();
    Svd d = svd(g);
    const double s_max = d.s.front();
    Matrix a(o.n, o.k);
    for (std::size_t j = 0; j < o.k; ++j) {
        const double sj = std::max(d.s[j], s_max / o.max_condition);
        for (std::size_t r = 0; r < o.n; ++r)
            for (std::size_t c = 0; c < o.k; ++c) a(r, c) += d.u(r, j) * sj * d.v(c, j);
    }
    s.a = std::move(a);
    s.b.resize(o.n);
    for (auto& v : s.b) v = rng.normal();
    s.w_u = Matrix(o.c, o.k);
    for (auto& v : s.w_u.data()) v = o.w_u_std * rng.normal();
    s.w_x = Matrix(o.c, o.n);
    for (auto& v : s.w_x.data()) v = o.w_x_std * rng.normal();
    s.mu_s.assign(o.k, 0.0);
    s.mu_t = o.shifts;
    if (o.center_target_logits) {
        const Vector x_mid = add(matvec(s.a, s.mu_t), s.b);
        const Vector logits = add(matvec(s.w_u, s.mu_t), matvec(s.w_x, x_mid));
        s.b = sub(s.b, matvec(pinv(s.w_x), logits));
    }
    s.validate(false);
    return s;
}

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(std::string spec_hash, Domain domain, std::uint64_t seed, std::vector<LabeledSample> samples)
    : spec_hash_(std::move(spec_hash)), domain_(domain), seed_(seed), samples_(std::move(samples)) {
    for (const auto& s : samples_)
        if (s.domain != domain_) throw ContractError("Dataset: sample domain differs from dataset domain");
}

const Vector& Dataset::x(std::size_t i) const {
    count(1);
    return samples_.at(i).x;
}

Matrix Dataset::features(std::span<const std::size_t> rows) const {
    count(rows.size());
    Matrix m(rows.size(), dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Vector& x = samples_.at(rows[r]).x;
        std::copy(x.begin(), x.end(), m.row_span(r).begin());
    }
    return m;
}

Matrix Dataset::features() const {
    std::vector<std::size_t> all(size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return features(all);
}

std::size_t Dataset::label(std::size_t i) const {
    if (domain_ != Domain::Source) throw ContractError("target labels are evaluation-only");
    const auto& y = samples_.at(i).y;
    if (!y) throw ContractError("source sample " + std::to_string(i) + " has no label");
    count(1);
    return *y;
}

std::vector<std::size_t> Dataset::labels(std::span<const std::size_t> rows) const {
    std::vector<std::size_t> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(label(r));
    return out;
}

Dataset sample_dataset(const ScmSpec& spec, Domain domain, std::size_t count, RngStream rng) {
    if (count == 0) throw ContractError("sample_dataset: count must be positive");
    spec.validate(false);
    const std::uint64_t seed = rng.seed();
    std::vector<LabeledSample> out;
    out.reserve(count);
    const Vector& mu = spec.mu(domain);
    for (std::size_t i = 0; i < count; ++i) {
        LabeledSample s;
        s.domain = domain;
        s.u_true.resize(spec.k);
        for (std::size_t j = 0; j < spec.k; ++j) s.u_true[j] = mu[j] + spec.sigma_u * rng.normal();
        s.noise.resize(spec.n);
        for (auto& e : s.noise) e = spec.noise_std * rng.normal();
        s.x = add(add(matvec(spec.a, s.u_true), spec.b), s.noise);
        const Vector p = label_posterior(spec, s.x, s.u_true);
        s.y = rng.categorical(p);
        out.push_back(std::move(s));
    }
    return Dataset(spec.hash(), domain, seed, std::move(out));
}

// ---------------------------------------------------------------- posteriors

Vector softmax(std::span<const double> logits) {
    Vector p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (auto& v : p) z += (v = std::exp(v - mx));
    for (auto& v : p) v /= z;
    return p;
}

Vector label_posterior(const ScmSpec& spec, std::span<const double> x, std::span<const double> u) {
    if (x.size() != spec.n || u.size() != spec.k)
        throw ShapeError("label_posterior: x has " + std::to_string(x.size()) + " dims, u has " +
                         std::to_string(u.size()));
    Vector logits = add(matvec(spec.w_u, u), matvec(spec.w_x, x));
    for (auto& v : logits) v /= spec.tau;
    return softmax(logits);
}

OracleResult transport_oracle(const ScmSpec& spec, std::span<const double> x, std::size_t mc_samples, RngStream rng,
                              Domain prior) {
    if (mc_samples < 1000) throw ContractError("transport_oracle: needs at least 1000 Monte-Carlo samples");
    if (x.size() != spec.n) throw ShapeError("transport_oracle: x dimension mismatch");
    const Vector wx = matvec(spec.w_x, x);
    const Vector& mu = spec.mu(prior);
    Vector sum(spec.c, 0.0), sum_sq(spec.c, 0.0), u(spec.k), logits(spec.c);
    for (std::size_t m = 0; m < mc_samples; ++m) {
        for (std::size_t j = 0; j < spec.k; ++j) u[j] = mu[j] + spec.sigma_u * rng.normal();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < spec.c; ++y) {
            double l = wx[y];
            for (std::size_t j = 0; j < spec.k; ++j) l += spec.w_u(y, j) * u[j];
            logits[y] = l / spec.tau;
            mx = std::max(mx, logits[y]);
        }
        double z = 0.0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t y = 0; y < spec.c; ++y) {
            const double p = logits[y] / z;
            sum[y] += p;
            sum_sq[y] += p * p;
        }
    }
    const double m = static_cast<double>(mc_samples);
    OracleResult r{Vector(spec.c), Vector(spec.c)};
    double total = 0.0;
    for (std::size_t y = 0; y < spec.c; ++y) total += (r.probs[y] = sum[y] / m);
    for (std::size_t y = 0; y < spec.c; ++y) {
        const double var = std::max(0.0, sum_sq[y] / m - (sum[y] / m) * (sum[y] / m));
        r.std_error[y] = std::sqrt(var / m);
        r.probs[y] /= total;
    }
    return r;
}

Vector transport_exact(const DiscreteTransport& t) {
    if (t.prior.size() != t.posterior.size() || t.prior.empty())
        throw ShapeError("transport_exact: prior and posterior tables disagree");
    Vector out(t.posterior.front().size(), 0.0);
    for (std::size_t j = 0; j < t.prior.size(); ++j) {
        if (t.posterior[j].size() != out.size()) throw ShapeError("transport_exact: ragged posterior table");
        for (std::size_t y = 0; y < out.size(); ++y) out[y] += t.posterior[j][y] * t.prior[j];
    }
    return out;
}

// ---------------------------------------------------------------- mechanisms

Vector AffineMap::operator()(std::span<const double> x) const { return add(matvec(linear, x), offset); }

AffineMap AffineMap::then(const AffineMap& next) const {
    return {matmul(next.linear, linear), add(matvec(next.linear, offset), next.offset)};
}

AffineMap factor_intervention(const ScmSpec& spec, std::size_t factor, double delta) {
    if (factor >= spec.k)
        throw ContractError("factor index " + std::to_string(factor) + " out of range for k=" + std::to_string(spec.k));
    Vector offset(spec.n);
    for (std::size_t r = 0; r < spec.n; ++r) offset[r] = spec.a(r, factor) * delta;
    return {Matrix::identity(spec.n), std::move(offset)};
}

AffineMap true_mechanism(const ScmSpec& spec, std::size_t factor, Direction direction) {
    if (factor >= spec.k)
        throw ContractError("factor index " + std::to_string(factor) + " out of range for k=" + std::to_string(spec.k));
    const double delta = spec.mu_t[factor] - spec.mu_s[factor];
    return factor_intervention(spec, factor, direction == Direction::SourceToTarget ? delta : -delta);
}

Vector abduct(const ScmSpec& spec, std::span<const double> x, std::span<const double> noise) {
    Vector centered = sub(x, spec.b);
    if (!noise.empty()) centered = sub(centered, noise);
    return matvec(pinv(spec.a), centered);
}

DisentanglementScore disentanglement_score(const ScmSpec& spec, const VectorMap& mech, std::size_t factor,
                                           const Dataset& probe) {
    if (probe.empty()) throw ContractError("disentanglement_score: empty probe set");
    if (factor >= spec.k) throw ContractError("disentanglement_score: factor index out of range");
    const Matrix a_pinv = pinv(spec.a);
    DisentanglementScore s;
    s.mean_abs_shift.assign(spec.k, 0.0);
    for (const auto& sample : probe.evaluation_samples()) {
        const Vector du = matvec(a_pinv, sub(mech(sample.x), sample.x));
        for (std::size_t j = 0; j < spec.k; ++j) s.mean_abs_shift[j] += std::abs(du[j]);
    }
    for (auto& v : s.mean_abs_shift) v /= static_cast<double>(probe.size());
    s.on_score = s.mean_abs_shift[factor];
    for (std::size_t j = 0; j < spec.k; ++j)
        if (j != factor) s.off_score = std::max(s.off_score, s.mean_abs_shift[j]);
    return s;
}

double factor_loglik(const ScmSpec& spec, const VectorMap& mech, const Dataset& data, Domain domain) {
    if (data.empty()) throw ContractError("factor_loglik: empty data");
    const Matrix a_pinv = pinv(spec.a);
    double total = 0.0;
    for (const auto& sample : data.evaluation_samples()) {
        const Vector u = matvec(a_pinv, sub(mech(sample.x), spec.b));
        total += gauss_logpdf(u, spec.mu(domain), spec.sigma_u * spec.sigma_u);
    }
    return total / static_cast<double>(data.size());
}

} // namespace tcm
