#include "tcm/bench.hpp"

#include "tcm/errors.hpp"
#include "tcm/linalg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace tcm {

using nlohmann::json;

namespace {

std::size_t argmax(const Vector& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> draw_rows(RngStream& rng, std::size_t count, std::size_t size) {
    std::vector<std::size_t> rows(count);
    for (auto& r : rows) r = rng.below(size);
    return rows;
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
    return -1.0 * ad::mean(ad::pick(ad::log_softmax_rows(logits), labels));
}

} // namespace

ExperimentStreams::ExperimentStreams(std::uint64_t seed)
    : spec(seed, 1), source(seed, 2), target(seed, 3), dcm(seed, 4), proxy(seed, 5), baseline(seed, 6),
      oracle(seed, 7) {}

BenchData make_bench_data(const ScmConfig& config, std::uint64_t seed) {
    ExperimentStreams s(seed);
    BenchData d;
    d.spec = make_benchmark_spec(config.spec, s.spec);
    d.spec.validate();
    d.source = sample_dataset(d.spec, Domain::Source, config.source_samples, s.source);
    d.target = sample_dataset(d.spec, Domain::Target, config.target_samples, s.target);
    return d;
}

BenchData make_null_bench_data(const ScmConfig& config, std::uint64_t seed) {
    ExperimentStreams s(seed);
    BenchData d;
    d.spec = make_benchmark_spec(config.spec, s.spec);
    d.spec.mu_s = d.spec.mu_t;
    d.source = sample_dataset(d.spec, Domain::Source, config.source_samples, s.source);
    d.target = sample_dataset(d.spec, Domain::Target, config.target_samples, s.target);
    return d;
}

// ---------------------------------------------------------------- baselines

std::string to_string(BaselineKind k) { return k == BaselineKind::SourceOnly ? "source-only" : "domain-map"; }

Vector BaselineModel::logits(std::span<const double> x) const {
    if (x.size() != n) throw ShapeError("baseline: sample dimension does not match the model");
    Vector f(x.begin(), x.end());
    if (kind == BaselineKind::DomainMap) f = mlp_forward(adapter, params, "adapter", Matrix::row(x)).row_vector(0);
    return add(matvec(params.value("cls.W"), f), params.value("cls.b").row_vector(0));
}

Vector BaselineModel::predict(std::span<const double> x) const { return softmax(logits(x)); }

BaselineModel source_only_baseline(const BaselineConfig& config, const Dataset& source, std::size_t classes,
                                   RngStream rng) {
    if (source.empty()) throw ContractError("source_only_baseline: empty source dataset");
    BaselineModel m;
    m.kind = BaselineKind::SourceOnly;
    m.n = source.dim();
    m.c = classes;
    m.params.add("cls.W", Matrix(classes, m.n));
    m.params.add("cls.b", Matrix(1, classes));
    OptState opt = make_sgd_nesterov(m.params, m.params.group("cls."), config.sgd);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto rows = draw_rows(rng, config.batch_size, source.size());
        const auto labels = source.labels(rows);
        Tape tape(&m.params);
        Var logits = ad::affine(tape.constant(source.features(rows)), tape.param("cls.W"), tape.param("cls.b"));
        sgd_nesterov_step(opt, m.params, tape.backward(cross_entropy(logits, labels)));
    }
    return m;
}

BaselineModel domain_map_baseline(const BaselineConfig& config, const DcmConfig& dcm_config, const Dataset& source,
                                  const Dataset& target, std::size_t classes, RngStream rng,
                                  std::optional<DcmModel> mapping) {
    if (source.empty() || target.empty()) throw ContractError("domain_map_baseline: empty dataset");
    BaselineModel m;
    m.kind = BaselineKind::DomainMap;
    m.n = source.dim();
    m.c = classes;
    if (!mapping) {
        DcmConfig single = dcm_config;
        single.pairs = 1;
        mapping = train_dcms(single, source, target, rng.split(1)).model;
    }
    if (mapping->k != 1) throw ContractError("domain_map_baseline: expects exactly one mechanism pair");
    m.mapping = std::move(mapping);
    m.adapter = {{m.n, m.n}, Activation::Linear, Activation::Linear};
    m.discriminator = discriminator_spec(m.n, config.disc_hidden);
    RngStream init = rng.split(2);
    register_mlp(m.params, "adapter", m.adapter, init, 0.0, MlpInit::NearIdentity);
    m.params.add("cls.W", Matrix(classes, m.n));
    m.params.add("cls.b", Matrix(1, classes));
    register_mlp(m.params, "align", m.discriminator, init, config.init_std);

    std::vector<SlotId> min_slots = m.params.group("adapter.");
    for (SlotId id : m.params.group("cls.")) min_slots.push_back(id);
    OptState min_opt = make_sgd_nesterov(m.params, min_slots, config.sgd);
    OptState max_opt = make_sgd_nesterov(m.params, m.params.group("align."), config.sgd);
    RngStream batches = rng.split(3);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto rs = draw_rows(batches, config.batch_size, source.size());
        const auto rt = draw_rows(batches, config.batch_size, target.size());
        const auto labels = source.labels(rs);
        const Matrix mapped = apply_mechanism(*m.mapping, 0, Direction::SourceToTarget, source.features(rs));
        Tape tape(&m.params);
        Var fake = mlp_apply(m.adapter, "adapter", tape.constant(mapped));
        Var real = mlp_apply(m.adapter, "adapter", tape.constant(target.features(rt)));
        Var ce = cross_entropy(ad::affine(fake, tape.param("cls.W"), tape.param("cls.b")), labels);
        auto disc = [&](Var x) {
            return ad::clamp_straight_through(mlp_apply(m.discriminator, "align", x), kProbClampLo, kProbClampHi);
        };
        Var align = ad::mean(ad::log(disc(real))) + ad::mean(ad::log(ad::add_scalar(-1.0 * disc(fake), 1.0)));
        if (!(ce + align).value().all_finite())
            throw NumericError("domain-map baseline iteration " + std::to_string(it) + ": non-finite loss");
        const Gradients g_min = tape.backward(ce + config.alpha * align);
        const Gradients g_max = tape.backward(-1.0 * align);
        sgd_nesterov_step(min_opt, m.params, g_min);
        sgd_nesterov_step(max_opt, m.params, g_max);
    }
    return m;
}

// ---------------------------------------------------------------- metrics

OracleTable oracle_table(const ScmSpec& spec, const Dataset& target, std::size_t points, std::size_t mc_samples,
                         RngStream rng) {
    OracleTable t;
    t.mc_samples = mc_samples;
    points = std::min(points, target.size());
    t.probs.reserve(points);
    for (std::size_t i = 0; i < points; ++i)
        t.probs.push_back(transport_oracle(spec, target.evaluation_sample(i).x, mc_samples, rng.split(i)).probs);
    return t;
}

PurityTracker::PurityTracker(const ScmSpec& spec, std::size_t pairs)
    : spec_(&spec), a_pinv_(pinv(spec.a)), counts_(pairs, spec.k) {}

DcmObserver PurityTracker::observer() {
    return [this](const DcmStepResult& step, const DcmModel& model, const DcmBatch& batch) {
        if (step.warmup) return;
        for (std::size_t i = 0; i < model.k; ++i) {
            if (!step.updated[i]) continue;
            const Matrix moved = apply_mechanism(model, i, Direction::SourceToTarget, batch.source);
            Vector mean_abs(spec_->k, 0.0);
            for (std::size_t r = 0; r < moved.rows(); ++r) {
                const Vector du = matvec(a_pinv_, sub(moved.row_vector(r), batch.source.row_vector(r)));
                for (std::size_t j = 0; j < spec_->k; ++j) mean_abs[j] += std::abs(du[j]);
            }
            counts_(i, argmax(mean_abs)) += 1.0;
        }
    };
}

Matrix PurityTracker::purity() const {
    Matrix p = counts_;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) total += p(i, j);
        if (total > 0.0)
            for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) /= total;
    }
    return p;
}

namespace {

std::vector<double> active_purities(const Matrix& p, const Matrix& counts) {
    std::vector<double> out;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double total = 0.0, best = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            total += counts(i, j);
            best = std::max(best, p(i, j));
        }
        if (total > 0.0) out.push_back(best);
    }
    return out;
}

} // namespace

double PurityTracker::purity_min() const {
    auto v = active_purities(purity(), counts_);
    return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
}

double PurityTracker::purity_mean() const {
    auto v = active_purities(purity(), counts_);
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

MetricsReport evaluate(const Predictor& predictor, const Dataset& target, const OracleTable& oracle) {
    if (oracle.probs.empty()) throw ContractError("evaluate: empty oracle table");
    if (oracle.probs.size() > target.size()) throw ContractError("evaluate: oracle table longer than target set");
    MetricsReport r;
    r.samples = oracle.probs.size();
    std::size_t correct = 0, agree = 0;
    double tv = 0.0;
    for (std::size_t i = 0; i < r.samples; ++i) {
        const LabeledSample& s = target.evaluation_sample(i);
        if (!s.y) throw ContractError("evaluate: target sample " + std::to_string(i) + " has no hidden label");
        const Vector p = predictor(s.x);
        const Vector& o = oracle.probs[i];
        if (p.size() != o.size()) throw ShapeError("evaluate: predictor returned the wrong class count");
        const std::size_t pred = argmax(p);
        correct += pred == *s.y;
        agree += pred == argmax(o);
        double d = 0.0;
        for (std::size_t y = 0; y < p.size(); ++y) d += std::abs(p[y] - o[y]);
        tv += 0.5 * d;
    }
    const double n = static_cast<double>(r.samples);
    r.accuracy = static_cast<double>(correct) / n;
    r.oracle_agreement = static_cast<double>(agree) / n;
    r.tv_distance = tv / n;
    return r;
}

MetricsReport oracle_report(const Dataset& target, const OracleTable& oracle) {
    std::size_t row = 0;
    // The table is indexed by row; the predictor walks it in evaluation order.
    MetricsReport r = evaluate([&](std::span<const double>) { return oracle.probs.at(row++); }, target, oracle);
    r.method = "oracle";
    return r;
}

MetricsReport evaluate(const Predictor& predictor, const ScmSpec& spec, const Dataset& target,
                       std::size_t mc_samples, RngStream rng) {
    return evaluate(predictor, target, oracle_table(spec, target, target.size(), mc_samples, rng));
}

json to_json(const MetricsReport& r) {
    json j;
    j["method"] = r.method;
    j["k"] = r.k;
    j["seed"] = r.seed;
    j["samples"] = r.samples;
    j["accuracy"] = r.accuracy;
    j["oracle_agreement"] = r.oracle_agreement;
    j["tv_distance"] = r.tv_distance;
    if (r.purity) {
        json rows = json::array();
        for (std::size_t i = 0; i < r.purity->rows(); ++i) rows.push_back(r.purity->row_vector(i));
        j["purity"] = rows;
    } else {
        j["purity"] = nullptr;
    }
    j["purity_min"] = r.purity_min ? json(*r.purity_min) : json(nullptr);
    j["purity_mean"] = r.purity_mean ? json(*r.purity_mean) : json(nullptr);
    j["wins"] = r.wins;
    j["seconds"] = r.seconds ? json(*r.seconds) : json(nullptr);
    j["config"] = r.config;
    return j;
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport r;
    try {
        r.method = j.at("method").get<std::string>();
        r.k = j.value("k", std::size_t{0});
        r.seed = j.value("seed", std::uint64_t{0});
        r.samples = j.value("samples", std::size_t{0});
        r.accuracy = j.at("accuracy").get<double>();
        r.oracle_agreement = j.at("oracle_agreement").get<double>();
        r.tv_distance = j.at("tv_distance").get<double>();
        if (j.contains("purity") && !j["purity"].is_null()) {
            std::vector<Vector> rows = j["purity"].get<std::vector<Vector>>();
            r.purity = rows.empty() ? Matrix() : stack_rows(rows);
        }
        if (j.contains("purity_min") && !j["purity_min"].is_null()) r.purity_min = j["purity_min"].get<double>();
        if (j.contains("purity_mean") && !j["purity_mean"].is_null()) r.purity_mean = j["purity_mean"].get<double>();
        if (j.contains("wins")) r.wins = j["wins"].get<std::vector<std::size_t>>();
        if (j.contains("seconds") && !j["seconds"].is_null()) r.seconds = j["seconds"].get<double>();
        if (j.contains("config")) r.config = j["config"];
    } catch (const json::exception& e) {
        throw MismatchError(std::string("malformed metrics report: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------- pipelines

TcmRun run_tcm(const ExperimentConfig& config, const BenchData& data, const ExperimentStreams& streams,
               PurityTracker* tracker) {
    TcmRun run;
    run.stage1 = train_dcms(config.dcm, data.source, data.target, streams.dcm,
                            tracker ? tracker->observer() : DcmObserver{});
    run.stage2 = train_stage2(config.proxy, run.stage1.model, data.source, data.target, data.spec.c, streams.proxy);
    if (tracker) run.purity_counts = tracker->counts();
    return run;
}

Predictor tcm_predictor(const ProxyModel& model) {
    auto h_y = std::make_shared<ProxyFunction>(model.heads());
    return [&model, h_y](std::span<const double> x) { return infer(model, *h_y, x).probs; };
}

Predictor baseline_predictor(const BaselineModel& model) {
    return [&model](std::span<const double> x) { return model.predict(x); };
}

namespace {

void fill_tcm_fields(MetricsReport& r, const TcmRun& run, const PurityTracker& tracker) {
    r.k = run.stage1.model.k;
    r.purity = tracker.purity();
    r.purity_min = tracker.purity_min();
    r.purity_mean = tracker.purity_mean();
    for (const auto& s : run.stage1.state.stats) r.wins.push_back(s.post_warmup_wins);
}

} // namespace

BenchReports run_bench(const ExperimentConfig& config, const BenchData& data) {
    const ExperimentStreams streams(config.seed);
    const json echo = to_json(config);
    const OracleTable oracle =
        oracle_table(data.spec, data.target, config.bench.eval_points, config.bench.oracle_samples, streams.oracle);
    BenchReports out;

    auto t0 = std::chrono::steady_clock::now();
    PurityTracker tracker(data.spec, config.dcm.pairs);
    const TcmRun run = run_tcm(config, data, streams, &tracker);
    out.tcm = evaluate(tcm_predictor(run.stage2.model), data.target, oracle);
    out.tcm.method = "tcm";
    fill_tcm_fields(out.tcm, run, tracker);
    out.tcm.seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const BaselineModel so = source_only_baseline(config.baseline, data.source, data.spec.c, streams.baseline.split(1));
    out.source_only = evaluate(baseline_predictor(so), data.target, oracle);
    out.source_only.method = "source-only";
    out.source_only.seconds = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const BaselineModel dm = domain_map_baseline(config.baseline, config.dcm, data.source, data.target, data.spec.c,
                                                 streams.baseline.split(2));
    out.domain_map = evaluate(baseline_predictor(dm), data.target, oracle);
    out.domain_map.method = "domain-map";
    out.domain_map.k = 1;
    out.domain_map.seconds = seconds_since(t0);

    out.oracle = oracle_report(data.target, oracle);

    for (MetricsReport* r : {&out.tcm, &out.source_only, &out.domain_map, &out.oracle}) {
        r->seed = config.seed;
        r->config = echo;
    }
    return out;
}

std::vector<MetricsReport> ablate_k(const ExperimentConfig& config, const std::vector<std::size_t>& ks) {
    const ExperimentStreams streams(config.seed);
    const BenchData data = make_bench_data(config.scm, config.seed);
    const OracleTable oracle = oracle_table(data.spec, data.target, config.bench.eval_points,
                                            config.bench.ablation_oracle_samples, streams.oracle);
    std::vector<std::size_t> sorted = ks;
    std::sort(sorted.begin(), sorted.end());
    std::vector<MetricsReport> rows;
    for (std::size_t k : sorted) {
        if (k == 0) throw ContractError("ablate_k: k must be at least 1");
        ExperimentConfig c = config;
        c.dcm.pairs = k;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            PurityTracker tracker(data.spec, k);
            const TcmRun run = run_tcm(c, data, streams, &tracker);
            MetricsReport r = evaluate(tcm_predictor(run.stage2.model), data.target, oracle);
            r.method = "tcm";
            r.seed = c.seed;
            r.config = to_json(c);
            fill_tcm_fields(r, run, tracker);
            r.seconds = seconds_since(t0);
            rows.push_back(std::move(r));
        } catch (const Error& e) {
            throw NumericError("ablation k=" + std::to_string(k) + ": " + e.what());
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<MetricsReport>& rows) {
    std::ostringstream os;
    os << kAblationCsvHeader << '\n';
    char buf[64];
    auto num = [&](std::optional<double> v) -> std::string {
        if (!v) return "";
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return buf;
    };
    for (const auto& r : rows)
        os << r.k << ',' << num(r.accuracy) << ',' << num(r.oracle_agreement) << ',' << num(r.tv_distance) << ','
           << num(r.purity_min) << ',' << num(r.purity_mean) << ',' << num(r.seconds) << '\n';
    return os.str();
}

} // namespace tcm
