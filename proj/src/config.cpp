#include "tcm/config.hpp"

#include "tcm/errors.hpp"

#include <fstream>
#include <set>

namespace tcm {

using nlohmann::json;

namespace {

class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

    template <class T>
    void read(const std::string& name, T& out) {
        seen_.insert(name);
        auto it = j_.find(name);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError(key(name), "wrong type (got " + std::string(it->type_name()) + ")");
        }
    }

    void read_count(const std::string& name, std::size_t& out) {
        seen_.insert(name);
        auto it = j_.find(name);
        if (it == j_.end()) return;
        if (!it->is_number_integer() || it->template get<long long>() < 0)
            throw ConfigError(key(name), "expected a non-negative integer");
        out = it->template get<std::size_t>();
    }

    Section child(const std::string& name) {
        seen_.insert(name);
        static const json empty = json::object();
        auto it = j_.find(name);
        return Section(it == j_.end() ? empty : *it, key(name));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (it.key() != "_notes" && !seen_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
}

void read_adam(Section s, AdamHyper& a) {
    s.read("lr", a.lr);
    s.read("beta1", a.beta1);
    s.read("beta2", a.beta2);
    s.read("eps", a.eps);
    s.finish();
    require(a.lr > 0.0, s.key("lr"), "must be positive");
    require(a.beta1 >= 0.0 && a.beta1 < 1.0, s.key("beta1"), "must lie in [0, 1)");
    require(a.beta2 >= 0.0 && a.beta2 < 1.0, s.key("beta2"), "must lie in [0, 1)");
    require(a.eps > 0.0, s.key("eps"), "must be positive");
}

void read_sgd(Section& s, NesterovHyper& h) {
    s.read("lr", h.lr);
    s.read("momentum", h.momentum);
    require(h.lr > 0.0, s.key("lr"), "must be positive");
    require(h.momentum >= 0.0 && h.momentum < 1.0, s.key("momentum"), "must lie in [0, 1)");
}

template <class E, class F>
void read_enum(Section& s, const std::string& name, E& out, F parse) {
    std::string text;
    s.read(name, text);
    if (text.empty()) return;
    try {
        out = parse(text);
    } catch (const ContractError&) {
        throw ConfigError(s.key(name), "unknown value '" + text + "'");
    }
}

} // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Section root(j, "");
    long long seed = static_cast<long long>(c.seed);
    root.read("seed", seed);
    require(seed >= 0, "seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    root.read("out", c.out);

    {
        Section s = root.child("scm");
        auto& o = c.scm.spec;
        s.read_count("k", o.k);
        s.read_count("n", o.n);
        s.read_count("c", o.c);
        s.read("sigma_u", o.sigma_u);
        s.read("tau", o.tau);
        s.read("noise_std", o.noise_std);
        s.read("max_condition", o.max_condition);
        s.read("shifts", o.shifts);
        s.read("w_u_std", o.w_u_std);
        s.read("w_x_std", o.w_x_std);
        s.read("center_target_logits", o.center_target_logits);
        s.read_count("source_samples", c.scm.source_samples);
        s.read_count("target_samples", c.scm.target_samples);
        s.finish();
        require(o.k >= 1, s.key("k"), "must be at least 1");
        require(o.n > o.k, s.key("n"), "must exceed k");
        require(o.c >= 2, s.key("c"), "must be at least 2");
        require(o.sigma_u > 0.0, s.key("sigma_u"), "must be positive");
        require(o.tau > 0.0, s.key("tau"), "must be positive");
        require(o.noise_std >= 0.0, s.key("noise_std"), "must be non-negative");
        require(o.max_condition >= 1.0, s.key("max_condition"), "must be at least 1");
        require(o.shifts.size() == o.k, s.key("shifts"), "must have k entries");
        require(c.scm.source_samples > 0, s.key("source_samples"), "must be positive");
        require(c.scm.target_samples > 0, s.key("target_samples"), "must be positive");
    }
    {
        Section s = root.child("dcm");
        auto& d = c.dcm;
        s.read_count("k_mechanisms", d.pairs);
        s.read_count("warmup", d.warmup);
        s.read_count("iterations", d.iterations);
        s.read_count("batch_size", d.batch_size);
        s.read("alpha1", d.weights.cyc);
        s.read("alpha2", d.weights.idt);
        read_enum(s, "mechanism", d.mechanism, mechanism_class_from_string);
        s.read_count("mechanism_hidden", d.mechanism_hidden);
        s.read_count("disc_hidden", d.disc_hidden);
        s.read("init_std", d.init_std);
        s.read("per_sample_winners", d.per_sample_winners);
        read_adam(s.child("adam"), d.adam);
        s.finish();
        require(d.pairs >= 1, s.key("k_mechanisms"), "must be at least 1");
        require(d.batch_size >= 1, s.key("batch_size"), "must be positive");
        require(d.weights.cyc >= 0.0, s.key("alpha1"), "must be non-negative");
        require(d.weights.idt >= 0.0, s.key("alpha2"), "must be non-negative");
        require(d.mechanism_hidden >= 1, s.key("mechanism_hidden"), "must be positive");
        require(d.disc_hidden >= 1, s.key("disc_hidden"), "must be positive");
        require(d.init_std >= 0.0, s.key("init_std"), "must be non-negative");
    }
    {
        Section s = root.child("proxy");
        auto& p = c.proxy;
        s.read_count("latent", p.latent);
        s.read_count("vae_hidden", p.vae_hidden);
        s.read_count("disc_hidden", p.disc_hidden);
        s.read_count("iterations", p.iterations);
        s.read_count("batch_size", p.batch_size);
        s.read("alpha", p.alpha);
        read_sgd(s, p.sgd);
        read_enum(s, "weighting", p.weighting, weighting_from_string);
        read_enum(s, "z_mode", p.z_mode, z_mode_from_string);
        s.read("init_std", p.init_std);
        s.read("adapter_lr_scale", p.adapter_lr_scale);
        s.read_count("log_every", p.log_every);
        s.finish();
        require(p.latent >= 1 && p.latent < c.scm.spec.n, s.key("latent"), "must satisfy 1 <= l < scm.n");
        require(p.vae_hidden >= 1, s.key("vae_hidden"), "must be positive");
        require(p.disc_hidden >= 1, s.key("disc_hidden"), "must be positive");
        require(p.batch_size >= 1, s.key("batch_size"), "must be positive");
        require(p.alpha >= 0.0, s.key("alpha"), "must be non-negative");
        require(p.init_std >= 0.0, s.key("init_std"), "must be non-negative");
        require(p.adapter_lr_scale >= 0.0, s.key("adapter_lr_scale"), "must be non-negative");
    }
    {
        Section s = root.child("baseline");
        auto& b = c.baseline;
        s.read_count("iterations", b.iterations);
        s.read_count("batch_size", b.batch_size);
        read_sgd(s, b.sgd);
        s.read("alpha", b.alpha);
        s.read_count("disc_hidden", b.disc_hidden);
        s.read("init_std", b.init_std);
        s.finish();
        require(b.batch_size >= 1, s.key("batch_size"), "must be positive");
        require(b.alpha >= 0.0, s.key("alpha"), "must be non-negative");
        require(b.disc_hidden >= 1, s.key("disc_hidden"), "must be positive");
    }
    {
        Section s = root.child("bench");
        auto& b = c.bench;
        s.read_count("oracle_samples", b.oracle_samples);
        s.read_count("ablation_oracle_samples", b.ablation_oracle_samples);
        s.read_count("eval_points", b.eval_points);
        s.read("ablation_k", b.ablation_k);
        s.finish();
        require(b.oracle_samples >= 1000, s.key("oracle_samples"), "must be at least 1000");
        require(b.ablation_oracle_samples >= 1000, s.key("ablation_oracle_samples"), "must be at least 1000");
        require(b.eval_points >= 1, s.key("eval_points"), "must be positive");
        require(!b.ablation_k.empty(), s.key("ablation_k"), "must not be empty");
        for (auto k : b.ablation_k) require(k >= 1, s.key("ablation_k"), "entries must be at least 1");
    }
    root.finish();
    return c;
}

json to_json(const ExperimentConfig& c) {
    const auto& o = c.scm.spec;
    const auto& d = c.dcm;
    const auto& p = c.proxy;
    const auto& b = c.baseline;
    json j;
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["scm"] = {{"k", o.k},
                {"n", o.n},
                {"c", o.c},
                {"sigma_u", o.sigma_u},
                {"tau", o.tau},
                {"noise_std", o.noise_std},
                {"max_condition", o.max_condition},
                {"shifts", o.shifts},
                {"w_u_std", o.w_u_std},
                {"w_x_std", o.w_x_std},
                {"center_target_logits", o.center_target_logits},
                {"source_samples", c.scm.source_samples},
                {"target_samples", c.scm.target_samples}};
    j["dcm"] = {{"k_mechanisms", d.pairs},
                {"warmup", d.warmup},
                {"iterations", d.iterations},
                {"batch_size", d.batch_size},
                {"alpha1", d.weights.cyc},
                {"alpha2", d.weights.idt},
                {"mechanism", to_string(d.mechanism)},
                {"mechanism_hidden", d.mechanism_hidden},
                {"disc_hidden", d.disc_hidden},
                {"init_std", d.init_std},
                {"per_sample_winners", d.per_sample_winners},
                {"adam", {{"lr", d.adam.lr}, {"beta1", d.adam.beta1}, {"beta2", d.adam.beta2}, {"eps", d.adam.eps}}}};
    j["proxy"] = {{"latent", p.latent},
                  {"vae_hidden", p.vae_hidden},
                  {"disc_hidden", p.disc_hidden},
                  {"iterations", p.iterations},
                  {"batch_size", p.batch_size},
                  {"alpha", p.alpha},
                  {"lr", p.sgd.lr},
                  {"momentum", p.sgd.momentum},
                  {"weighting", to_string(p.weighting)},
                  {"z_mode", to_string(p.z_mode)},
                  {"init_std", p.init_std},
                  {"adapter_lr_scale", p.adapter_lr_scale},
                  {"log_every", p.log_every}};
    j["baseline"] = {{"iterations", b.iterations},
                     {"batch_size", b.batch_size},
                     {"lr", b.sgd.lr},
                     {"momentum", b.sgd.momentum},
                     {"alpha", b.alpha},
                     {"disc_hidden", b.disc_hidden},
                     {"init_std", b.init_std}};
    j["bench"] = {{"oracle_samples", c.bench.oracle_samples},
                  {"ablation_oracle_samples", c.bench.ablation_oracle_samples},
                  {"eval_points", c.bench.eval_points},
                  {"ablation_k", c.bench.ablation_k}};
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

} // namespace tcm
