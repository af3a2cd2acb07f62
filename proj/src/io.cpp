#include "tcm/io.hpp"

#include "tcm/errors.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tcm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

json matrix_rows(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(m.row_vector(i));
    return rows;
}

Matrix matrix_from_rows(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
    if (!j.is_array() || j.size() != rows) throw MismatchError(what + ": expected " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto r = j[i].get<Vector>();
        if (r.size() != cols) throw MismatchError(what + ": row " + std::to_string(i) + " has the wrong width");
        std::copy(r.begin(), r.end(), m.row_span(i).begin());
    }
    return m;
}

json samples_hidden(const Dataset& d, bool with_labels) {
    json u = json::array(), noise = json::array(), y = json::array();
    for (const auto& s : d.evaluation_samples()) {
        u.push_back(s.u_true);
        noise.push_back(s.noise);
        if (with_labels) y.push_back(s.y ? json(*s.y) : json(nullptr));
    }
    json j{{"u_true", u}, {"noise", noise}};
    if (with_labels) j["y"] = y;
    return j;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
        throw MismatchError(where + ": cannot parse number '" + s + "'");
    return v;
}

void write_csv(const fs::path& path, const Dataset& d, bool with_labels) {
    std::ostringstream os;
    os << "id";
    for (std::size_t j = 0; j < d.dim(); ++j) os << ",x" << j;
    os << ",y,domain\n";
    const std::string domain = to_string(d.domain());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const LabeledSample& s = d.evaluation_sample(i);
        os << i;
        for (double v : s.x) os << ',' << format_double(v);
        os << ',';
        if (with_labels) os << *s.y;
        os << ',' << domain << '\n';
    }
    write_text_file(path, os.str());
}

struct CsvRows {
    std::vector<std::string> ids;
    std::vector<Vector> x;
    std::vector<std::size_t> y;
    bool has_y = false;
};

CsvRows read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MismatchError("cannot open '" + path.string() + "'");
    std::string line;
    CsvRows out;
    if (!std::getline(in, line)) return out;
    const auto header = split_csv_line(line);
    std::vector<std::size_t> x_cols;
    std::optional<std::size_t> id_col, y_col, domain_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "id") id_col = c;
        else if (header[c] == "y") y_col = c;
        else if (header[c] == "domain") domain_col = c;
        else if (header[c].size() > 1 && header[c][0] == 'x') x_cols.push_back(c);
        else throw MismatchError(path.string() + ": unexpected column '" + header[c] + "'");
    }
    std::size_t line_no = 1, labelled = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) throw MismatchError(where + ": wrong number of columns");
        out.ids.push_back(id_col ? cells[*id_col] : std::to_string(out.ids.size()));
        Vector x;
        for (auto c : x_cols) x.push_back(parse_double(cells[c], where));
        out.x.push_back(std::move(x));
        if (domain_col && cells[*domain_col] != "s" && cells[*domain_col] != "t")
            throw MismatchError(where + ": domain must be s or t");
        if (y_col && !cells[*y_col].empty()) {
            out.y.push_back(static_cast<std::size_t>(parse_double(cells[*y_col], where)));
            ++labelled;
        }
    }
    if (labelled != 0 && labelled != out.x.size())
        throw MismatchError(path.string() + ": the y column is only partly filled");
    out.has_y = labelled != 0;
    return out;
}

void check_kind(const json& j, const std::string& kind, const std::string& expected_hash) {
    const int version = j.value("format_version", -1);
    if (version != kCheckpointVersion)
        throw MismatchError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    if (j.value("kind", std::string()) != kind)
        throw MismatchError("checkpoint kind '" + j.value("kind", std::string()) + "', expected '" + kind + "'");
    if (j.value("spec_hash", std::string()) != expected_hash)
        throw MismatchError("checkpoint was trained on spec " + j.value("spec_hash", std::string()) +
                            ", data has spec " + expected_hash);
}

} // namespace

// ---------------------------------------------------------------- spec

json to_json(const ScmSpec& s) {
    return {{"k", s.k},
            {"n", s.n},
            {"c", s.c},
            {"a", matrix_rows(s.a)},
            {"b", s.b},
            {"w_u", matrix_rows(s.w_u)},
            {"w_x", matrix_rows(s.w_x)},
            {"mu_s", s.mu_s},
            {"mu_t", s.mu_t},
            {"sigma_u", s.sigma_u},
            {"tau", s.tau},
            {"noise_std", s.noise_std}};
}

ScmSpec spec_from_json(const json& j) {
    ScmSpec s;
    try {
        s.k = j.at("k").get<std::size_t>();
        s.n = j.at("n").get<std::size_t>();
        s.c = j.at("c").get<std::size_t>();
        s.a = matrix_from_rows(j.at("a"), s.n, s.k, "spec.a");
        s.b = j.at("b").get<Vector>();
        s.w_u = matrix_from_rows(j.at("w_u"), s.c, s.k, "spec.w_u");
        s.w_x = matrix_from_rows(j.at("w_x"), s.c, s.n, "spec.w_x");
        s.mu_s = j.at("mu_s").get<Vector>();
        s.mu_t = j.at("mu_t").get<Vector>();
        s.sigma_u = j.at("sigma_u").get<double>();
        s.tau = j.at("tau").get<double>();
        s.noise_std = j.at("noise_std").get<double>();
    } catch (const json::exception& e) {
        throw MismatchError(std::string("malformed spec: ") + e.what());
    }
    s.validate(false);
    return s;
}

// ---------------------------------------------------------------- datasets

void write_dataset_files(const fs::path& dir, const ScmSpec& spec, std::uint64_t seed, const Dataset& source,
                         const Dataset& target) {
    fs::create_directories(dir);
    write_csv(dir / "source.csv", source, true);
    write_csv(dir / "target.csv", target, false);
    json meta{{"spec_hash", spec.hash()},
              {"seed", seed},
              {"spec", to_json(spec)},
              {"source_rows", source.size()},
              {"target_rows", target.size()},
              {"source_seed", source.seed()},
              {"target_seed", target.seed()},
              {"hidden", {{"source", samples_hidden(source, false)}, {"target", samples_hidden(target, true)}}}};
    write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

LoadedData read_dataset_files(const fs::path& dir) {
    const json meta = read_json_file(dir / "meta.json");
    LoadedData out;
    out.spec = spec_from_json(meta.at("spec"));
    if (out.spec.hash() != meta.value("spec_hash", std::string()))
        throw MismatchError("meta.json spec hash does not match its spec");
    out.seed = meta.value("seed", std::uint64_t{0});

    auto build = [&](const CsvRows& rows, const json& hidden, Domain d, std::uint64_t seed) {
        std::vector<LabeledSample> samples(rows.x.size());
        const auto& u = hidden.at("u_true");
        const auto& noise = hidden.at("noise");
        if (u.size() != samples.size() || noise.size() != samples.size())
            throw MismatchError("meta.json hidden columns do not match the CSV row count");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (rows.x[i].size() != out.spec.n) throw MismatchError("CSV row width differs from spec.n");
            samples[i].x = rows.x[i];
            samples[i].domain = d;
            samples[i].u_true = u[i].get<Vector>();
            samples[i].noise = noise[i].get<Vector>();
            if (rows.has_y) samples[i].y = rows.y[i];
            else if (hidden.contains("y") && !hidden["y"][i].is_null()) samples[i].y = hidden["y"][i].get<std::size_t>();
        }
        return Dataset(out.spec.hash(), d, seed, std::move(samples));
    };
    const json& hidden = meta.at("hidden");
    out.source = build(read_csv(dir / "source.csv"), hidden.at("source"), Domain::Source,
                       meta.value("source_seed", std::uint64_t{0}));
    out.target = build(read_csv(dir / "target.csv"), hidden.at("target"), Domain::Target,
                       meta.value("target_seed", std::uint64_t{0}));
    return out;
}

FeatureTable read_feature_csv(const fs::path& path) {
    CsvRows rows = read_csv(path);
    FeatureTable t;
    t.ids = std::move(rows.ids);
    t.x = rows.x.empty() ? Matrix() : stack_rows(rows.x);
    return t;
}

// ---------------------------------------------------------------- params

json params_to_json(const ParamStore& store) {
    json slots = json::array();
    for (SlotId id = 0; id < store.size(); ++id) {
        const Matrix& m = store.value(id);
        slots.push_back({{"name", store.name(id)}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}});
    }
    return slots;
}

ParamStore params_from_json(const json& j) {
    ParamStore store;
    try {
        for (const auto& s : j) {
            const auto rows = s.at("rows").get<std::size_t>();
            const auto cols = s.at("cols").get<std::size_t>();
            const auto data = s.at("data").get<Vector>();
            if (data.size() != rows * cols)
                throw MismatchError("slot '" + s.at("name").get<std::string>() + "' has the wrong element count");
            Matrix m(rows, cols);
            std::copy(data.begin(), data.end(), m.data().begin());
            store.add(s.at("name").get<std::string>(), std::move(m));
        }
    } catch (const json::exception& e) {
        throw MismatchError(std::string("malformed parameter table: ") + e.what());
    }
    return store;
}

json mlp_spec_to_json(const MlpSpec& s) {
    return {{"widths", s.widths},
            {"hidden", to_string(s.hidden)},
            {"output", to_string(s.output)},
            {"leaky_slope", s.leaky_slope}};
}

MlpSpec mlp_spec_from_json(const json& j) {
    MlpSpec s;
    s.widths = j.at("widths").get<std::vector<std::size_t>>();
    s.hidden = activation_from_string(j.at("hidden").get<std::string>());
    s.output = activation_from_string(j.at("output").get<std::string>());
    s.leaky_slope = j.at("leaky_slope").get<double>();
    s.validate();
    return s;
}

namespace {

json shape_table(const ParamStore& store) {
    json t = json::object();
    for (SlotId id = 0; id < store.size(); ++id)
        t[store.name(id)] = {store.value(id).rows(), store.value(id).cols()};
    return t;
}

} // namespace

json dcm_checkpoint(const DcmModel& m, const ExperimentConfig& config, const std::string& spec_hash) {
    return {{"format_version", kCheckpointVersion},
            {"kind", "dcm"},
            {"spec_hash", spec_hash},
            {"n", m.n},
            {"k", m.k},
            {"mechanism", mlp_spec_to_json(m.mechanism)},
            {"discriminator", mlp_spec_to_json(m.discriminator)},
            {"shapes", shape_table(m.params)},
            {"params", params_to_json(m.params)},
            {"config", to_json(config)}};
}

DcmModel load_dcm_checkpoint(const json& j, const std::string& expected_hash) {
    check_kind(j, "dcm", expected_hash);
    DcmModel m;
    try {
        m.n = j.at("n").get<std::size_t>();
        m.k = j.at("k").get<std::size_t>();
        m.mechanism = mlp_spec_from_json(j.at("mechanism"));
        m.discriminator = mlp_spec_from_json(j.at("discriminator"));
    } catch (const json::exception& e) {
        throw MismatchError(std::string("malformed dcm checkpoint: ") + e.what());
    }
    m.params = params_from_json(j.at("params"));
    for (std::size_t i = 0; i < m.k; ++i)
        for (Direction d : {Direction::SourceToTarget, Direction::TargetToSource}) {
            const std::string p = DcmModel::mechanism_prefix(i, d);
            for (std::size_t l = 0; l < m.mechanism.layers(); ++l)
                if (!m.params.contains(weight_slot(p, l))) throw MismatchError("dcm checkpoint lacks " + weight_slot(p, l));
        }
    return m;
}

json proxy_checkpoint(const ProxyModel& m, const ExperimentConfig& config, const std::string& spec_hash) {
    json prior = nullptr;
    if (m.prior) prior = {{"mean", m.prior->mean}, {"variance", m.prior->variance}, {"warning", m.prior->warning}};
    return {{"format_version", kCheckpointVersion},
            {"kind", "proxy"},
            {"spec_hash", spec_hash},
            {"n", m.n},
            {"l", m.l},
            {"c", m.c},
            {"k", m.k()},
            {"weighting", to_string(m.weighting)},
            {"z_mode", to_string(m.z_mode)},
            {"adapter", mlp_spec_to_json(m.adapter)},
            {"encoder", mlp_spec_to_json(m.encoder)},
            {"decoder", mlp_spec_to_json(m.decoder)},
            {"discriminator", mlp_spec_to_json(m.discriminator)},
            {"prior", prior},
            {"shapes", shape_table(m.params)},
            {"params", params_to_json(m.params)},
            {"config", to_json(config)}};
}

ProxyModel load_proxy_checkpoint(const json& j, const DcmModel& dcm, const std::string& expected_hash) {
    check_kind(j, "proxy", expected_hash);
    ProxyModel m;
    try {
        m.n = j.at("n").get<std::size_t>();
        m.l = j.at("l").get<std::size_t>();
        m.c = j.at("c").get<std::size_t>();
        if (j.at("k").get<std::size_t>() != dcm.k || m.n != dcm.n)
            throw MismatchError("proxy checkpoint was trained against a different DCM checkpoint");
        m.weighting = weighting_from_string(j.at("weighting").get<std::string>());
        m.z_mode = z_mode_from_string(j.at("z_mode").get<std::string>());
        m.adapter = mlp_spec_from_json(j.at("adapter"));
        m.encoder = mlp_spec_from_json(j.at("encoder"));
        m.decoder = mlp_spec_from_json(j.at("decoder"));
        m.discriminator = mlp_spec_from_json(j.at("discriminator"));
        if (!j.at("prior").is_null()) {
            ProxyPrior p;
            p.mean = j["prior"].at("mean").get<Vector>();
            p.variance = j["prior"].at("variance").get<double>();
            p.warning = j["prior"].value("warning", std::string());
            m.prior = std::move(p);
        }
    } catch (const json::exception& e) {
        throw MismatchError(std::string("malformed proxy checkpoint: ") + e.what());
    } catch (const ContractError& e) {
        throw MismatchError(std::string("malformed proxy checkpoint: ") + e.what());
    }
    m.params = params_from_json(j.at("params"));
    m.dcm = dcm;
    return m;
}

// ---------------------------------------------------------------- files

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MismatchError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw MismatchError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

} // namespace tcm
