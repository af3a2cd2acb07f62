#include "commands.hpp"

#include "verify.hpp"

#include "tcm/bench.hpp"
#include "tcm/config.hpp"
#include "tcm/errors.hpp"
#include "tcm/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

namespace tcm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ExperimentConfig resolve_config(const CommonOptions& common) {
    ExperimentConfig c = common.config ? load_config(*common.config) : ExperimentConfig{};
    if (common.seed) c.seed = *common.seed;
    return c;
}

// Maps library exceptions onto the exit-code contract.
template <class F>
int guarded(const char* command, F body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << command << ": config error at '" << e.key() << "': " << e.what() << "\n";
        return kConfigError;
    } catch (const MismatchError& e) {
        std::cerr << command << ": mismatch: " << e.what() << "\n";
        return kMismatch;
    } catch (const ShapeError& e) {
        std::cerr << command << ": mismatch: " << e.what() << "\n";
        return kMismatch;
    } catch (const SpecError& e) {
        std::cerr << command << ": invalid spec: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return kVerifyFailed;
    }
}

std::string jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

std::string cell(const std::optional<double>& v, const char* f = "%.4f") {
    if (!v) return "";
    char buf[48];
    std::snprintf(buf, sizeof buf, f, *v);
    return buf;
}

} // namespace

int cmd_gen(const CommonOptions& common, const std::optional<std::string>& out_dir) {
    return guarded("gen", [&] {
        const ExperimentConfig c = resolve_config(common);
        const fs::path out = out_dir ? fs::path(*out_dir) : fs::path(c.out) / "data";
        const BenchData d = make_bench_data(c.scm, c.seed);
        write_dataset_files(out, d.spec, c.seed, d.source, d.target);
        std::cout << "wrote " << d.source.size() << " source and " << d.target.size() << " target rows to "
                  << out.string() << " (spec " << d.spec.hash() << ")\n";
        return kOk;
    });
}

int cmd_train(const CommonOptions& common, const std::string& data_dir, const std::optional<std::string>& out_dir,
              const std::string& stage) {
    return guarded("train", [&] {
        if (stage != "1" && stage != "2" && stage != "all")
            throw ConfigError("--stage", "expected 1, 2 or all, got '" + stage + "'");
        const ExperimentConfig c = resolve_config(common);
        const fs::path out = out_dir ? fs::path(*out_dir) : fs::path(c.out);
        const fs::path dcm_path = out / "dcm.ckpt.json";
        if (!fs::exists(fs::path(data_dir) / "meta.json")) {
            std::cerr << "train: no dataset in '" << data_dir << "'; run `tcm gen --out " << data_dir << "` first\n";
            return static_cast<int>(kMissingPrerequisite);
        }
        if (stage == "2" && !fs::exists(dcm_path)) {
            std::cerr << "train: stage 2 needs " << dcm_path.string() << "; run `tcm train --stage 1 --data "
                      << data_dir << " --out " << out.string() << "` first\n";
            return static_cast<int>(kMissingPrerequisite);
        }
        const LoadedData data = read_dataset_files(data_dir);
        const std::string hash = data.spec.hash();
        const ExperimentStreams streams(c.seed);
        fs::create_directories(out);

        DcmModel dcm;
        if (stage == "1" || stage == "all") {
            const DcmTrainResult r = train_dcms(c.dcm, data.source, data.target, streams.dcm);
            std::vector<json> log;
            for (const auto& s : r.log)
                log.push_back({{"iteration", s.iteration},
                               {"warmup", s.warmup},
                               {"pair_loss", s.pair_loss},
                               {"winner", s.winner},
                               {"disc_objective", s.disc_objective}});
            write_text_file(out / "dcm_log.jsonl", jsonl(log));
            write_text_file(dcm_path, dcm_checkpoint(r.model, c, hash).dump() + "\n");
            std::cout << "stage 1: " << r.model.k << " mechanism pairs, post-warmup wins";
            for (const auto& s : r.state.stats) std::cout << ' ' << s.post_warmup_wins;
            std::cout << "\n";
            dcm = r.model;
        } else {
            dcm = load_dcm_checkpoint(read_json_file(dcm_path), hash);
        }

        if (stage == "2" || stage == "all") {
            const Stage2Result r = train_stage2(c.proxy, dcm, data.source, data.target, data.spec.c, streams.proxy);
            std::vector<json> log;
            std::size_t rank_warnings = 0;
            for (const auto& e : r.log) {
                rank_warnings += e.w3_rank_warning;
                json row{{"iteration", e.iteration},   {"classification", e.classification},
                         {"cross_entropy", e.cross_entropy}, {"proxy_mse", e.proxy_mse},
                         {"vae", e.vae},               {"recon", e.recon},
                         {"kl", e.kl},                 {"proxy", e.proxy},
                         {"objective", e.objective},   {"w3_smin", e.w3_smin}};
                if (e.w3_rank_warning) row["warning"] = "W3 smallest singular value below 1e-8";
                log.push_back(std::move(row));
            }
            write_text_file(out / "proxy_log.jsonl", jsonl(log));
            write_text_file(out / "proxy.ckpt.json", proxy_checkpoint(r.model, c, hash).dump() + "\n");
            if (rank_warnings) std::cerr << "train: warning: W3 rank collapse in " << rank_warnings << " log rows\n";
            if (r.model.prior && !r.model.prior->warning.empty())
                std::cerr << "train: warning: " << r.model.prior->warning << "\n";
            std::cout << "stage 2: proxy model trained for " << c.proxy.iterations << " iterations\n";
        }
        return static_cast<int>(kOk);
    });
}

int cmd_infer(const std::string& checkpoint_dir, const std::string& data_file, const std::string& out_file) {
    return guarded("infer", [&] {
        const fs::path ckpt(checkpoint_dir);
        for (const char* f : {"dcm.ckpt.json", "proxy.ckpt.json"})
            if (!fs::exists(ckpt / f)) {
                std::cerr << "infer: missing " << (ckpt / f).string() << "; run `tcm train --stage all` first\n";
                return static_cast<int>(kMissingPrerequisite);
            }
        const json dcm_json = read_json_file(ckpt / "dcm.ckpt.json");
        const json proxy_json = read_json_file(ckpt / "proxy.ckpt.json");
        const std::string trained_hash = dcm_json.value("spec_hash", std::string());

        const fs::path meta_path = fs::path(data_file).parent_path() / "meta.json";
        std::optional<LoadedData> hidden;
        if (fs::exists(meta_path)) {
            hidden = read_dataset_files(fs::path(data_file).parent_path());
            if (hidden->spec.hash() != trained_hash)
                throw MismatchError("data spec " + hidden->spec.hash() + " differs from checkpoint spec " + trained_hash);
        }
        const DcmModel dcm = load_dcm_checkpoint(dcm_json, trained_hash);
        const ProxyModel model = load_proxy_checkpoint(proxy_json, dcm, trained_hash);
        const FeatureTable table = read_feature_csv(data_file);
        if (!table.ids.empty() && table.x.cols() != model.n)
            throw MismatchError("data has " + std::to_string(table.x.cols()) + " feature columns, checkpoint expects " +
                                std::to_string(model.n));

        std::ostringstream os;
        os << "id,predicted";
        for (std::size_t y = 0; y < model.c; ++y) os << ",logit" << y;
        for (std::size_t y = 0; y < model.c; ++y) os << ",prob" << y;
        for (std::size_t i = 0; i < model.k(); ++i) os << ",weight" << i;
        os << '\n';
        const ProxyFunction h_y(model.heads());
        std::vector<Vector> probs;
        for (std::size_t r = 0; r < table.ids.size(); ++r) {
            const Inference inf = infer(model, h_y, table.x.row_vector(r));
            os << table.ids[r] << ',' << inf.predicted;
            for (double v : inf.logits) os << ',' << format_double(v);
            for (double v : inf.probs) os << ',' << format_double(v);
            for (double v : inf.weights) os << ',' << format_double(v);
            os << '\n';
            probs.push_back(inf.probs);
        }
        write_text_file(out_file, os.str());

        // Scored against the hidden columns when the data file is a generated target set.
        if (hidden && fs::path(data_file).filename() == "target.csv" && probs.size() == hidden->target.size()) {
            const ExperimentConfig c = config_from_json(dcm_json.at("config"));
            const OracleTable oracle = oracle_table(hidden->spec, hidden->target, c.bench.eval_points,
                                                    c.bench.oracle_samples, ExperimentStreams(c.seed).oracle);
            std::size_t row = 0;
            MetricsReport m = evaluate([&](std::span<const double>) { return probs.at(row++); }, hidden->target, oracle);
            m.method = "tcm";
            m.k = model.k();
            m.seed = c.seed;
            m.config = dcm_json.at("config");
            write_text_file(fs::path(out_file).parent_path() / "metrics_tcm.json", to_json(m).dump(2) + "\n");
        }
        std::cout << "wrote " << table.ids.size() << " predictions to " << out_file << "\n";
        return static_cast<int>(kOk);
    });
}

int cmd_verify(const CommonOptions& common, const std::string& level, bool corrupt_pinv) {
    return guarded("verify", [&] {
        if (level != "quick" && level != "full") throw ConfigError("--level", "expected quick or full");
        VerifyOptions o;
        o.level = level == "full" ? VerifyLevel::Full : VerifyLevel::Quick;
        o.corrupt_pinv = corrupt_pinv;
        o.experiment = resolve_config(common);
        o.seed = o.experiment.seed;
        const auto results = run_verify(o);
        bool ok = true;
        std::printf("%-20s %-6s %8s  %s\n", "suite", "result", "seconds", "detail");
        for (const auto& r : results) {
            std::printf("%-20s %-6s %8.2f  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                        r.detail.c_str());
            ok &= r.passed;
        }
        if (!ok) {
            for (const auto& r : results)
                if (!r.passed) std::cerr << "verify: invariant failed: " << r.name << "\n";
        }
        return static_cast<int>(ok ? kOk : kVerifyFailed);
    });
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_file) {
    return guarded("report", [&] {
        struct Row {
            std::string run;
            MetricsReport m;
        };
        std::vector<Row> rows;
        std::vector<std::string> warnings;
        for (const auto& dir : run_dirs) {
            if (!fs::is_directory(dir)) {
                warnings.push_back(dir + ": not a directory");
                continue;
            }
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir)) {
                const std::string name = e.path().filename().string();
                if (name.starts_with("metrics") && e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            if (files.empty()) warnings.push_back(dir + ": no metrics*.json report files");
            std::vector<Row> here;
            for (const auto& f : files) {
                const json j = read_json_file(f);
                if (j.is_array())
                    for (const auto& item : j) here.push_back({dir, metrics_from_json(item)});
                else
                    here.push_back({dir, metrics_from_json(j)});
            }
            std::stable_sort(here.begin(), here.end(), [](const Row& a, const Row& b) {
                return std::tie(a.m.method, a.m.k) < std::tie(b.m.method, b.m.k);
            });
            rows.insert(rows.end(), here.begin(), here.end());
        }
        for (const auto& w : warnings) std::cerr << "report: warning: " << w << "\n";
        if (rows.empty()) {
            std::cerr << "report: no completed runs found; run `tcm bench`, `tcm ablate` or `tcm infer` first\n";
            return static_cast<int>(kMissingPrerequisite);
        }

        std::ostringstream csv, text;
        csv << "run,method,k,seed,samples,accuracy,oracle_agreement,tv_distance,purity_min,purity_mean,seconds\n";
        char line[256];
        std::snprintf(line, sizeof line, "%-28s %-12s %3s %6s %9s %9s %9s %9s %9s\n", "run", "method", "k", "seed",
                      "accuracy", "agreement", "tv", "purity", "seconds");
        text << line;
        for (const auto& r : rows) {
            const auto& m = r.m;
            csv << r.run << ',' << m.method << ',' << m.k << ',' << m.seed << ',' << m.samples << ','
                << cell(m.accuracy, "%.6f") << ',' << cell(m.oracle_agreement, "%.6f") << ','
                << cell(m.tv_distance, "%.6f") << ',' << cell(m.purity_min, "%.6f") << ','
                << cell(m.purity_mean, "%.6f") << ',' << cell(m.seconds, "%.3f") << '\n';
            std::snprintf(line, sizeof line, "%-28s %-12s %3zu %6llu %9s %9s %9s %9s %9s\n", r.run.c_str(),
                          m.method.c_str(), m.k, static_cast<unsigned long long>(m.seed), cell(m.accuracy).c_str(),
                          cell(m.oracle_agreement).c_str(), cell(m.tv_distance).c_str(),
                          cell(m.purity_mean).c_str(), cell(m.seconds, "%.1f").c_str());
            text << line;
        }
        write_text_file(out_file, csv.str());
        fs::path txt(out_file);
        txt.replace_extension(".txt");
        write_text_file(txt, text.str());
        std::cout << text.str();
        return static_cast<int>(kOk);
    });
}

int cmd_bench(const CommonOptions& common, const std::optional<std::string>& out_dir, bool no_shift) {
    return guarded("bench", [&] {
        const ExperimentConfig c = resolve_config(common);
        const fs::path out = out_dir ? fs::path(*out_dir) : fs::path(c.out) / (no_shift ? "null" : "bench");
        const BenchData d = no_shift ? make_null_bench_data(c.scm, c.seed) : make_bench_data(c.scm, c.seed);
        const BenchReports r = run_bench(c, d);
        const std::pair<const char*, const MetricsReport*> files[] = {{"metrics_tcm.json", &r.tcm},
                                                                      {"metrics_source_only.json", &r.source_only},
                                                                      {"metrics_domain_map.json", &r.domain_map},
                                                                      {"metrics_oracle.json", &r.oracle}};
        for (const auto& [name, m] : files) write_text_file(out / name, to_json(*m).dump(2) + "\n");
        for (const auto& [name, m] : files)
            std::printf("%-12s accuracy %.4f  oracle agreement %.4f  TV %.4f\n", m->method.c_str(), m->accuracy,
                        m->oracle_agreement, m->tv_distance);
        return static_cast<int>(kOk);
    });
}

int cmd_ablate(const CommonOptions& common, const std::optional<std::string>& out_dir) {
    return guarded("ablate", [&] {
        const ExperimentConfig c = resolve_config(common);
        const fs::path out = out_dir ? fs::path(*out_dir) : fs::path(c.out) / "ablation";
        const auto rows = ablate_k(c, c.bench.ablation_k);
        json all = json::array();
        for (const auto& r : rows) all.push_back(to_json(r));
        write_text_file(out / "metrics_ablation.json", all.dump(2) + "\n");
        write_text_file(out / "ablation.csv", ablation_csv(rows));
        std::cout << ablation_csv(rows);
        return static_cast<int>(kOk);
    });
}

} // namespace tcm::cli
