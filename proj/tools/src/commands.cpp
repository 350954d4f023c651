#include "gpccopf_cli/commands.hpp"

#include "gpccopf/grid.hpp"
#include "gpccopf/io.hpp"
#include "gpccopf/powerflow.hpp"
#include "gpccopf/sparse_gp.hpp"
#include "gpccopf/validate.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>

namespace gpccopf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr const char* kConfigFormat = "gpccopf-config-v1";
constexpr const char* kManifestFormat = "gpccopf-manifest-v1";
constexpr const char* kLinearFormat = "gpccopf-linear-v1";

[[noreturn]] void config_error(const std::string& what) { throw CliError(1, "config_error", what); }

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) config_error(where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) config_error("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception&) {
        config_error(std::string("bad value for '") + key + "'");
    }
}

std::optional<VectorXd> read_vec(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    std::vector<double> v;
    read(j, key, v);
    return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const char* to_string(Propagation p) {
    switch (p) {
        case Propagation::TA1: return "ta1";
        case Propagation::TA2: return "ta2";
        case Propagation::EM: return "em";
    }
    return "ta1";
}

// Artifact directory plus manifest bookkeeping.
class Workspace {
public:
    Workspace(const RunConfig& cfg, const Options& opts) : dir_(cfg.output_dir), canonical_(opts.canonical) {
        const std::string mpath = path("manifest.json");
        if (file_exists(mpath)) {
            try {
                manifest_ = json::parse(read_file(mpath));
            } catch (const json::exception&) {
                throw CliError(2, "bad_artifact", "manifest.json is not valid JSON", mpath);
            }
        }
        if (!manifest_.is_object() || manifest_.value("format", "") != kManifestFormat)
            manifest_ = {{"format", kManifestFormat}, {"artifacts", json::object()}};
        manifest_["config_hash"] = cfg.config_hash;
        manifest_["case_hash"] = file_hash(cfg.case_path);
    }

    std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

    // Upstream artifact must exist and still match the hash recorded when it was written.
    std::string require(const std::string& name) const {
        const std::string p = path(name);
        if (!file_exists(p)) throw CliError(2, "missing_artifact", "missing upstream artifact " + name, p);
        const json& arts = manifest_.at("artifacts");
        if (!arts.contains(name)) return p;
        const json& entry = arts.at(name);
        if (entry.value("hash", "") != file_hash(p))
            throw CliError(2, "stale_artifact", name + " changed since the manifest was written", p);
        // an input rewritten after this artifact was produced makes it stale too
        if (entry.contains("inputs"))
            for (const auto& [in, h] : entry.at("inputs").items())
                if (file_exists(path(in)) && h.get<std::string>() != file_hash(path(in)))
                    throw CliError(2, "stale_artifact", name + " was built from an older " + in, p);
        return p;
    }

    void write(const std::string& name, const std::string& text, const std::string& stage,
               const std::vector<std::string>& inputs, double elapsed) {
        write_file(path(name), text);
        record(name, stage, inputs, elapsed);
    }

    void write_set(const std::string& name, const SampleSet& s, const std::string& stage, double elapsed) {
        fs::create_directories(dir_);
        write_csv(s, path(name));
        record(name, stage, {}, elapsed);
    }

private:
    void record(const std::string& name, const std::string& stage, const std::vector<std::string>& inputs,
                double elapsed) {
        json entry = {{"stage", stage}, {"hash", file_hash(path(name))}};
        json in = json::object();
        for (const std::string& i : inputs) in[i] = manifest_["artifacts"].contains(i) ? manifest_["artifacts"][i]["hash"] : json(file_hash(path(i)));
        entry["inputs"] = in;
        if (!canonical_) entry["elapsed_s"] = elapsed;
        manifest_["artifacts"][name] = entry;
        write_file(path("manifest.json"), manifest_.dump(2) + "\n");
    }

    std::string dir_;
    bool canonical_;
    json manifest_;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

GridCase load_grid(const RunConfig& cfg) {
    try {
        return load_case(cfg.case_path);
    } catch (const CaseError& e) {
        throw CliError(1, "config_error", e.what(), cfg.case_path);
    }
}

SampleSet load_csv(const Workspace& ws, const std::string& name) {
    const std::string p = ws.require(name);
    try {
        return read_csv(p);
    } catch (const DatasetError& e) {
        throw CliError(2, "bad_artifact", e.what(), p);
    }
}

json load_json(const Workspace& ws, const std::string& name) {
    const std::string p = ws.require(name);
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw CliError(2, "bad_artifact", std::string(name) + ": " + e.what(), p);
    }
}

json linear_json(const LinearSurrogate& lin) {
    json rows = json::array();
    for (int i = 0; i < lin.A.rows(); ++i) rows.push_back(vec_json(lin.A.row(i).transpose()));
    return {{"format", kLinearFormat}, {"A", rows}, {"b", vec_json(lin.b)}};
}

LinearSurrogate linear_from_json(const json& j, const std::vector<std::string>& in, const std::vector<std::string>& out) {
    if (j.value("format", "") != kLinearFormat) throw CliError(2, "bad_artifact", "model.json: unknown linear map format");
    LinearSurrogate lin;
    lin.input_schema = in;
    lin.output_schema = out;
    lin.b = json_vec(j.at("b"));
    lin.A.resize(static_cast<Eigen::Index>(out.size()), static_cast<Eigen::Index>(in.size()));
    for (int i = 0; i < lin.A.rows(); ++i) lin.A.row(i) = json_vec(j.at("A").at(i)).transpose();
    return lin;
}

Surrogate load_surrogate(const Workspace& ws, const RunConfig& cfg, const GridCase& c) {
    const json j = load_json(ws, "model.json");
    try {
        const std::string kind = j.value("kind", "");
        const bool hybrid = j.value("mode", "full") == "hybrid";
        Surrogate s;
        if (kind == "full") {
            const GpModel m = model_from_json(j.dump());
            s = hybrid ? hybrid_surrogate(linear_from_json(j.at("linear"), m.input_schema, m.output_schema), m)
                       : full_surrogate(m, cfg.propagation);
        } else if (kind == "sparse") {
            const SparseGpModel m = sparse_model_from_json(j.dump());
            s = hybrid ? hybrid_surrogate(linear_from_json(j.at("linear"), m.input_schema, m.output_schema), m)
                       : full_surrogate(m, cfg.propagation);
        } else {
            throw CliError(2, "bad_artifact", "model.json: unknown model kind", ws.path("model.json"));
        }
        if (s.input_schema != input_schema(c) || s.output_schema != output_schema(c))
            throw CliError(2, "stale_artifact", "model.json schema does not match the case", ws.path("model.json"));
        return s;
    } catch (const json::exception& e) {
        throw CliError(2, "bad_artifact", std::string("model.json: ") + e.what(), ws.path("model.json"));
    } catch (const GpError& e) {
        throw CliError(2, "bad_artifact", std::string("model.json: ") + e.what(), ws.path("model.json"));
    }
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        config_error(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config", {"format", "case_path", "sampling", "training", "uncertainty", "validation", "output_dir"});
    if (j.contains("format") && j.at("format") != kConfigFormat) config_error("unsupported config format");

    RunConfig cfg;
    auto resolve_path = [&](const std::string& p) { return (fs::path(base_dir) / p).lexically_normal().string(); };
    if (!j.contains("case_path")) config_error("case_path is required");
    std::string case_path, out_dir = "out";
    read(j, "case_path", case_path);
    read(j, "output_dir", out_dir);
    cfg.case_path = resolve_path(case_path);
    cfg.output_dir = resolve_path(out_dir);
    if (!file_exists(cfg.case_path)) throw CliError(1, "config_error", "case file not found", cfg.case_path);

    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        check_keys(s, "sampling", {"m_s", "seed", "mu_eta_corr", "sigma_eta_corr", "mu_eta_unc", "sigma_eta_unc",
                                   "mu_nu_corr", "sigma_nu_corr", "mu_nu_unc", "sigma_nu_unc", "psi_lo", "psi_hi", "rho"});
        SamplingParams& p = cfg.sampling;
        read(s, "m_s", cfg.m_s);
        read(s, "seed", p.seed);
        read(s, "mu_eta_corr", p.mu_eta_corr);
        read(s, "sigma_eta_corr", p.sigma_eta_corr);
        read(s, "mu_eta_unc", p.mu_eta_unc);
        read(s, "sigma_eta_unc", p.sigma_eta_unc);
        read(s, "mu_nu_corr", p.mu_nu_corr);
        read(s, "sigma_nu_corr", p.sigma_nu_corr);
        read(s, "mu_nu_unc", p.mu_nu_unc);
        read(s, "sigma_nu_unc", p.sigma_nu_unc);
        read(s, "psi_lo", p.psi_lo);
        read(s, "psi_hi", p.psi_hi);
        read(s, "rho", p.rho);
    }
    try {
        cfg.sampling.validate();
    } catch (const std::exception& e) {
        config_error(e.what());
    }
    if (cfg.m_s < 2) config_error("sampling.m_s must be at least 2");

    if (j.contains("training")) {
        const json& t = j.at("training");
        check_keys(t, "training", {"mode", "sparse_m", "propagation", "restarts", "max_iters", "seed", "init_lo", "init_hi"});
        std::string mode = "full", prop = "ta1";
        read(t, "mode", mode);
        read(t, "propagation", prop);
        if (mode == "full") cfg.mode = Mode::Full;
        else if (mode == "hybrid") cfg.mode = Mode::Hybrid;
        else config_error("training.mode must be full or hybrid");
        if (prop == "ta1") cfg.propagation = Propagation::TA1;
        else if (prop == "ta2") cfg.propagation = Propagation::TA2;
        else if (prop == "em") cfg.propagation = Propagation::EM;
        else config_error("training.propagation must be ta1, ta2 or em");
        if (t.contains("sparse_m") && !t.at("sparse_m").is_null()) {
            int m = 0;
            read(t, "sparse_m", m);
            cfg.sparse_m = m;
        }
        read(t, "restarts", cfg.gp.restarts);
        read(t, "max_iters", cfg.gp.max_iters);
        read(t, "seed", cfg.gp.seed);
        read(t, "init_lo", cfg.gp.init_lo);
        read(t, "init_hi", cfg.gp.init_hi);
    }
    if (cfg.sparse_m && (*cfg.sparse_m < 1 || *cfg.sparse_m > cfg.m_s))
        config_error("training.sparse_m must lie in [1, sampling.m_s]");
    if (cfg.sparse_m && cfg.propagation != Propagation::TA1)
        config_error("sparse models propagate with ta1 only");
    if (cfg.mode == Mode::Hybrid && cfg.propagation != Propagation::TA1)
        config_error("hybrid mode propagates with ta1 only");
    if (cfg.gp.restarts < 1 || cfg.gp.max_iters < 1) config_error("training.restarts and max_iters must be positive");

    if (j.contains("uncertainty")) {
        const json& u = j.at("uncertainty");
        check_keys(u, "uncertainty", {"load_frac", "res_frac", "sigma_l", "sigma_rs", "eps_pg", "eps_q", "eps_v", "eps_s"});
        read(u, "load_frac", cfg.load_frac);
        read(u, "res_frac", cfg.res_frac);
        cfg.sigma_l = read_vec(u, "sigma_l");
        cfg.sigma_rs = read_vec(u, "sigma_rs");
        read(u, "eps_pg", cfg.eps_pg);
        read(u, "eps_q", cfg.eps_q);
        read(u, "eps_v", cfg.eps_v);
        read(u, "eps_s", cfg.eps_s);
    }
    for (double e : {cfg.eps_pg, cfg.eps_q, cfg.eps_v, cfg.eps_s})
        if (!(e > 0 && e < 0.5)) config_error("violation probabilities must lie in (0, 0.5)");
    if (!(cfg.load_frac >= 0) || !(cfg.res_frac >= 0)) config_error("uncertainty fractions must be nonnegative");

    if (j.contains("validation")) {
        const json& v = j.at("validation");
        check_keys(v, "validation", {"n_mc", "seed"});
        read(v, "n_mc", cfg.n_mc);
        read(v, "seed", cfg.validation_seed);
    }
    if (cfg.n_mc < 1) config_error("validation.n_mc must be positive");
    cfg.config_hash = hex64(fnv1a(text));
    return cfg;
}

RunConfig load_config(const std::string& path) {
    if (!file_exists(path)) throw CliError(1, "config_error", "config file not found", path);
    return parse_config(read_file(path), fs::path(path).parent_path().string());
}

RunConfig resolve(const Options& opts) {
    if (opts.config.empty()) config_error("--config is required");
    RunConfig cfg = load_config(opts.config);
    if (!opts.out.empty()) cfg.output_dir = opts.out;
    if (opts.seed) {
        cfg.sampling.seed = *opts.seed;
        cfg.gp.seed = *opts.seed;
        cfg.validation_seed = *opts.seed;
    }
    return cfg;
}

UncertaintySpec uncertainty(const RunConfig& cfg, const GridCase& c) {
    UncertaintySpec u = default_uncertainty(reference_forecast(c), cfg.load_frac, cfg.res_frac);
    if (cfg.sigma_l) u.sigma_l = *cfg.sigma_l;
    if (cfg.sigma_rs) u.sigma_rs = *cfg.sigma_rs;
    u.eps_pg = cfg.eps_pg;
    u.eps_q = cfg.eps_q;
    u.eps_v = cfg.eps_v;
    u.eps_s = cfg.eps_s;
    try {
        u.validate();
    } catch (const std::exception& e) {
        config_error(std::string("uncertainty: ") + e.what());
    }
    return u;
}

void cmd_dataset(const RunConfig& cfg, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const GridCase c = load_grid(cfg);
    Workspace ws(cfg, opts);
    int skipped = 0;
    const std::vector<InjectionSet> drawn = sample_operating_points(c, cfg.sampling, cfg.m_s, &skipped);
    // keep rows whose AC power flow converges so the AC and DC files align
    std::vector<InjectionSet> kept;
    for (const InjectionSet& inj : drawn) {
        try {
            solve_ac_pf(c, inj);
            kept.push_back(inj);
        } catch (const PfError&) {
        }
    }
    if (kept.size() < 2) throw CliError(3, "numeric_failure", "fewer than two convergent samples");
    const SampleSet ac = build_dataset(c, kept);
    const SampleSet dc = build_dc_dataset(c, kept);
    const double dt = seconds_since(t0);
    ws.write_set("dataset.csv", ac, "dataset", dt);
    ws.write_set("dataset_dc.csv", dc, "dataset", dt);
    ws.write("dataset.scaler.json", scaler_to_json(standardize(ac).second, ac) + "\n", "dataset", {"dataset.csv"}, dt);
    std::cout << "dataset: " << ac.rows() << " rows (" << skipped << " infeasible draws, "
              << drawn.size() - kept.size() << " divergent), n_x = " << ac.X.cols() << ", n_y = " << ac.Y.cols()
              << "\n";
}

void cmd_train(const RunConfig& cfg, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    Workspace ws(cfg, opts);
    std::vector<std::string> inputs = {"dataset.csv"};
    SampleSet train_set = load_csv(ws, "dataset.csv");
    std::optional<LinearSurrogate> lin;
    if (cfg.mode == Mode::Hybrid) {
        inputs.push_back("dataset_dc.csv");
        const SampleSet dc = load_csv(ws, "dataset_dc.csv");
        if (dc.rows() != train_set.rows())
            throw CliError(2, "stale_artifact", "dataset_dc.csv does not align with dataset.csv", ws.path("dataset_dc.csv"));
        lin = fit_linear_surrogate(dc);
        train_set = residual_dataset(train_set, *lin);
    }
    json j;
    if (cfg.sparse_m) {
        SparseConfig sc;
        sc.m_m = *cfg.sparse_m;
        sc.gp = cfg.gp;
        j = json::parse(sparse_model_to_json(train_sparse(train_set, sc)));
    } else {
        j = json::parse(model_to_json(train(train_set, cfg.gp)));
    }
    j["mode"] = cfg.mode == Mode::Hybrid ? "hybrid" : "full";
    j["propagation"] = to_string(cfg.propagation);
    if (lin) j["linear"] = linear_json(*lin);
    ws.write("model.json", j.dump(1) + "\n", "train", inputs, seconds_since(t0));
    std::cout << "train: " << j.at("mode").get<std::string>() << " "
              << (cfg.sparse_m ? "sparse (m_m = " + std::to_string(*cfg.sparse_m) + ")" : std::string("dense")) << " GP on "
              << train_set.rows() << " rows\n";
}

void cmd_solve(const RunConfig& cfg, const Options& opts) {
    const GridCase c = load_grid(cfg);
    Workspace ws(cfg, opts);
    const Surrogate s = load_surrogate(ws, cfg, c);
    const CcOpfProblem p = build_problem(c, s, reference_forecast(c), uncertainty(cfg, c));
    const CcOpfSolution sol = solve_cc_opf(p);
    ws.write("solution.json", solution_to_json(sol, opts.canonical) + "\n", "solve", {"model.json"}, sol.solve_time);
    std::cout << "solve: " << gpccopf::to_string(sol.status) << ", cost " << sol.cost << " $, " << sol.iterations
              << " iterations, KKT residual " << sol.kkt_residual << "\n";
    if (sol.status != NlpStatus::Optimal)
        throw CliError(3, "numeric_failure", std::string("solver ended with status ") + gpccopf::to_string(sol.status),
                       ws.path("solution.json"));
}

void cmd_validate(const RunConfig& cfg, const Options& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const GridCase c = load_grid(cfg);
    Workspace ws(cfg, opts);
    const json j = load_json(ws, "solution.json");
    CcOpfSolution sol;
    try {
        sol = solution_from_json(j.dump());
    } catch (const std::exception& e) {
        throw CliError(2, "bad_artifact", e.what(), ws.path("solution.json"));
    }
    if (sol.p_g.size() != c.n_gen() || sol.alpha.size() != c.n_gen())
        throw CliError(2, "stale_artifact", "solution.json does not match the case", ws.path("solution.json"));
    ValidationOptions vo;
    vo.n = cfg.n_mc;
    vo.seed = cfg.validation_seed;
    const ValidationReport r = monte_carlo_validate(c, sol, reference_forecast(c), uncertainty(cfg, c), vo);
    ws.write("report.json", report_to_json(r) + "\n", "validate", {"solution.json"}, seconds_since(t0));
    std::cout << "validate: " << r.n_samples << " samples, " << r.n_divergent << " divergent, overall violation rate "
              << r.overall_rate << (r.valid ? "" : " (invalid: too many divergent power flows)") << "\n";
}

void cmd_pipeline(const RunConfig& cfg, const Options& opts) {
    cmd_dataset(cfg, opts);
    cmd_train(cfg, opts);
    cmd_solve(cfg, opts);
    cmd_validate(cfg, opts);
}

int run(const std::string& command, const Options& opts, std::ostream& err) {
    auto fail = [&](int code, const std::string& kind, const std::string& msg, const std::string& path) {
        json e = {{"format", "gpccopf-error-v1"}, {"command", command}, {"exit_code", code}, {"error", kind}, {"message", msg}};
        if (!path.empty()) e["path"] = path;
        err << e.dump() << "\n";
        return code;
    };
    try {
        const RunConfig cfg = resolve(opts);
        if (command == "dataset") cmd_dataset(cfg, opts);
        else if (command == "train") cmd_train(cfg, opts);
        else if (command == "solve") cmd_solve(cfg, opts);
        else if (command == "validate") cmd_validate(cfg, opts);
        else if (command == "pipeline") cmd_pipeline(cfg, opts);
        else return fail(1, "config_error", "unknown command " + command, "");
        return 0;
    } catch (const CliError& e) {
        return fail(e.code(), e.kind(), e.what(), e.path());
    } catch (const IoError& e) {
        return fail(1, "io_error", e.what(), "");
    } catch (const DatasetError& e) {
        if (e.kind() == DatasetError::Kind::Io) return fail(1, "io_error", e.what(), "");
        return fail(3, "numeric_failure", e.what(), "");
    } catch (const std::exception& e) {
        return fail(3, "numeric_failure", e.what(), "");
    }
}

}  // namespace gpccopf::cli
