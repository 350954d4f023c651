#include "gpccopf/dataset.hpp"

#include "gpccopf/rng.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

void SamplingParams::validate() const {
    for (double s : {sigma_eta_corr, sigma_eta_unc, sigma_nu_corr, sigma_nu_unc})
        if (!(s >= 0)) throw std::invalid_argument("sampling sigmas must be nonnegative");
    if (!(psi_lo < psi_hi)) throw std::invalid_argument("psi_lo must be below psi_hi");
    if (!(rho >= 1)) throw std::invalid_argument("rho must be at least 1");
}

SampleSet SampleSet::subset(const std::vector<int>& rows) const {
    SampleSet s;
    s.input_schema = input_schema;
    s.output_schema = output_schema;
    s.X = X(rows, Eigen::all);
    s.Y = Y(rows, Eigen::all);
    s.scaler = scaler;
    return s;
}

namespace {

double lognormal(std::mt19937_64& eng, double mu, double sigma) {
    if (sigma == 0) return std::exp(mu);
    std::normal_distribution<double> nd(mu, sigma);
    return std::exp(nd(eng));
}

std::string unique_name(std::map<std::string, int>& seen, const std::string& base) {
    int n = ++seen[base];
    return n == 1 ? base : base + "_" + std::to_string(n);
}

}  // namespace

std::vector<InjectionSet> sample_injections(const GridCase& c, const SamplingParams& params, int m_s) {
    params.validate();
    std::vector<InjectionSet> out(m_s);
    const size_t nl = c.loads.size(), nr = c.res_units.size();
    for (int i = 0; i < m_s; ++i) {
        auto eng = substream(params.seed, StreamTag::Injections, i);
        InjectionSet& inj = out[i];
        inj.p_l.resize(nl);
        inj.q_l.resize(nl);
        inj.p_rs.resize(nr);
        inj.q_rs.resize(nr);
        const double eta_corr = lognormal(eng, params.mu_eta_corr, params.sigma_eta_corr);
        for (size_t l = 0; l < nl; ++l) {
            const double eta = eta_corr * lognormal(eng, params.mu_eta_unc, params.sigma_eta_unc);
            inj.p_l[l] = eta * c.loads[l].p_ref;
            inj.q_l[l] = c.loads[l].gamma * inj.p_l[l];
        }
        const double nu_corr = lognormal(eng, params.mu_nu_corr, params.sigma_nu_corr);
        for (size_t r = 0; r < nr; ++r) {
            const double nu = nu_corr * lognormal(eng, params.mu_nu_unc, params.sigma_nu_unc);
            inj.p_rs[r] = nu * c.res_units[r].p_ref;
            inj.q_rs[r] = c.res_units[r].gamma * inj.p_rs[r];
        }
    }
    return out;
}

VectorXd sample_generation(const GridCase& c, const VectorXd& p_l, const VectorXd& p_rs, const SamplingParams& params,
                           std::uint64_t sample_index, VectorXd* psi_out) {
    const int ng = c.n_gen();
    double ref_total = 0;
    for (const Gen& g : c.gens) ref_total += g.p_ref;
    if (!(ref_total > 0)) throw DatasetError(DatasetError::Kind::InfeasibleSample, "reference generation must be positive");

    auto eng = substream(params.seed, StreamTag::Generation, sample_index);
    std::uniform_real_distribution<double> ud(params.psi_lo, params.psi_hi);
    const double load = p_l.sum();
    const double target = params.rho * load - p_rs.sum();
    if (target < 0) throw DatasetError(DatasetError::Kind::InfeasibleSample, "infeasible sample");

    VectorXd pg(ng), psi(ng);
    for (int k = 0; k < ng; ++k) {
        psi[k] = ud(eng);
        pg[k] = psi[k] * params.rho * load / ref_total * c.gens[k].p_ref;
    }
    const double s = pg.sum();
    if (!(s > 0)) throw DatasetError(DatasetError::Kind::InfeasibleSample, "infeasible sample");
    pg *= target / s;
    if (psi_out) *psi_out = psi;
    return pg;
}

std::vector<InjectionSet> sample_operating_points(const GridCase& c, const SamplingParams& params, int m_s,
                                                  int* skipped) {
    std::vector<InjectionSet> raw = sample_injections(c, params, m_s);
    std::vector<InjectionSet> out;
    out.reserve(m_s);
    int bad = 0;
    for (int i = 0; i < m_s; ++i) {
        try {
            raw[i].p_g = sample_generation(c, raw[i].p_l, raw[i].p_rs, params, i);
            out.push_back(std::move(raw[i]));
        } catch (const DatasetError&) {
            ++bad;
        }
    }
    if (skipped) *skipped = bad;
    return out;
}

std::vector<std::string> input_schema(const GridCase& c) {
    std::map<std::string, int> seen;
    std::vector<std::string> s;
    for (int g : c.controllable_gens()) s.push_back(unique_name(seen, "pg_" + std::to_string(c.gens[g].bus)));
    for (const Load& l : c.loads) s.push_back(unique_name(seen, "pl_" + std::to_string(l.bus)));
    for (const Res& r : c.res_units) s.push_back(unique_name(seen, "prs_" + std::to_string(r.bus)));
    return s;
}

namespace {

std::vector<int> non_gen_buses(const GridCase& c) {
    std::vector<char> has(c.m(), 0);
    for (const Gen& g : c.gens) has[c.index_of(g.bus)] = 1;
    std::vector<int> out;
    for (int k = 0; k < c.m(); ++k)
        if (!has[k]) out.push_back(k);
    return out;
}

}  // namespace

std::vector<std::string> output_schema(const GridCase& c) {
    std::map<std::string, int> seen;
    std::vector<std::string> s;
    for (int k : non_gen_buses(c)) s.push_back(unique_name(seen, "v_" + std::to_string(c.buses[k].id)));
    for (const Gen& g : c.gens) s.push_back(unique_name(seen, "qg_" + std::to_string(g.bus)));
    for (const Branch& br : c.branches)
        s.push_back(unique_name(seen, "s_" + std::to_string(br.from) + "_" + std::to_string(br.to)));
    return s;
}

VectorXd input_vector(const GridCase& c, const InjectionSet& inj) {
    const auto& ctrl = c.controllable_gens();
    const int ng = static_cast<int>(ctrl.size());
    const int nl = static_cast<int>(inj.p_l.size()), nr = static_cast<int>(inj.p_rs.size());
    VectorXd x(ng + nl + nr);
    for (int i = 0; i < ng; ++i) x[i] = inj.p_g[ctrl[i]];
    x.segment(ng, nl) = inj.p_l;
    x.segment(ng + nl, nr) = inj.p_rs;
    return x;
}

VectorXd output_vector(const GridCase& c, const InjectionSet& inj, const PfSolution& s) {
    const auto ngb = non_gen_buses(c);
    const int nv = static_cast<int>(ngb.size()), ng = c.n_gen(), nb = static_cast<int>(c.branches.size());
    VectorXd y(nv + ng + nb);
    for (int i = 0; i < nv; ++i) y[i] = s.v[ngb[i]];
    y.segment(nv, ng) = gen_q(c, inj, s);
    for (int b = 0; b < nb; ++b) y[nv + ng + b] = s.flows[b].s;
    return y;
}

VectorXd dc_output_vector(const GridCase& c, const InjectionSet& inj) {
    const auto ngb = non_gen_buses(c);
    const int nv = static_cast<int>(ngb.size()), ng = c.n_gen(), nb = static_cast<int>(c.branches.size());
    VectorXd p = bus_p_spec(c, inj);
    p[c.slack_index()] -= p.sum();  // lossless: slack closes the balance
    const VectorXd flows = dc_branch_flows(c, solve_dc_pf(c, p));
    VectorXd y(nv + ng + nb);
    y.head(nv).setOnes();
    y.segment(nv, ng).setZero();
    y.tail(nb) = flows.cwiseAbs();
    return y;
}

SampleSet build_dataset(const GridCase& c, const std::vector<InjectionSet>& samples, double tol) {
    SampleSet s;
    s.input_schema = input_schema(c);
    s.output_schema = output_schema(c);
    const int nx = static_cast<int>(s.input_schema.size()), ny = static_cast<int>(s.output_schema.size());
    s.X.resize(samples.size(), nx);
    s.Y.resize(samples.size(), ny);
    int row = 0;
    for (const InjectionSet& inj : samples) {
        try {
            PfSolution pf = solve_ac_pf(c, inj, tol);
            VectorXd y = output_vector(c, inj, pf);
            if (!y.allFinite()) throw PfError(PfError::Kind::NonConvergence, "non-finite outputs");
            s.X.row(row) = input_vector(c, inj);
            s.Y.row(row) = y;
            ++row;
        } catch (const PfError&) {
            ++s.dropped;
        }
    }
    if (!samples.empty() && s.dropped > 0.1 * samples.size())
        throw DatasetError(DatasetError::Kind::Unstable, "dataset generation unstable");
    s.X.conservativeResize(row, nx);
    s.Y.conservativeResize(row, ny);
    return s;
}

SampleSet build_dc_dataset(const GridCase& c, const std::vector<InjectionSet>& samples) {
    SampleSet s;
    s.input_schema = input_schema(c);
    s.output_schema = output_schema(c);
    s.X.resize(samples.size(), s.input_schema.size());
    s.Y.resize(samples.size(), s.output_schema.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        s.X.row(i) = input_vector(c, samples[i]);
        s.Y.row(i) = dc_output_vector(c, samples[i]);
    }
    return s;
}

SampleSet generate_dataset(const GridCase& c, const SamplingParams& params, int m_s, double tol) {
    int skipped = 0;
    auto pts = sample_operating_points(c, params, m_s, &skipped);
    SampleSet s = build_dataset(c, pts, tol);
    s.dropped += skipped;
    return s;
}

MatrixXd LinearSurrogate::predict_rows(const MatrixXd& X) const {
    return (X * A.transpose()).rowwise() + b.transpose();
}

LinearSurrogate fit_linear_surrogate(const SampleSet& dc_set) {
    const int n = dc_set.rows();
    const int nx = static_cast<int>(dc_set.X.cols()), ny = static_cast<int>(dc_set.Y.cols());
    if (n <= nx) throw DatasetError(DatasetError::Kind::SchemaMismatch, "linear fit needs more rows than inputs");
    MatrixXd D(n, nx + 1);
    D << dc_set.X, VectorXd::Ones(n);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(D);
    if (qr.rank() < nx + 1) throw DatasetError(DatasetError::Kind::SchemaMismatch, "rank-deficient design matrix");
    const MatrixXd coef = qr.solve(dc_set.Y);  // (nx+1) x ny

    LinearSurrogate lin;
    lin.input_schema = dc_set.input_schema;
    lin.output_schema = dc_set.output_schema;
    lin.A = coef.topRows(nx).transpose();
    lin.b = coef.row(nx).transpose();
    for (int j = 0; j < ny; ++j) {
        // constant columns (DC voltages, DC reactive output) are exact constants
        if (dc_set.Y.col(j).maxCoeff() == dc_set.Y.col(j).minCoeff()) {
            lin.A.row(j).setZero();
            lin.b[j] = dc_set.Y(0, j);
        }
    }
    return lin;
}

SampleSet residual_dataset(const SampleSet& ac_set, const LinearSurrogate& lin) {
    if (ac_set.input_schema != lin.input_schema || ac_set.output_schema != lin.output_schema)
        throw DatasetError(DatasetError::Kind::SchemaMismatch, "schema mismatch between dataset and linear surrogate");
    SampleSet r = ac_set;
    r.scaler.reset();
    r.Y = ac_set.Y - lin.predict_rows(ac_set.X);
    return r;
}

namespace {

void column_stats(const MatrixXd& M, const std::vector<std::string>& names, VectorXd& mean, VectorXd& sd) {
    const int n = static_cast<int>(M.rows());
    mean = M.colwise().mean().transpose();
    sd.resize(M.cols());
    for (int j = 0; j < M.cols(); ++j) {
        const double ss = (M.col(j).array() - mean[j]).square().sum();
        sd[j] = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
        if (!(sd[j] > 1e-12)) throw DatasetError(DatasetError::Kind::ConstantColumn, "constant column " + names[j]);
    }
}

}  // namespace

std::pair<SampleSet, Scaler> standardize(const SampleSet& s) {
    Scaler sc;
    column_stats(s.X, s.input_schema, sc.x_mean, sc.x_std);
    column_stats(s.Y, s.output_schema, sc.y_mean, sc.y_std);
    SampleSet out = s;
    out.X = (s.X.rowwise() - sc.x_mean.transpose()).array().rowwise() / sc.x_std.transpose().array();
    out.Y = (s.Y.rowwise() - sc.y_mean.transpose()).array().rowwise() / sc.y_std.transpose().array();
    out.scaler = sc;
    return {out, sc};
}

SampleSet unstandardize(const SampleSet& s, const Scaler& sc) {
    SampleSet out = s;
    out.X = (s.X.array().rowwise() * sc.x_std.transpose().array()).rowwise() + sc.x_mean.transpose().array();
    out.Y = (s.Y.array().rowwise() * sc.y_std.transpose().array()).rowwise() + sc.y_mean.transpose().array();
    out.scaler.reset();
    return out;
}

void write_csv(const SampleSet& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError(DatasetError::Kind::Io, "cannot write " + path);
    bool first = true;
    for (const auto* schema : {&s.input_schema, &s.output_schema})
        for (const std::string& name : *schema) {
            out << (first ? "" : ",") << name;
            first = false;
        }
    out << '\n';
    char buf[32];
    for (int i = 0; i < s.rows(); ++i) {
        for (int j = 0; j < s.X.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", s.X(i, j));
            out << (j ? "," : "") << buf;
        }
        for (int j = 0; j < s.Y.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", s.Y(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

SampleSet read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError(DatasetError::Kind::Io, "cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    SampleSet s;
    size_t nx = 0;
    for (const std::string& c : cols) {
        const bool is_in = c.rfind("pg_", 0) == 0 || c.rfind("pl_", 0) == 0 || c.rfind("prs_", 0) == 0;
        if (is_in) {
            if (!s.output_schema.empty())
                throw DatasetError(DatasetError::Kind::SchemaMismatch, "input column after output columns");
            s.input_schema.push_back(c);
            ++nx;
        } else {
            s.output_schema.push_back(c);
        }
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> r;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p < end) {
            double v;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc()) throw DatasetError(DatasetError::Kind::Io, "bad number in " + path);
            r.push_back(v);
            p = res.ptr;
            if (p < end && *p == ',') ++p;
        }
        if (r.size() != cols.size()) throw DatasetError(DatasetError::Kind::Io, "ragged row in " + path);
        rows.push_back(std::move(r));
    }
    s.X.resize(rows.size(), nx);
    s.Y.resize(rows.size(), cols.size() - nx);
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < cols.size(); ++j) {
            if (j < nx)
                s.X(i, j) = rows[i][j];
            else
                s.Y(i, j - nx) = rows[i][j];
        }
    return s;
}

namespace {

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }
VectorXd from_std(const std::vector<double>& v) { return Eigen::Map<const VectorXd>(v.data(), v.size()); }

}  // namespace

std::string scaler_to_json(const Scaler& sc, const SampleSet& s) {
    json j;
    j["format"] = "gpccopf-scaler-v1";
    j["input_schema"] = s.input_schema;
    j["output_schema"] = s.output_schema;
    j["x_mean"] = to_std(sc.x_mean);
    j["x_std"] = to_std(sc.x_std);
    j["y_mean"] = to_std(sc.y_mean);
    j["y_std"] = to_std(sc.y_std);
    return j.dump(1);
}

Scaler scaler_from_json(const std::string& text) {
    json j = json::parse(text);
    Scaler sc;
    sc.x_mean = from_std(j.at("x_mean").get<std::vector<double>>());
    sc.x_std = from_std(j.at("x_std").get<std::vector<double>>());
    sc.y_mean = from_std(j.at("y_mean").get<std::vector<double>>());
    sc.y_std = from_std(j.at("y_std").get<std::vector<double>>());
    return sc;
}

}  // namespace gpccopf
