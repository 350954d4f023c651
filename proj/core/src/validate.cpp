#include "gpccopf/validate.hpp"

#include "gpccopf/rng.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

InjectionSet apply_recourse(const GridCase& c, const VectorXd& p_g, const VectorXd& alpha, const Forecast& f,
                            const VectorXd& w_l, const VectorXd& w_rs) {
    InjectionSet inj;
    const double omega = w_l.sum() - w_rs.sum();
    inj.p_g = p_g + alpha * omega;
    inj.p_l = f.p_l + w_l;
    inj.p_rs = f.p_rs + w_rs;
    inj.q_l.resize(c.loads.size());
    inj.q_rs.resize(c.res_units.size());
    for (size_t i = 0; i < c.loads.size(); ++i) inj.q_l[i] = c.loads[i].gamma * inj.p_l[i];
    for (size_t i = 0; i < c.res_units.size(); ++i) inj.q_rs[i] = c.res_units[i].gamma * inj.p_rs[i];
    return inj;
}

Metrics regression_metrics(const VectorXd& t, const VectorXd& p) {
    if (t.size() != p.size()) throw ValidateError("metrics: length mismatch");
    Metrics m;
    const int n = static_cast<int>(t.size());
    if (n == 0) return m;
    const VectorXd d = p - t;
    m.mae = d.cwiseAbs().mean();
    m.mse = d.squaredNorm() / n;
    m.rmse = std::sqrt(m.mse);
    double s = 0;
    for (int i = 0; i < n; ++i) {
        if (t[i] + 1 <= 0 || p[i] + 1 <= 0) {
            m.msle_valid = false;
            break;
        }
        const double l = std::log1p(p[i]) - std::log1p(t[i]);
        s += l * l;
    }
    m.msle = m.msle_valid ? s / n : 0.0;
    return m;
}

MetricsTable regression_metrics(const MatrixXd& T, const MatrixXd& P) {
    if (T.rows() != P.rows() || T.cols() != P.cols()) throw ValidateError("metrics: shape mismatch");
    MetricsTable tab;
    for (int j = 0; j < T.cols(); ++j) {
        tab.per_output.push_back(regression_metrics(VectorXd(T.col(j)), VectorXd(P.col(j))));
        tab.rmse_avg += tab.per_output.back().rmse;
        tab.mae_avg += tab.per_output.back().mae;
        tab.mse_avg += tab.per_output.back().mse;
    }
    if (T.cols()) {
        tab.rmse_avg /= T.cols();
        tab.mae_avg /= T.cols();
        tab.mse_avg /= T.cols();
    }
    return tab;
}

namespace {

// Empirical quantile with linear interpolation between order statistics.
double sample_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = p * (v.size() - 1);
    const size_t i = static_cast<size_t>(std::floor(h));
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (h - i) * (v[i + 1] - v[i]);
}

}  // namespace

ValidationReport monte_carlo_validate(const GridCase& c, const VectorXd& p_g, const VectorXd& alpha, const Forecast& f,
                                      const UncertaintySpec& u, const ValidationOptions& opts) {
    if (opts.n < 1) throw ValidateError("validation needs at least one sample");
    if (std::abs(alpha.sum() - 1.0) > 1e-6) throw ValidateError("participation factors must sum to one");
    u.validate();
    const int ng = c.n_gen();
    const int nl = static_cast<int>(c.loads.size()), nr = static_cast<int>(c.res_units.size());

    ValidationReport rep;
    rep.n_samples = opts.n;
    rep.margin_eps = opts.margin_eps;
    rep.output_schema = output_schema(c);
    const int ny = static_cast<int>(rep.output_schema.size());
    const Band bounds = output_bounds(c, rep.output_schema);

    for (const auto& n : rep.output_schema) {
        rep.constraint_names.push_back(n + ":lo");
        rep.constraint_names.push_back(n + ":hi");
    }
    for (const Gen& g : c.gens) {
        rep.constraint_names.push_back("pg_" + std::to_string(g.bus) + ":lo");
        rep.constraint_names.push_back("pg_" + std::to_string(g.bus) + ":hi");
    }
    const int nc = static_cast<int>(rep.constraint_names.size());
    VectorXd count = VectorXd::Zero(nc);
    int any = 0;

    {
        const InjectionSet inj0 = apply_recourse(c, p_g, alpha, f, VectorXd::Zero(nl), VectorXd::Zero(nr));
        rep.y_nominal = output_vector(c, inj0, solve_ac_pf(c, inj0));
    }

    std::ofstream csv;
    if (!opts.samples_csv.empty()) {
        csv.open(opts.samples_csv);
        if (!csv) throw ValidateError("cannot write " + opts.samples_csv);
        for (int j = 0; j < ny; ++j) csv << (j ? "," : "") << rep.output_schema[j];
        csv << '\n';
    }

    std::vector<std::vector<double>> ys(ny);
    std::vector<double> costs;
    for (int s = 0; s < opts.n; ++s) {
        auto eng = substream(opts.seed, StreamTag::MonteCarlo, s);
        std::normal_distribution<double> nd(0.0, 1.0);
        VectorXd w_l(nl), w_rs(nr);
        for (int i = 0; i < nl; ++i) w_l[i] = u.sigma_l[i] * nd(eng);
        for (int i = 0; i < nr; ++i) w_rs[i] = u.sigma_rs[i] * nd(eng);
        const InjectionSet inj = apply_recourse(c, p_g, alpha, f, w_l, w_rs);
        PfSolution pf;
        try {
            pf = solve_ac_pf(c, inj);
        } catch (const PfError&) {
            ++rep.n_divergent;
            continue;
        }
        const VectorXd y = output_vector(c, inj, pf);
        const VectorXd pg = gen_p(c, inj, pf);
        bool viol = false;
        for (int j = 0; j < ny; ++j) {
            ys[j].push_back(y[j]);
            if (y[j] < bounds.lo[j]) count[2 * j] += 1, viol = true;
            if (y[j] > bounds.hi[j]) count[2 * j + 1] += 1, viol = true;
        }
        double cost = 0;
        for (int g = 0; g < ng; ++g) {
            const Gen& G = c.gens[g];
            if (pg[g] < G.p_min) count[2 * ny + 2 * g] += 1, viol = true;
            if (pg[g] > G.p_max) count[2 * ny + 2 * g + 1] += 1, viol = true;
            cost += G.c2 * pg[g] * pg[g] + G.c1 * pg[g] + G.c0;
        }
        costs.push_back(cost);
        any += viol;
        if (csv.is_open()) {
            char buf[32];
            for (int j = 0; j < ny; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", y[j]);
                csv << (j ? "," : "") << buf;
            }
            csv << '\n';
        }
    }

    const int ok = opts.n - rep.n_divergent;
    rep.valid = rep.n_divergent <= 0.05 * opts.n;
    rep.violation_rate = ok ? VectorXd(count / ok) : VectorXd::Zero(nc);
    rep.overall_rate = ok ? static_cast<double>(any) / ok : 0.0;
    rep.lambda_upper = VectorXd::Zero(ny);
    rep.lambda_lower = VectorXd::Zero(ny);
    if (ok) {
        for (int j = 0; j < ny; ++j) {
            rep.lambda_upper[j] = std::max(0.0, sample_quantile(ys[j], 1 - opts.margin_eps) - rep.y_nominal[j]);
            rep.lambda_lower[j] = std::max(0.0, rep.y_nominal[j] - sample_quantile(ys[j], opts.margin_eps));
        }
        const Eigen::Map<const VectorXd> cv(costs.data(), costs.size());
        rep.cost_mean = cv.mean();
        rep.cost_std = costs.size() > 1 ? std::sqrt((cv.array() - rep.cost_mean).square().sum() / (costs.size() - 1)) : 0;
    }
    return rep;
}

ValidationReport monte_carlo_validate(const GridCase& c, const CcOpfSolution& sol, const Forecast& f,
                                      const UncertaintySpec& u, const ValidationOptions& opts) {
    return monte_carlo_validate(c, sol.p_g, sol.alpha, f, u, opts);
}

std::string report_to_json(const ValidationReport& r) {
    using detail::json;
    using detail::vec;
    json j;
    j["format"] = "gpccopf-report-v1";
    j["n_samples"] = r.n_samples;
    j["n_divergent"] = r.n_divergent;
    j["valid"] = r.valid;
    j["constraint_names"] = r.constraint_names;
    j["violation_rate"] = vec(r.violation_rate);
    j["overall_rate"] = r.overall_rate;
    j["output_schema"] = r.output_schema;
    j["y_nominal"] = vec(r.y_nominal);
    j["lambda_upper"] = vec(r.lambda_upper);
    j["lambda_lower"] = vec(r.lambda_lower);
    j["margin_eps"] = r.margin_eps;
    j["cost_mean"] = r.cost_mean;
    j["cost_std"] = r.cost_std;
    return j.dump(2);
}

ValidationReport report_from_json(const std::string& text) {
    using detail::json;
    using detail::vec;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidateError(std::string("report: ") + e.what());
    }
    if (j.value("format", "") != "gpccopf-report-v1") throw ValidateError("report: unknown format");
    ValidationReport r;
    r.n_samples = j.at("n_samples").get<int>();
    r.n_divergent = j.at("n_divergent").get<int>();
    r.valid = j.at("valid").get<bool>();
    r.constraint_names = j.at("constraint_names").get<std::vector<std::string>>();
    r.violation_rate = vec(j.at("violation_rate"));
    r.overall_rate = j.at("overall_rate").get<double>();
    r.output_schema = j.at("output_schema").get<std::vector<std::string>>();
    r.y_nominal = vec(j.at("y_nominal"));
    r.lambda_upper = vec(j.at("lambda_upper"));
    r.lambda_lower = vec(j.at("lambda_lower"));
    r.margin_eps = j.at("margin_eps").get<double>();
    r.cost_mean = j.at("cost_mean").get<double>();
    r.cost_std = j.at("cost_std").get<double>();
    return r;
}

namespace {

// Points whose AC power flow converges, so AC and DC sets stay row-aligned.
std::vector<InjectionSet> convergent(const GridCase& c, std::vector<InjectionSet> pts) {
    std::vector<InjectionSet> out;
    for (auto& p : pts) {
        try {
            solve_ac_pf(c, p);
            out.push_back(std::move(p));
        } catch (const PfError&) {
        }
    }
    return out;
}

}  // namespace

CorruptionReport corruption_experiment(const GridCase& c, const SamplingParams& params, int target_bus,
                                       double gap_lo_mw, double gap_hi_mw, const CorruptionOptions& opts) {
    if (gap_hi_mw < gap_lo_mw) throw ValidateError("gap interval is reversed");
    int li = -1;
    for (size_t i = 0; i < c.loads.size(); ++i)
        if (c.loads[i].bus == target_bus) li = static_cast<int>(i);
    if (li < 0) throw ValidateError("no load at bus " + std::to_string(target_bus));
    const double lo = gap_lo_mw / c.base_mva, hi = gap_hi_mw / c.base_mva;
    const bool zero_width = gap_hi_mw == gap_lo_mw;
    auto in_gap = [&](const InjectionSet& p) { return p.p_l[li] >= lo && p.p_l[li] <= hi; };

    const auto pool = convergent(c, sample_operating_points(c, params, opts.n_samples));
    std::vector<InjectionSet> kept;
    int dropped = 0;
    for (const auto& p : pool) {
        if (!zero_width && in_gap(p)) ++dropped;
        else if (static_cast<int>(kept.size()) < opts.max_train) kept.push_back(p);
    }
    CorruptionReport rep;
    rep.target_bus = target_bus;
    rep.gap_lo_mw = gap_lo_mw;
    rep.gap_hi_mw = gap_hi_mw;
    rep.dropped_fraction = pool.empty() ? 0.0 : static_cast<double>(dropped) / pool.size();
    if (rep.dropped_fraction > 0.95) throw ValidateError("gap drops more than 95% of the data");

    // held-out points from an independent seed, inside the gap unless it has zero width
    SamplingParams tp = params;
    std::vector<InjectionSet> test;
    for (int round = 0; round < 50 && static_cast<int>(test.size()) < opts.n_test; ++round) {
        tp.seed = splitmix64(params.seed + 0x9e3779b97f4a7c15ULL * (round + 1));
        for (auto& p : convergent(c, sample_operating_points(c, tp, 4 * opts.n_test)))
            if ((zero_width || in_gap(p)) && static_cast<int>(test.size()) < opts.n_test) test.push_back(std::move(p));
    }
    if (test.empty()) throw ValidateError("no held-out samples inside the gap");

    const SampleSet ac = build_dataset(c, kept), dc = build_dc_dataset(c, kept);
    const SampleSet ac_test = build_dataset(c, test);
    rep.n_train = ac.rows();
    rep.n_test = ac_test.rows();

    const GpModel full = train(ac, opts.gp);
    const LinearSurrogate lin = fit_linear_surrogate(dc);
    const GpModel resid = train(residual_dataset(ac, lin), opts.gp);

    rep.rmse_full = regression_metrics(ac_test.Y, full.predict_mean_rows(ac_test.X)).rmse_avg;
    const MatrixXd hyb = lin.predict_rows(ac_test.X) + resid.predict_mean_rows(ac_test.X);
    rep.rmse_hybrid = regression_metrics(ac_test.Y, hyb).rmse_avg;
    return rep;
}

}  // namespace gpccopf
