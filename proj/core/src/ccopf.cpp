#include "gpccopf/ccopf.hpp"

#include "json_util.hpp"

#include <boost/math/distributions/normal.hpp>

#include <chrono>
#include <cmath>
#include <memory>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void UncertaintySpec::validate() const {
    for (double e : {eps_pg, eps_q, eps_v, eps_s})
        if (!(e > 0 && e < 0.5)) throw CcOpfError("violation probability must lie in (0, 0.5)");
    if ((sigma_l.size() && sigma_l.minCoeff() < 0) || (sigma_rs.size() && sigma_rs.minCoeff() < 0))
        throw CcOpfError("negative standard deviation");
}

Forecast reference_forecast(const GridCase& c) {
    Forecast f;
    f.p_l.resize(c.loads.size());
    f.p_rs.resize(c.res_units.size());
    for (size_t i = 0; i < c.loads.size(); ++i) f.p_l[i] = c.loads[i].p_ref;
    for (size_t i = 0; i < c.res_units.size(); ++i) f.p_rs[i] = c.res_units[i].p_ref;
    return f;
}

UncertaintySpec default_uncertainty(const Forecast& f, double load_frac, double res_frac) {
    UncertaintySpec u;
    u.sigma_l = load_frac * f.p_l.cwiseAbs();
    u.sigma_rs = res_frac * f.p_rs.cwiseAbs();
    return u;
}

double quantile(double eps) {
    if (!(eps > 0 && eps < 1)) throw CcOpfError("quantile: eps must lie in (0, 1)");
    return boost::math::quantile(boost::math::complement(boost::math::normal(), eps));
}

MatrixXd input_covariance(const VectorXd& alpha_gen, const VectorXd& sign, const VectorXd& sigma) {
    const int ng = static_cast<int>(alpha_gen.size()), nw = static_cast<int>(sigma.size());
    MatrixXd M = MatrixXd::Zero(ng + nw, nw);
    M.topRows(ng) = alpha_gen * sign.transpose();
    M.bottomRows(nw).setIdentity();
    return M * sigma.cwiseAbs2().asDiagonal() * M.transpose();
}

namespace {

VectorXd fluctuation_sign(const GridCase& c) {
    VectorXd s(c.loads.size() + c.res_units.size());
    s.head(c.loads.size()).setOnes();
    s.tail(c.res_units.size()).setConstant(-1.0);
    return s;
}

VectorXd fluctuation_sigma(const UncertaintySpec& u) {
    VectorXd s(u.sigma_l.size() + u.sigma_rs.size());
    s << u.sigma_l, u.sigma_rs;
    return s;
}

VectorXd ctrl_alpha(const GridCase& c, const VectorXd& alpha) {
    const auto& ctrl = c.controllable_gens();
    VectorXd a(ctrl.size());
    for (size_t i = 0; i < ctrl.size(); ++i) a[i] = alpha[ctrl[i]];
    return a;
}

}  // namespace

MatrixXd input_covariance(const GridCase& c, const VectorXd& alpha, const UncertaintySpec& u) {
    if (u.sigma_l.size() != static_cast<int>(c.loads.size()) || u.sigma_rs.size() != static_cast<int>(c.res_units.size()))
        throw CcOpfError("uncertainty spec does not match the case");
    return input_covariance(ctrl_alpha(c, alpha), fluctuation_sign(c), fluctuation_sigma(u));
}

Band reformulate_margins(const Band& b, const VectorXd& sigma2, const VectorXd& r, const std::vector<std::string>& names) {
    Band out;
    const VectorXd m = r.cwiseProduct(sigma2.cwiseMax(0.0).cwiseSqrt());
    out.lo = b.lo + m;
    out.hi = b.hi - m;
    for (int i = 0; i < out.lo.size(); ++i)
        if (out.lo[i] > out.hi[i])
            throw CcOpfError("margin exceeds feasible band for " + (i < static_cast<int>(names.size()) ? names[i] : std::to_string(i)));
    return out;
}

Band generator_margins(const GridCase& c, const VectorXd& alpha, double trace, double r_pg) {
    Band out;
    const int ng = c.n_gen();
    out.lo.resize(ng);
    out.hi.resize(ng);
    for (int g = 0; g < ng; ++g) {
        const double m = r_pg * alpha[g] * std::sqrt(trace);
        out.lo[g] = c.gens[g].p_min + m;
        out.hi[g] = c.gens[g].p_max - m;
        if (out.lo[g] > out.hi[g]) throw CcOpfError("margin exceeds feasible band for pg_" + std::to_string(c.gens[g].bus));
    }
    return out;
}

Band output_bounds(const GridCase& c, const std::vector<std::string>& schema) {
    if (schema != output_schema(c)) throw CcOpfError("output schema does not match the case");
    Band b;
    const int ny = static_cast<int>(schema.size());
    b.lo.resize(ny);
    b.hi.resize(ny);
    std::vector<char> has_gen(c.m(), 0);
    for (const Gen& g : c.gens) has_gen[c.index_of(g.bus)] = 1;
    int j = 0;
    for (int k = 0; k < c.m(); ++k)
        if (!has_gen[k]) {
            b.lo[j] = c.buses[k].v_min;
            b.hi[j++] = c.buses[k].v_max;
        }
    for (const Gen& g : c.gens) {
        b.lo[j] = g.q_min;
        b.hi[j++] = g.q_max;
    }
    for (const Branch& br : c.branches) {
        b.lo[j] = -br.s_max;
        b.hi[j++] = br.s_max;
    }
    return b;
}

VectorXd output_quantiles(const std::vector<std::string>& schema, const UncertaintySpec& u) {
    VectorXd r(schema.size());
    for (size_t j = 0; j < schema.size(); ++j) {
        const std::string& n = schema[j];
        double eps = u.eps_s;
        if (n.rfind("v_", 0) == 0) eps = u.eps_v;
        else if (n.rfind("qg_", 0) == 0) eps = u.eps_q;
        r[j] = quantile(eps);
    }
    return r;
}

double ccopf_cost(const GridCase& c, const VectorXd& p_g, const VectorXd& alpha, double trace) {
    double f = 0;
    for (int g = 0; g < c.n_gen(); ++g) {
        const Gen& G = c.gens[g];
        f += G.c2 * (p_g[g] * p_g[g] + trace * alpha[g] * alpha[g]) + G.c1 * p_g[g] + G.c0;
    }
    return f;
}

Surrogate full_surrogate(const GpModel& m, Propagation method) {
    Surrogate s;
    s.input_schema = m.input_schema;
    s.output_schema = m.output_schema;
    s.gp = m.posteriors();
    s.method = method;
    return s;
}

Surrogate full_surrogate(const SparseGpModel& m, Propagation method) {
    if (method != Propagation::TA1) throw CcOpfError("sparse models propagate with ta1 only");
    Surrogate s;
    s.input_schema = m.input_schema;
    s.output_schema = m.output_schema;
    s.gp = m.posteriors();
    s.method = method;
    return s;
}

Surrogate hybrid_surrogate(const LinearSurrogate& lin, const GpModel& resid) {
    if (lin.output_schema != resid.output_schema || lin.input_schema != resid.input_schema)
        throw CcOpfError("residual model schema does not match the linear surrogate");
    Surrogate s = full_surrogate(resid, Propagation::TA1);
    s.lin = lin;
    return s;
}

Surrogate hybrid_surrogate(const LinearSurrogate& lin, const SparseGpModel& resid) {
    if (lin.output_schema != resid.output_schema || lin.input_schema != resid.input_schema)
        throw CcOpfError("residual model schema does not match the linear surrogate");
    Surrogate s;
    s.input_schema = resid.input_schema;
    s.output_schema = resid.output_schema;
    s.gp = resid.posteriors();
    s.lin = lin;
    s.method = Propagation::TA1;
    return s;
}

GaussianOutput surrogate_moments(const Surrogate& s, const VectorXd& mu_x, const MatrixXd& cov_x) {
    GaussianInput gin{mu_x, cov_x};
    if (!s.lin) return propagate(s.gp, gin, s.method);
    GaussianOutput out = propagate(s.gp, gin, Propagation::TA1);
    out.mean += s.lin->predict(mu_x);
    out.var += (s.lin->A * cov_x * s.lin->A.transpose()).diagonal();
    return out;
}

namespace {

constexpr double kSdFloor = 1e-14;

// Immutable data captured by the solver callbacks.
struct Context {
    GridCase grid;
    Surrogate model;
    Forecast f;
    double trace = 0;
    VectorXd sign, sigma2;  // per fluctuation
    std::vector<int> ctrl;
    Band out_bounds;
    VectorXd r_out;
    double r_pg = 0;
    double scale = 1e-3;

    int ng() const { return grid.n_gen(); }
    int ny() const { return static_cast<int>(model.output_schema.size()); }

    VectorXd mu_x(const VectorXd& p_g) const {
        VectorXd x(ctrl.size() + f.p_l.size() + f.p_rs.size());
        for (size_t i = 0; i < ctrl.size(); ++i) x[i] = p_g[ctrl[i]];
        x.segment(ctrl.size(), f.p_l.size()) = f.p_l;
        x.tail(f.p_rs.size()) = f.p_rs;
        return x;
    }
    VectorXd alpha_x(const VectorXd& alpha) const {
        VectorXd a(ctrl.size());
        for (size_t i = 0; i < ctrl.size(); ++i) a[i] = alpha[ctrl[i]];
        return a;
    }
    MatrixXd cov_x(const VectorXd& alpha) const {
        return input_covariance(alpha_x(alpha), sign, sigma2.cwiseSqrt());
    }
};

struct Moments {
    VectorXd mu, var;
    MatrixXd dmu, dvar;  // n_y x 2 n_gen
};

// Adds g^T Sigma_x g and its derivatives for a gradient g over the inputs.
// With a = M^T g = s (alpha^T g_pg) + g_w:  g^T Sigma_x g = sum sigma_i^2 a_i^2.
void add_quadratic(const Context& C, const VectorXd& g, const VectorXd& alpha_c, double& var, VectorXd* dvar_alpha) {
    const int nc = static_cast<int>(C.ctrl.size());
    const VectorXd a = C.sign * alpha_c.dot(g.head(nc)) + g.tail(C.sign.size());
    const VectorXd sa = C.sigma2.cwiseProduct(a);
    var += a.dot(sa);
    if (dvar_alpha) *dvar_alpha += 2.0 * g.head(nc) * C.sign.dot(sa);
}

Moments ta1_moments(const Context& C, const VectorXd& x) {
    const int ng = C.ng(), ny = C.ny(), nc = static_cast<int>(C.ctrl.size());
    const VectorXd p_g = x.head(ng), alpha = x.tail(ng);
    const VectorXd mx = C.mu_x(p_g), ac = C.alpha_x(alpha);
    const MatrixXd Sx = C.cov_x(alpha);
    Moments m;
    m.mu.resize(ny);
    m.var.resize(ny);
    m.dmu = MatrixXd::Zero(ny, 2 * ng);
    m.dvar = MatrixXd::Zero(ny, 2 * ng);
    for (int j = 0; j < ny; ++j) {
        const PosteriorDerivs d = posterior_derivs(C.model.gp[j], mx, true);
        double mu = d.mu, var = d.var;
        VectorXd dmu_x = d.dmu;
        VectorXd dvar_x = d.dvar + 2.0 * d.hmu * (Sx * d.dmu);
        VectorXd dvar_a = VectorXd::Zero(nc);
        add_quadratic(C, d.dmu, ac, var, &dvar_a);
        if (C.model.lin) {
            const VectorXd arow = C.model.lin->A.row(j).transpose();
            mu += arow.dot(mx) + C.model.lin->b[j];
            dmu_x += arow;
            add_quadratic(C, arow, ac, var, &dvar_a);
        }
        m.mu[j] = mu;
        m.var[j] = var;
        for (int i = 0; i < nc; ++i) {
            m.dmu(j, C.ctrl[i]) = dmu_x[i];
            m.dvar(j, C.ctrl[i]) = dvar_x[i];
            m.dvar(j, ng + C.ctrl[i]) = dvar_a[i];
        }
    }
    return m;
}

void plain_moments(const Context& C, const VectorXd& x, VectorXd& mu, VectorXd& var) {
    const int ng = C.ng();
    GaussianOutput o = surrogate_moments(C.model, C.mu_x(x.head(ng)), C.cov_x(x.tail(ng)));
    mu = o.mean;
    var = o.var;
}

// Five-point stencil with a wide step: the surrogate's mean carries rounding noise of
// order |weights| * eps, which a narrow central difference would amplify.
Moments fd_moments(const Context& C, const VectorXd& x) {
    Moments m;
    plain_moments(C, x, m.mu, m.var);
    const int n = static_cast<int>(x.size()), ny = C.ny();
    m.dmu.resize(ny, n);
    m.dvar.resize(ny, n);
    VectorXd z = x, mu, var;
    for (int k = 0; k < n; ++k) {
        const double h = 1e-3 * std::max(1.0, std::abs(x[k]));
        VectorXd dm = VectorXd::Zero(ny), dv = VectorXd::Zero(ny);
        for (const auto [t, w] : {std::pair{-2.0, 1.0}, {-1.0, -8.0}, {1.0, 8.0}, {2.0, -1.0}}) {
            z[k] = x[k] + t * h;
            plain_moments(C, z, mu, var);
            dm += w * mu;
            dv += w * var;
        }
        z[k] = x[k];
        m.dmu.col(k) = dm / (12 * h);
        m.dvar.col(k) = dv / (12 * h);
    }
    return m;
}

Moments moments(const Context& C, const VectorXd& x) {
    return C.model.method == Propagation::TA1 || C.model.lin ? ta1_moments(C, x) : fd_moments(C, x);
}

}  // namespace

VectorXd CcOpfProblem::input_mean(const VectorXd& p_g) const {
    const auto& ctrl = grid.controllable_gens();
    VectorXd x(ctrl.size() + forecast.p_l.size() + forecast.p_rs.size());
    for (size_t i = 0; i < ctrl.size(); ++i) x[i] = p_g[ctrl[i]];
    x.segment(ctrl.size(), forecast.p_l.size()) = forecast.p_l;
    x.tail(forecast.p_rs.size()) = forecast.p_rs;
    return x;
}

CcOpfProblem build_problem(const GridCase& c, Surrogate model, const Forecast& f, const UncertaintySpec& u) {
    u.validate();
    if (model.input_schema != input_schema(c)) throw CcOpfError("model input schema does not match the case");
    if (model.gp.size() != model.output_schema.size()) throw CcOpfError("model output count mismatch");
    if (f.p_l.size() != static_cast<int>(c.loads.size()) || f.p_rs.size() != static_cast<int>(c.res_units.size()))
        throw CcOpfError("forecast does not match the case");

    auto C = std::make_shared<Context>();
    C->grid = c;
    C->model = model;
    C->f = f;
    C->trace = u.trace();
    C->sign = fluctuation_sign(c);
    C->sigma2 = fluctuation_sigma(u).cwiseAbs2();
    if (C->sign.size() != C->sigma2.size()) throw CcOpfError("uncertainty spec does not match the case");
    C->ctrl = c.controllable_gens();
    C->out_bounds = output_bounds(c, model.output_schema);
    C->r_out = output_quantiles(model.output_schema, u);
    C->r_pg = quantile(u.eps_pg);

    const int ng = c.n_gen(), ny = C->ny();
    NlpProblem nlp;
    nlp.n = 2 * ng;
    nlp.m_eq = 2;
    nlp.m_in = 2 * ny + 3 * ng;
    nlp.objective = [C](const VectorXd& x, double& f, VectorXd& g) {
        const int ng = C->ng();
        f = C->scale * ccopf_cost(C->grid, x.head(ng), x.tail(ng), C->trace);
        g.resize(2 * ng);
        for (int i = 0; i < ng; ++i) {
            const Gen& G = C->grid.gens[i];
            g[i] = C->scale * (2 * G.c2 * x[i] + G.c1);
            g[ng + i] = C->scale * 2 * G.c2 * C->trace * x[ng + i];
        }
    };
    nlp.eq = [C](const VectorXd& x, VectorXd& c, MatrixXd& J) {
        const int ng = C->ng();
        c.resize(2);
        J = MatrixXd::Zero(2, 2 * ng);
        c[0] = x.tail(ng).sum() - 1.0;
        c[1] = x.head(ng).sum() - (C->f.p_l.sum() - C->f.p_rs.sum());
        J.block(0, ng, 1, ng).setOnes();
        J.block(1, 0, 1, ng).setOnes();
    };
    nlp.ineq = [C](const VectorXd& x, VectorXd& c, MatrixXd& J) {
        const int ng = C->ng(), ny = C->ny(), n = 2 * ng;
        const Moments m = moments(*C, x);
        c.resize(2 * ny + 3 * ng);
        J = MatrixXd::Zero(c.size(), n);
        for (int j = 0; j < ny; ++j) {
            const double sd = std::sqrt(std::max(m.var[j], 0.0) + kSdFloor);
            const double r = C->r_out[j];
            const Eigen::RowVectorXd dsd = m.dvar.row(j) / (2 * sd);
            c[j] = C->out_bounds.hi[j] - m.mu[j] - r * sd;
            J.row(j) = -m.dmu.row(j) - r * dsd;
            c[ny + j] = m.mu[j] - r * sd - C->out_bounds.lo[j];
            J.row(ny + j) = m.dmu.row(j) - r * dsd;
        }
        const double st = std::sqrt(C->trace);
        for (int g = 0; g < ng; ++g) {
            const Gen& G = C->grid.gens[g];
            const double m_g = C->r_pg * st;
            c[2 * ny + g] = G.p_max - x[g] - m_g * x[ng + g];
            J(2 * ny + g, g) = -1;
            J(2 * ny + g, ng + g) = -m_g;
            c[2 * ny + ng + g] = x[g] - G.p_min - m_g * x[ng + g];
            J(2 * ny + ng + g, g) = 1;
            J(2 * ny + ng + g, ng + g) = -m_g;
            c[2 * ny + 2 * ng + g] = x[ng + g];
            J(2 * ny + 2 * ng + g, ng + g) = 1;
        }
    };
    const NlpProblem base = nlp;
    nlp.hessian = [base](const VectorXd& x, const VectorXd& r, const VectorXd& q) {
        return fd_lagrangian_hessian(base, x, r, q, 1e-5);
    };

    CcOpfProblem p;
    p.nlp = std::move(nlp);
    p.grid = c;
    p.model = std::move(model);
    p.forecast = f;
    p.uncertainty = u;
    p.r_out = C->r_out;
    p.r_pg = C->r_pg;
    p.cost_scale = C->scale;
    return p;
}

CcOpfProblem build_full_problem(const GridCase& c, const GpModel& model, const Forecast& f, const UncertaintySpec& u,
                                Propagation method) {
    return build_problem(c, full_surrogate(model, method), f, u);
}

CcOpfProblem build_hybrid_problem(const GridCase& c, const LinearSurrogate& lin, const GpModel& resid,
                                  const Forecast& f, const UncertaintySpec& u) {
    return build_problem(c, hybrid_surrogate(lin, resid), f, u);
}

CcOpfProblem build_hybrid_problem(const GridCase& c, const LinearSurrogate& lin, const SparseGpModel& resid,
                                  const Forecast& f, const UncertaintySpec& u) {
    return build_problem(c, hybrid_surrogate(lin, resid), f, u);
}

VectorXd default_start(const CcOpfProblem& p) {
    const int ng = p.n_gen();
    VectorXd x(2 * ng);
    x.head(ng) = economic_dispatch(p.grid, p.forecast.p_l.sum() - p.forecast.p_rs.sum());
    x.tail(ng).setConstant(1.0 / ng);
    return x;
}

CcOpfSolution solve_cc_opf(const CcOpfProblem& p, const VectorXd& x0, const NlpOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    const NlpSolution ns = solve(p.nlp, x0, opts);
    const auto t1 = std::chrono::steady_clock::now();

    const int ng = p.n_gen();
    CcOpfSolution s;
    s.p_g = ns.x.head(ng);
    s.alpha = ns.x.tail(ng);
    s.status = ns.status;
    s.kkt_residual = ns.kkt_residual;
    s.iterations = ns.iterations;
    s.solve_time = std::chrono::duration<double>(t1 - t0).count();
    s.output_schema = p.model.output_schema;
    const double tr = p.uncertainty.trace();
    s.cost = ccopf_cost(p.grid, s.p_g, s.alpha, tr);
    const GaussianOutput o =
        surrogate_moments(p.model, p.input_mean(s.p_g), input_covariance(p.grid, s.alpha, p.uncertainty));
    s.mu = o.mean;
    s.sigma2 = o.var;
    s.lambda_out = p.r_out.cwiseProduct(o.var.cwiseMax(0.0).cwiseSqrt());
    s.lambda_pg = p.r_pg * std::sqrt(tr) * s.alpha.cwiseMax(0.0);
    return s;
}

CcOpfSolution solve_cc_opf(const CcOpfProblem& p, const NlpOptions& opts) {
    return solve_cc_opf(p, default_start(p), opts);
}

std::string solution_to_json(const CcOpfSolution& s, bool canonical) {
    using detail::json;
    using detail::vec;
    json j;
    j["format"] = "gpccopf-solution-v1";
    j["p_g"] = vec(s.p_g);
    j["alpha"] = vec(s.alpha);
    j["cost"] = s.cost;
    j["status"] = to_string(s.status);
    j["kkt_residual"] = s.kkt_residual;
    j["iterations"] = s.iterations;
    j["output_schema"] = s.output_schema;
    j["margins"] = {{"lambda_out", vec(s.lambda_out)}, {"lambda_pg", vec(s.lambda_pg)}};
    j["moments"] = {{"mu", vec(s.mu)}, {"sigma2", vec(s.sigma2)}};
    if (!canonical) j["timing_s"] = s.solve_time;
    return j.dump(2);
}

CcOpfSolution solution_from_json(const std::string& text) {
    using detail::json;
    using detail::vec;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw CcOpfError(std::string("solution: ") + e.what());
    }
    if (j.value("format", "") != "gpccopf-solution-v1") throw CcOpfError("solution: unknown format");
    CcOpfSolution s;
    s.p_g = vec(j.at("p_g"));
    s.alpha = vec(j.at("alpha"));
    s.cost = j.at("cost").get<double>();
    const std::string st = j.at("status").get<std::string>();
    for (NlpStatus k : {NlpStatus::Optimal, NlpStatus::MaxIter, NlpStatus::Infeasible, NlpStatus::NumericFailure})
        if (st == to_string(k)) s.status = k;
    s.kkt_residual = j.value("kkt_residual", 0.0);
    s.iterations = j.value("iterations", 0);
    s.output_schema = j.at("output_schema").get<std::vector<std::string>>();
    s.lambda_out = vec(j.at("margins").at("lambda_out"));
    s.lambda_pg = vec(j.at("margins").at("lambda_pg"));
    s.mu = vec(j.at("moments").at("mu"));
    s.sigma2 = vec(j.at("moments").at("sigma2"));
    s.solve_time = j.value("timing_s", 0.0);
    return s;
}

}  // namespace gpccopf
