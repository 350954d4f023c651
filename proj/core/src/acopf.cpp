#include "gpccopf/ccopf.hpp"
#include "gpccopf/powerflow.hpp"

#include <cmath>
#include <memory>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd economic_dispatch(const GridCase& c, double demand) {
    const int ng = c.n_gen();
    double pmin = 0, pmax = 0;
    for (const Gen& g : c.gens) {
        pmin += g.p_min;
        pmax += g.p_max;
    }
    if (demand < pmin - 1e-12 || demand > pmax + 1e-12) throw CcOpfError("demand outside generation capacity");
    auto dispatch = [&](double lam) {
        VectorXd p(ng);
        for (int i = 0; i < ng; ++i) {
            const Gen& g = c.gens[i];
            p[i] = std::clamp((lam - g.c1) / (2 * std::max(g.c2, 1e-12)), g.p_min, g.p_max);
        }
        return p;
    };
    double lo = -1e12, hi = 1e12;
    for (int it = 0; it < 300; ++it) {
        const double mid = 0.5 * (lo + hi);
        (dispatch(mid).sum() < demand ? lo : hi) = mid;
    }
    return dispatch(0.5 * (lo + hi));
}

namespace {

// Decision vector [theta (non-slack), v, p_g, q_g].
struct AcContext {
    GridCase grid;
    MatrixXd G, B;
    VectorXd p_fixed, q_fixed;
    std::vector<int> th;  // bus -> theta position or -1
    int nth = 0;
    double scale = 1e-3;

    int m() const { return grid.m(); }
    int ng() const { return grid.n_gen(); }
    int n() const { return nth + m() + 2 * ng(); }
    int iv(int k) const { return nth + k; }
    int ip(int g) const { return nth + m() + g; }
    int iq(int g) const { return nth + m() + ng() + g; }

    void unpack(const VectorXd& x, VectorXd& v, VectorXd& theta) const {
        theta = VectorXd::Zero(m());
        for (int k = 0; k < m(); ++k)
            if (th[k] >= 0) theta[k] = x[th[k]];
        v = x.segment(nth, m());
    }
};

}  // namespace

AcOpfProblem build_acopf_problem(const GridCase& c, const Forecast& f) {
    auto C = std::make_shared<AcContext>();
    C->grid = c;
    const Eigen::MatrixXcd Y = admittance_matrix(c);
    C->G = Y.real();
    C->B = Y.imag();
    InjectionSet inj;
    inj.p_g = VectorXd::Zero(c.n_gen());
    inj.p_l = f.p_l;
    inj.p_rs = f.p_rs;
    inj.q_l.resize(c.loads.size());
    inj.q_rs.resize(c.res_units.size());
    for (size_t i = 0; i < c.loads.size(); ++i) inj.q_l[i] = c.loads[i].gamma * f.p_l[i];
    for (size_t i = 0; i < c.res_units.size(); ++i) inj.q_rs[i] = c.res_units[i].gamma * f.p_rs[i];
    C->p_fixed = bus_p_spec(c, inj);
    C->q_fixed = bus_q_spec(c, inj);
    C->th.assign(c.m(), -1);
    for (int k = 0; k < c.m(); ++k)
        if (k != c.slack_index()) C->th[k] = C->nth++;

    const int m = c.m(), ng = c.n_gen(), nb = static_cast<int>(c.branches.size()), n = C->n();
    NlpProblem nlp;
    nlp.n = n;
    nlp.m_eq = 2 * m;
    nlp.m_in = 2 * m + 4 * ng + nb;
    nlp.objective = [C](const VectorXd& x, double& f, VectorXd& g) {
        f = 0;
        g = VectorXd::Zero(x.size());
        for (int i = 0; i < C->ng(); ++i) {
            const Gen& G = C->grid.gens[i];
            const double p = x[C->ip(i)];
            f += C->scale * (G.c2 * p * p + G.c1 * p + G.c0);
            g[C->ip(i)] = C->scale * (2 * G.c2 * p + G.c1);
        }
    };
    nlp.eq = [C](const VectorXd& x, VectorXd& c, MatrixXd& J) {
        const int m = C->m(), n = C->n();
        VectorXd v, th;
        C->unpack(x, v, th);
        VectorXd P = VectorXd::Zero(m), Q = VectorXd::Zero(m);
        MatrixXd dPth = MatrixXd::Zero(m, m), dQth = MatrixXd::Zero(m, m), dPv = MatrixXd::Zero(m, m),
                 dQv = MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < m; ++k) {
                const double G = C->G(i, k), B = C->B(i, k);
                if (G == 0 && B == 0) continue;
                const double d = th[i] - th[k], cs = std::cos(d), sn = std::sin(d);
                const double a = G * cs + B * sn, b = G * sn - B * cs;
                P[i] += v[i] * v[k] * a;
                Q[i] += v[i] * v[k] * b;
                if (k != i) {
                    dPth(i, k) = v[i] * v[k] * b;
                    dQth(i, k) = -v[i] * v[k] * a;
                    dPv(i, k) = v[i] * a;
                    dQv(i, k) = v[i] * b;
                }
            }
        for (int i = 0; i < m; ++i) {
            dPth(i, i) = -Q[i] - C->B(i, i) * v[i] * v[i];
            dQth(i, i) = P[i] - C->G(i, i) * v[i] * v[i];
            dPv(i, i) = P[i] / v[i] + C->G(i, i) * v[i];
            dQv(i, i) = Q[i] / v[i] - C->B(i, i) * v[i];
        }
        c.resize(2 * m);
        c.head(m) = P - C->p_fixed;
        c.tail(m) = Q - C->q_fixed;
        J = MatrixXd::Zero(2 * m, n);
        for (int k = 0; k < m; ++k) {
            if (C->th[k] >= 0) {
                J.col(C->th[k]).head(m) = dPth.col(k);
                J.col(C->th[k]).tail(m) = dQth.col(k);
            }
            J.col(C->iv(k)).head(m) = dPv.col(k);
            J.col(C->iv(k)).tail(m) = dQv.col(k);
        }
        for (int g = 0; g < C->ng(); ++g) {
            const int k = C->grid.index_of(C->grid.gens[g].bus);
            c[k] -= x[C->ip(g)];
            c[m + k] -= x[C->iq(g)];
            J(k, C->ip(g)) = -1;
            J(m + k, C->iq(g)) = -1;
        }
    };
    nlp.ineq = [C](const VectorXd& x, VectorXd& c, MatrixXd& J) {
        const int m = C->m(), ng = C->ng(), n = C->n();
        const auto& br = C->grid.branches;
        const int nb = static_cast<int>(br.size());
        VectorXd v, th;
        C->unpack(x, v, th);
        c.resize(2 * m + 4 * ng + nb);
        J = MatrixXd::Zero(c.size(), n);
        int row = 0;
        for (int k = 0; k < m; ++k) {
            c[row] = v[k] - C->grid.buses[k].v_min;
            J(row++, C->iv(k)) = 1;
            c[row] = C->grid.buses[k].v_max - v[k];
            J(row++, C->iv(k)) = -1;
        }
        for (int g = 0; g < ng; ++g) {
            const Gen& G = C->grid.gens[g];
            c[row] = x[C->ip(g)] - G.p_min;
            J(row++, C->ip(g)) = 1;
            c[row] = G.p_max - x[C->ip(g)];
            J(row++, C->ip(g)) = -1;
            c[row] = x[C->iq(g)] - G.q_min;
            J(row++, C->iq(g)) = 1;
            c[row] = G.q_max - x[C->iq(g)];
            J(row++, C->iq(g)) = -1;
        }
        for (int b = 0; b < nb; ++b, ++row) {
            const int k = C->grid.index_of(br[b].from), j = C->grid.index_of(br[b].to);
            const std::complex<double> y = branch_admittance(br[b]);
            const double G = y.real(), B = y.imag();
            const double d = th[k] - th[j], cs = std::cos(d), sn = std::sin(d);
            const double a = G * cs + B * sn, bb = G * sn - B * cs;
            const double p = G * v[k] * v[k] - v[k] * v[j] * a;
            const double q = -B * v[k] * v[k] - v[k] * v[j] * bb;
            const double dp_vk = 2 * G * v[k] - v[j] * a, dp_vj = -v[k] * a, dp_d = v[k] * v[j] * bb;
            const double dq_vk = -2 * B * v[k] - v[j] * bb, dq_vj = -v[k] * bb, dq_d = -v[k] * v[j] * a;
            c[row] = br[b].s_max * br[b].s_max - p * p - q * q;
            J(row, C->iv(k)) += -2 * (p * dp_vk + q * dq_vk);
            J(row, C->iv(j)) += -2 * (p * dp_vj + q * dq_vj);
            const double dd = -2 * (p * dp_d + q * dq_d);
            if (C->th[k] >= 0) J(row, C->th[k]) += dd;
            if (C->th[j] >= 0) J(row, C->th[j]) -= dd;
        }
    };
    const NlpProblem base = nlp;
    nlp.hessian = [base](const VectorXd& x, const VectorXd& r, const VectorXd& q) {
        return fd_lagrangian_hessian(base, x, r, q, 1e-6);
    };

    // warm start from the power flow at the lossless dispatch
    VectorXd x0 = VectorXd::Zero(n);
    inj.p_g = economic_dispatch(c, f.p_l.sum() - f.p_rs.sum());
    try {
        const PfSolution pf = solve_ac_pf(c, inj);
        for (int k = 0; k < m; ++k) {
            if (C->th[k] >= 0) x0[C->th[k]] = pf.theta[k];
            x0[C->iv(k)] = pf.v[k];
        }
        x0.segment(C->ip(0), ng) = gen_p(c, inj, pf);
        x0.segment(C->iq(0), ng) = gen_q(c, inj, pf);
    } catch (const PfError&) {
        x0.segment(C->nth, m) = bus_v_set(c);
        x0.segment(C->ip(0), ng) = inj.p_g;
    }

    AcOpfProblem prob;
    prob.nlp = std::move(nlp);
    prob.x0 = x0;
    prob.unpack = [C](const NlpSolution& ns) {
        AcOpfResult res;
        C->unpack(ns.x, res.v, res.theta);
        res.p_g = ns.x.segment(C->ip(0), C->ng());
        res.q_g = ns.x.segment(C->iq(0), C->ng());
        res.cost = ns.f / C->scale;
        res.status = ns.status;
        res.kkt_residual = ns.kkt_residual;
        return res;
    };
    return prob;
}

AcOpfResult solve_deterministic_acopf(const GridCase& c, const Forecast& f, const NlpOptions& opts) {
    const AcOpfProblem p = build_acopf_problem(c, f);
    return p.unpack(solve(p.nlp, p.x0, opts));
}

}  // namespace gpccopf
