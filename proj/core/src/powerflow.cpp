#include "gpccopf/powerflow.hpp"

#include <cmath>

namespace gpccopf {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

InjectionSet reference_injections(const GridCase& c) {
    InjectionSet inj;
    inj.p_g.resize(c.n_gen());
    for (int g = 0; g < c.n_gen(); ++g) inj.p_g[g] = c.gens[g].p_ref;
    auto fill = [](const std::vector<Injector>& src, VectorXd& p, VectorXd& q) {
        p.resize(src.size());
        q.resize(src.size());
        for (size_t i = 0; i < src.size(); ++i) {
            p[i] = src[i].p_ref;
            q[i] = src[i].gamma * src[i].p_ref;
        }
    };
    fill(c.loads, inj.p_l, inj.q_l);
    fill(c.res_units, inj.p_rs, inj.q_rs);
    return inj;
}

VectorXd bus_p_spec(const GridCase& c, const InjectionSet& inj) {
    VectorXd p = VectorXd::Zero(c.m());
    for (int g = 0; g < c.n_gen(); ++g) p[c.index_of(c.gens[g].bus)] += inj.p_g[g];
    for (size_t i = 0; i < c.loads.size(); ++i) p[c.index_of(c.loads[i].bus)] -= inj.p_l[i];
    for (size_t i = 0; i < c.res_units.size(); ++i) p[c.index_of(c.res_units[i].bus)] += inj.p_rs[i];
    return p;
}

VectorXd bus_q_spec(const GridCase& c, const InjectionSet& inj) {
    VectorXd q = VectorXd::Zero(c.m());
    for (size_t i = 0; i < c.loads.size(); ++i) q[c.index_of(c.loads[i].bus)] -= inj.q_l[i];
    for (size_t i = 0; i < c.res_units.size(); ++i) q[c.index_of(c.res_units[i].bus)] += inj.q_rs[i];
    return q;
}

VectorXd bus_v_set(const GridCase& c) {
    VectorXd v = VectorXd::Ones(c.m());
    std::vector<char> set(c.m(), 0);
    for (const Gen& g : c.gens) {
        int k = c.index_of(g.bus);
        if (c.buses[k].kind != BusKind::PQ && !set[k]) {
            v[k] = g.v_set;
            set[k] = 1;
        }
    }
    return v;
}

void bus_injections(const MatrixXcd& Y, const VectorXd& v, const VectorXd& theta, VectorXd& p, VectorXd& q) {
    const int m = static_cast<int>(v.size());
    VectorXcd V(m);
    for (int k = 0; k < m; ++k) V[k] = std::polar(v[k], theta[k]);
    VectorXcd S = V.cwiseProduct((Y * V).conjugate());
    p = S.real();
    q = S.imag();
}

PfEquations::PfEquations(const GridCase& c, const InjectionSet& inj)
    : c_(c), Y_(admittance_matrix(c)), p_spec_(bus_p_spec(c, inj)), q_spec_(bus_q_spec(c, inj)), v_set_(bus_v_set(c)) {
    for (int k = 0; k < c.m(); ++k) {
        if (c.buses[k].kind != BusKind::Slack) theta_idx_.push_back(k);
        if (c.buses[k].kind == BusKind::PQ) v_idx_.push_back(k);
    }
}

VectorXd PfEquations::initial() const {
    VectorXd x = VectorXd::Zero(size());
    for (size_t i = 0; i < v_idx_.size(); ++i) x[theta_idx_.size() + i] = 1.0;
    return x;
}

void PfEquations::unpack(const VectorXd& x, VectorXd& v, VectorXd& theta) const {
    v = v_set_;
    theta = VectorXd::Zero(c_.m());
    for (size_t i = 0; i < theta_idx_.size(); ++i) theta[theta_idx_[i]] = x[i];
    for (size_t i = 0; i < v_idx_.size(); ++i) v[v_idx_[i]] = x[theta_idx_.size() + i];
}

VectorXd PfEquations::mismatch(const VectorXd& x) const {
    VectorXd v, th, p, q;
    unpack(x, v, th);
    bus_injections(Y_, v, th, p, q);
    VectorXd F(size());
    const size_t nt = theta_idx_.size();
    for (size_t i = 0; i < nt; ++i) F[i] = p[theta_idx_[i]] - p_spec_[theta_idx_[i]];
    for (size_t i = 0; i < v_idx_.size(); ++i) F[nt + i] = q[v_idx_[i]] - q_spec_[v_idx_[i]];
    return F;
}

MatrixXd PfEquations::jacobian(const VectorXd& x) const {
    VectorXd v, th;
    unpack(x, v, th);
    const int m = c_.m();
    VectorXcd V(m), E(m);
    for (int k = 0; k < m; ++k) {
        V[k] = std::polar(v[k], th[k]);
        E[k] = std::polar(1.0, th[k]);
    }
    const VectorXcd I = Y_ * V;
    // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V)),  dS/dv = diag(V) conj(Y diag(E)) + conj(diag(I)) diag(E)
    MatrixXcd dS_dth = -(Y_ * V.asDiagonal()).conjugate();
    dS_dth.diagonal() += I.conjugate();
    dS_dth = (std::complex<double>(0, 1) * V).asDiagonal() * dS_dth;
    MatrixXcd dS_dv = V.asDiagonal() * (Y_ * E.asDiagonal()).conjugate();
    dS_dv.diagonal() += I.conjugate().cwiseProduct(E);

    const int nt = static_cast<int>(theta_idx_.size()), nv = static_cast<int>(v_idx_.size());
    MatrixXd J(nt + nv, nt + nv);
    for (int r = 0; r < nt; ++r) {
        const int k = theta_idx_[r];
        for (int cidx = 0; cidx < nt; ++cidx) J(r, cidx) = dS_dth(k, theta_idx_[cidx]).real();
        for (int cidx = 0; cidx < nv; ++cidx) J(r, nt + cidx) = dS_dv(k, v_idx_[cidx]).real();
    }
    for (int r = 0; r < nv; ++r) {
        const int k = v_idx_[r];
        for (int cidx = 0; cidx < nt; ++cidx) J(nt + r, cidx) = dS_dth(k, theta_idx_[cidx]).imag();
        for (int cidx = 0; cidx < nv; ++cidx) J(nt + r, nt + cidx) = dS_dv(k, v_idx_[cidx]).imag();
    }
    return J;
}

PfSolution solve_ac_pf(const GridCase& c, const InjectionSet& inj, double tol, int max_iter) {
    PfEquations eq(c, inj);
    VectorXd x = eq.initial();
    VectorXd F = eq.mismatch(x);
    double err = F.size() ? F.cwiseAbs().maxCoeff() : 0.0;
    int it = 0;
    while (err > tol) {
        if (it >= max_iter)
            throw PfError(PfError::Kind::NonConvergence, "power flow did not converge, mismatch " + std::to_string(err), err);
        Eigen::PartialPivLU<MatrixXd> lu(eq.jacobian(x));
        const double rc = lu.rcond();
        if (!(rc > 1e-14)) throw PfError(PfError::Kind::SingularJacobian, "singular power-flow Jacobian", err);
        x -= lu.solve(F);
        F = eq.mismatch(x);
        err = F.cwiseAbs().maxCoeff();
        ++it;
        if (!std::isfinite(err)) throw PfError(PfError::Kind::NonConvergence, "power flow diverged", err);
    }

    PfSolution s;
    eq.unpack(x, s.v, s.theta);
    bus_injections(admittance_matrix(c), s.v, s.theta, s.p, s.q);
    s.flows = branch_flows(c, s.v, s.theta);
    s.iterations = it;
    s.max_mismatch = err;
    return s;
}

namespace {

MatrixXd reduced_susceptance(const GridCase& c) {
    const int m = c.m();
    MatrixXd B = MatrixXd::Zero(m, m);
    for (const Branch& br : c.branches) {
        const double b = 1.0 / br.x;
        const int k = c.index_of(br.from), j = c.index_of(br.to);
        B(k, k) += b;
        B(j, j) += b;
        B(k, j) -= b;
        B(j, k) -= b;
    }
    return B;
}

}  // namespace

VectorXd solve_dc_pf(const GridCase& c, const VectorXd& p) {
    const int m = c.m(), s = c.slack_index();
    if (std::abs(p.sum()) > 1e-9) throw PfError(PfError::Kind::Unbalanced, "DC injections do not balance");
    MatrixXd B = reduced_susceptance(c);
    std::vector<int> keep;
    for (int k = 0; k < m; ++k)
        if (k != s) keep.push_back(k);
    const int n = m - 1;
    MatrixXd Br(n, n);
    VectorXd pr(n);
    for (int a = 0; a < n; ++a) {
        pr[a] = p[keep[a]];
        for (int b = 0; b < n; ++b) Br(a, b) = B(keep[a], keep[b]);
    }
    VectorXd theta = VectorXd::Zero(m);
    if (n == 0) return theta;
    Eigen::FullPivLU<MatrixXd> lu(Br);
    if (!lu.isInvertible()) throw PfError(PfError::Kind::Singular, "singular reduced susceptance matrix");
    VectorXd tr = lu.solve(pr);
    for (int a = 0; a < n; ++a) theta[keep[a]] = tr[a];
    return theta;
}

VectorXd dc_branch_flows(const GridCase& c, const VectorXd& theta) {
    VectorXd f(c.branches.size());
    for (size_t b = 0; b < c.branches.size(); ++b) {
        const Branch& br = c.branches[b];
        f[b] = (theta[c.index_of(br.from)] - theta[c.index_of(br.to)]) / br.x;
    }
    return f;
}

std::vector<BranchFlow> branch_flows(const GridCase& c, const VectorXd& v, const VectorXd& theta) {
    std::vector<BranchFlow> out(c.branches.size());
    for (size_t b = 0; b < c.branches.size(); ++b) {
        const Branch& br = c.branches[b];
        const std::complex<double> y = branch_admittance(br);
        const int k = c.index_of(br.from), j = c.index_of(br.to);
        // G, B are the series conductance/susceptance of y = 1/(r + jx)
        const double G = y.real(), B = y.imag();
        const double d = theta[k] - theta[j];
        const double vk = v[k], vj = v[j];
        BranchFlow& f = out[b];
        f.p = G * vk * vk - vk * vj * (G * std::cos(d) + B * std::sin(d));
        f.q = -B * vk * vk - vk * vj * (G * std::sin(d) - B * std::cos(d));
        f.s = std::hypot(f.p, f.q);
    }
    return out;
}

VectorXd gen_p(const GridCase& c, const InjectionSet& inj, const PfSolution& s) {
    VectorXd pg = inj.p_g;
    const int sg = c.slack_gen();
    const int k = c.slack_index();
    const VectorXd spec = bus_p_spec(c, inj);
    // spec already contains the scheduled slack output; replace it by the solved one
    pg[sg] = inj.p_g[sg] + (s.p[k] - spec[k]);
    return pg;
}

VectorXd gen_q(const GridCase& c, const InjectionSet& inj, const PfSolution& s) {
    const VectorXd spec = bus_q_spec(c, inj);
    std::vector<int> count(c.m(), 0);
    for (const Gen& g : c.gens) ++count[c.index_of(g.bus)];
    VectorXd qg(c.n_gen());
    for (int g = 0; g < c.n_gen(); ++g) {
        const int k = c.index_of(c.gens[g].bus);
        qg[g] = (s.q[k] - spec[k]) / count[k];
    }
    return qg;
}

}  // namespace gpccopf
