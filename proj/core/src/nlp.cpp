#include "gpccopf/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(NlpStatus s) {
    switch (s) {
        case NlpStatus::Optimal: return "optimal";
        case NlpStatus::MaxIter: return "max_iter";
        case NlpStatus::Infeasible: return "infeasible";
        default: return "numeric_failure";
    }
}

double KktBlocks::max() const { return std::max({stationarity, complementarity, equality, inequality}); }

namespace {

struct Eval {
    bool ok = false;
    double f = 0;
    VectorXd g, ce, ci;
    MatrixXd Je, Ji;
};

Eval evaluate(const NlpProblem& p, const VectorXd& x) {
    Eval e;
    try {
        p.objective(x, e.f, e.g);
        e.ce.resize(0);
        e.ci.resize(0);
        e.Je.resize(0, p.n);
        e.Ji.resize(0, p.n);
        if (p.m_eq) p.eq(x, e.ce, e.Je);
        if (p.m_in) p.ineq(x, e.ci, e.Ji);
        e.ok = std::isfinite(e.f) && e.g.allFinite() && e.ce.allFinite() && e.ci.allFinite() && e.Je.allFinite() &&
               e.Ji.allFinite();
    } catch (const std::exception&) {
        e.ok = false;
    }
    return e;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

VectorXd grad_lagrangian(const Eval& e, const VectorXd& r, const VectorXd& q) {
    VectorXd gl = e.g;
    if (r.size()) gl -= e.Je.transpose() * r;
    if (q.size()) gl -= e.Ji.transpose() * q;
    return gl;
}

KktBlocks blocks(const Eval& e, const VectorXd& s, const VectorXd& r, const VectorXd& q, double psi) {
    KktBlocks b;
    b.stationarity = inf_norm(grad_lagrangian(e, r, q));
    b.complementarity = inf_norm((s.cwiseProduct(q).array() - psi).matrix());
    b.equality = inf_norm(e.ce);
    b.inequality = inf_norm(e.ci - s);
    return b;
}

double merit(const Eval& e, const VectorXd& s, double psi, double nu) {
    double phi = e.f;
    for (int i = 0; i < s.size(); ++i) phi -= psi * std::log(s[i]);
    return phi + nu * (e.ce.lpNorm<1>() + (e.ci - s).lpNorm<1>());
}

double max_step(const VectorXd& v, const VectorXd& dv, double tau) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
        if (dv[i] < 0) a = std::min(a, -tau * v[i] / dv[i]);
    return a;
}

}  // namespace

KktBlocks kkt_residual(const NlpProblem& p, const VectorXd& x, const VectorXd& s, const VectorXd& r, const VectorXd& q,
                       double psi) {
    Eval e = evaluate(p, x);
    if (!e.ok) {
        const double inf = std::numeric_limits<double>::infinity();
        return {inf, inf, inf, inf};
    }
    return blocks(e, s, r, q, psi);
}

MatrixXd fd_lagrangian_hessian(const NlpProblem& p, const VectorXd& x, const VectorXd& r, const VectorXd& q, double h) {
    const int n = p.n;
    MatrixXd H(n, n);
    VectorXd xp = x, xm = x;
    for (int j = 0; j < n; ++j) {
        const double hj = h * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + hj;
        xm[j] = x[j] - hj;
        Eval ep = evaluate(p, xp), em = evaluate(p, xm);
        if (!ep.ok || !em.ok) throw std::runtime_error("Hessian evaluation failed");
        H.col(j) = (grad_lagrangian(ep, r, q) - grad_lagrangian(em, r, q)) / (2.0 * hj);
        xp[j] = xm[j] = x[j];
    }
    return 0.5 * (H + H.transpose());
}

NlpSolution solve(const NlpProblem& p, const VectorXd& x0, const NlpOptions& opts) {
    const int n = p.n, me = p.m_eq, mi = p.m_in;
    const double tau = 0.995;
    const double psi_min = opts.tol / 10.0;

    NlpSolution sol;
    VectorXd x = x0;
    Eval E = evaluate(p, x);
    if (!E.ok) {
        sol.x = x;
        sol.status = NlpStatus::NumericFailure;
        sol.kkt_residual = std::numeric_limits<double>::infinity();
        return sol;
    }

    double psi = opts.psi0;
    VectorXd s = E.ci.cwiseMax(1e-2);
    VectorXd q = (psi / s.array()).matrix();
    VectorXd r = VectorXd::Zero(me);
    if (me) {
        VectorXd rhs = E.g;
        if (mi) rhs -= E.Ji.transpose() * q;
        r = E.Je.transpose().colPivHouseholderQr().solve(rhs);
        if (!r.allFinite()) r.setZero();
    }
    double nu = std::max({1.0, inf_norm(r), inf_norm(q)});
    MatrixXd B = MatrixXd::Identity(n, n);
    double delta_prev = 0;
    int stalls = 0;

    std::ofstream log;
    if (!opts.log_path.empty()) {
        log.open(opts.log_path);
        log << "iter,f,psi,stationarity,complementarity,equality,inequality\n";
    }

    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const KktBlocks e0 = blocks(E, s, r, q, 0.0);
        if (log.is_open())
            log << it << ',' << E.f << ',' << psi << ',' << e0.stationarity << ',' << e0.complementarity << ','
                << e0.equality << ',' << e0.inequality << '\n';
        if (e0.max() <= opts.tol) {
            sol.status = NlpStatus::Optimal;
            break;
        }
        // monotone barrier update once the barrier subproblem is solved to sqrt(psi)
        while (psi > psi_min && blocks(E, s, r, q, psi).max() <= std::sqrt(psi))
            psi = std::max(psi_min, psi * opts.psi_shrink);

        MatrixXd W;
        try {
            W = p.hessian ? p.hessian(x, r, q) : B;
        } catch (const std::exception&) {
            sol.status = NlpStatus::NumericFailure;
            break;
        }
        const VectorXd Sig = q.cwiseQuotient(s);
        MatrixXd Wc = W;
        VectorXd rhs1 = -E.g;
        if (me) rhs1 += E.Je.transpose() * r;
        if (mi) {
            Wc += E.Ji.transpose() * Sig.asDiagonal() * E.Ji;
            rhs1 += E.Ji.transpose() * (psi / s.array()).matrix() - E.Ji.transpose() * Sig.cwiseProduct(E.ci - s);
        }
        VectorXd rhs(n + me);
        rhs << rhs1, -E.ce;

        // inertia-corrected symmetric indefinite solve
        MatrixXd K = MatrixXd::Zero(n + me, n + me);
        K.topLeftCorner(n, n) = Wc;
        if (me) {
            K.topRightCorner(n, me) = E.Je.transpose();
            K.bottomLeftCorner(me, n) = E.Je;
        }
        double delta = 0, delta_c = 0;
        VectorXd sol_kkt;
        bool solved = false;
        for (int tries = 0; tries < 40; ++tries) {
            MatrixXd Kd = K;
            Kd.topLeftCorner(n, n).diagonal().array() += delta;
            if (me) Kd.bottomRightCorner(me, me).diagonal().array() -= delta_c;
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(Kd);
            const VectorXd& ev = es.eigenvalues();
            // numerical-rank tolerance; barrier terms make the spread of ev large
            const double zt = ev.size() * std::numeric_limits<double>::epsilon() *
                              std::max(1.0, ev.cwiseAbs().maxCoeff());
            int pos = 0, neg = 0, zero = 0;
            for (int i = 0; i < ev.size(); ++i) {
                if (ev[i] > zt) ++pos;
                else if (ev[i] < -zt) ++neg;
                else ++zero;
            }
            if (pos == n && neg == me) {
                sol_kkt = es.eigenvectors() * (es.eigenvectors().transpose() * rhs).cwiseQuotient(ev);
                solved = sol_kkt.allFinite();
                if (solved) break;
            }
            if (zero > 0 && me && delta_c == 0) {
                delta_c = 1e-8;
                continue;
            }
            delta = delta == 0 ? (delta_prev > 0 ? std::max(1e-8, delta_prev / 3.0) : 1e-8) : delta * 10.0;
            if (delta > 1e20) break;
        }
        if (!solved) {
            sol.status = NlpStatus::NumericFailure;
            break;
        }
        delta_prev = delta;

        const VectorXd dx = sol_kkt.head(n);
        const VectorXd dr = -sol_kkt.tail(me);
        VectorXd ds(mi), dq(mi);
        if (mi) {
            ds = E.Ji * dx + (E.ci - s);
            dq = -q + (psi / s.array()).matrix() - Sig.cwiseProduct(ds);
        }
        const double a_p = mi ? max_step(s, ds, tau) : 1.0;
        const double a_d = mi ? max_step(q, dq, tau) : 1.0;

        // l1 merit: make the direction a descent direction for the penalty
        const double viol = E.ce.lpNorm<1>() + (E.ci - s).lpNorm<1>();
        double dbar = E.g.dot(dx);
        for (int i = 0; i < mi; ++i) dbar -= psi * ds[i] / s[i];
        if (viol > 1e-14) {
            const double curv = std::max(0.0, dx.dot(Wc * dx));
            nu = std::max(nu, (dbar + 0.5 * curv) / (0.9 * viol));
        }
        nu = std::max(nu, 1.01 * std::max(inf_norm(r + dr), inf_norm(q + dq)));
        const double D = dbar - nu * viol;
        const double phi0 = merit(E, s, psi, nu);

        double a = a_p;
        Eval Et;
        VectorXd xt, st;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            xt = x + a * dx;
            st = s + a * ds;
            Et = evaluate(p, xt);
            if (Et.ok) {
                const double phit = merit(Et, st, psi, nu);
                // rounding slack: near the optimum the predicted decrease falls below the rounding
                // of phi, including the penalised constraint values
                const double slack = 10 * std::numeric_limits<double>::epsilon() *
                                     (std::abs(phi0) + nu * (me + mi + s.lpNorm<1>()));
                if (phit <= phi0 + 1e-4 * a * std::min(D, 0.0) + slack ||
                    (D >= 0 && phit <= phi0 + 1e-12 * std::abs(phi0))) {
                    accepted = true;
                    break;
                }
            }
            a *= 0.5;
        }
        if (!accepted) {
            // take a short step anyway; repeated failures end the solve
            a = std::min(a_p, 1e-3);
            xt = x + a * dx;
            st = s + a * ds;
            Et = evaluate(p, xt);
            if (!Et.ok) {
                sol.status = NlpStatus::NumericFailure;
                break;
            }
            if (++stalls >= 10) {
                sol.status = viol > opts.tol ? NlpStatus::Infeasible : NlpStatus::NumericFailure;
                x = xt;
                s = st;
                E = Et;
                break;
            }
        } else {
            stalls = 0;
        }

        const VectorXd r_new = r + a * dr;
        VectorXd q_new = q + a_d * dq;
        for (int i = 0; i < mi; ++i) {
            // keep q_i s_i within a bounded band around psi
            const double lo = psi / (1e10 * st[i]), hi = 1e10 * psi / st[i];
            q_new[i] = std::clamp(q_new[i], lo, hi);
        }

        if (!p.hessian) {
            const VectorXd sk = xt - x;
            VectorXd yk = grad_lagrangian(Et, r_new, q_new) - grad_lagrangian(E, r_new, q_new);
            const double sBs = sk.dot(B * sk);
            if (sBs > 1e-16) {
                const double sy = sk.dot(yk);
                if (sy < 0.2 * sBs) {
                    const double th = 0.8 * sBs / (sBs - sy);
                    yk = th * yk + (1 - th) * (B * sk);
                }
                const VectorXd Bs = B * sk;
                B += yk * yk.transpose() / sk.dot(yk) - Bs * Bs.transpose() / sBs;
            }
        }

        x = xt;
        s = st;
        r = r_new;
        q = q_new;
        E = std::move(Et);
    }

    sol.x = x;
    sol.s = s;
    sol.r = r;
    sol.q = q;
    sol.f = E.f;
    sol.psi = psi;
    sol.iterations = it;
    sol.kkt_residual = blocks(E, s, r, q, 0.0).max();
    if (it >= opts.max_iter) sol.status = NlpStatus::MaxIter;
    return sol;
}

}  // namespace gpccopf
