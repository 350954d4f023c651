#include "common.hpp"
#include "oracles.hpp"

#include "gpccopf/powerflow.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gpccopf;
using Eigen::VectorXd;

namespace {

InjectionSet zero_injections(const GridCase& c) {
    InjectionSet inj = reference_injections(c);
    inj.p_g.setZero();
    inj.p_l.setZero();
    inj.q_l.setZero();
    inj.p_rs.setZero();
    inj.q_rs.setZero();
    return inj;
}

}  // namespace

TEST(PowerFlow, FlatProfileForZeroInjections) {
    const GridCase c = parse_case(two_bus_json());
    const PfSolution s = solve_ac_pf(c, zero_injections(c));
    EXPECT_LE(s.iterations, 1);
    EXPECT_LT((s.v.array() - 1).abs().maxCoeff(), 1e-12);
    EXPECT_LT(s.theta.cwiseAbs().maxCoeff(), 1e-12);
    for (const BranchFlow& f : s.flows) EXPECT_LT(f.s, 1e-12);
}

TEST(PowerFlow, TwoBusMatchesGaussSeidel) {
    const GridCase c = parse_case(two_bus_json(0.0, 0.1, 10.0, 0.3));
    const InjectionSet inj = reference_injections(c);
    ASSERT_NEAR(inj.q_l[0], 0.03, 1e-15);
    const PfSolution s = solve_ac_pf(c, inj);
    const oracle::GsResult gs = oracle::gauss_seidel_pf(c, inj);
    ASSERT_TRUE(gs.converged);
    EXPECT_LT((s.v - gs.v).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((s.theta - gs.theta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PowerFlow, Ieee9ReferenceMatchesGaussSeidel) {
    const GridCase& c = ieee9();
    const InjectionSet inj = reference_injections(c);
    const PfSolution s = solve_ac_pf(c, inj);
    EXPECT_LT(s.max_mismatch, 1e-8);
    EXPECT_LE(s.iterations, 6);
    EXPECT_EQ(s.theta[c.slack_index()], 0.0);
    const oracle::GsResult gs = oracle::gauss_seidel_pf(c, inj);
    ASSERT_TRUE(gs.converged);
    EXPECT_LT((s.v - gs.v).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((s.theta - gs.theta).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PowerFlow, BusBalanceResidual) {
    // net injection at each bus equals the sum of the flows leaving it plus the shunt term
    const GridCase& c = ieee9();
    const PfSolution s = solve_ac_pf(c, reference_injections(c));
    const auto Y = admittance_matrix(c);
    VectorXd p, q;
    bus_injections(Y, s.v, s.theta, p, q);
    const VectorXd p_spec = bus_p_spec(c, reference_injections(c));
    for (int k = 0; k < c.m(); ++k)
        if (k != c.slack_index()) EXPECT_LT(std::abs(p[k] - p_spec[k]), 1e-8);
    VectorXd out_p = VectorXd::Zero(c.m()), out_q = VectorXd::Zero(c.m());
    for (int k = 0; k < c.m(); ++k) {
        out_p[k] += c.buses[k].g_shunt * s.v[k] * s.v[k];
        out_q[k] -= c.buses[k].b_shunt * s.v[k] * s.v[k];
    }
    // flows at both ends from the raw series model
    for (const Branch& br : c.branches) {
        const int k = c.index_of(br.from), j = c.index_of(br.to);
        const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
        const auto Vk = std::polar(s.v[k], s.theta[k]), Vj = std::polar(s.v[j], s.theta[j]);
        const auto Skj = Vk * std::conj(y * (Vk - Vj)), Sjk = Vj * std::conj(y * (Vj - Vk));
        out_p[k] += Skj.real();
        out_q[k] += Skj.imag();
        out_p[j] += Sjk.real();
        out_q[j] += Sjk.imag();
    }
    EXPECT_LT((out_p - p).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((out_q - q).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PowerFlow, BranchFlowEqualAngles) {
    // lossless branch at equal angles: no active flow, reactive flow from the magnitude gap
    const GridCase c = parse_case(two_bus_json(0.0, 0.1));
    VectorXd v(2), th = VectorXd::Constant(2, 0.2);
    v << 1.05, 1.0;
    const auto f = branch_flows(c, v, th);
    const double B = branch_admittance(c.branches[0]).imag();
    EXPECT_NEAR(f[0].p, 0.0, 1e-14);
    EXPECT_NEAR(f[0].q, -B * 1.05 * (1.05 - 1.0), 1e-12);
    const auto f0 = branch_flows(c, VectorXd::Constant(2, 1.05), th);
    EXPECT_NEAR(f0[0].s, 0.0, 1e-12);
}

TEST(PowerFlow, ApparentFlowDominatesActive) {
    const GridCase& c = ieee9();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uv(0.9, 1.1), ut(-0.3, 0.3);
    for (int t = 0; t < 20; ++t) {
        VectorXd v(c.m()), th(c.m());
        for (int k = 0; k < c.m(); ++k) {
            v[k] = uv(rng);
            th[k] = ut(rng);
        }
        for (const BranchFlow& f : branch_flows(c, v, th)) {
            EXPECT_GE(f.s, std::abs(f.p) - 1e-15);
            EXPECT_NEAR(f.s, std::hypot(f.p, f.q), 1e-14);
        }
    }
}

TEST(PowerFlow, JacobianMatchesFiniteDifferences) {
    const GridCase& c = ieee9();
    const InjectionSet inj = reference_injections(c);
    const PfEquations eq(c, inj);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int t = 0; t < 5; ++t) {
        VectorXd x = eq.initial();
        for (int i = 0; i < x.size(); ++i) x[i] += u(rng);
        const Eigen::MatrixXd J = eq.jacobian(x);
        const Eigen::MatrixXd Jfd = oracle::fd_jacobian([&](const VectorXd& z) { return eq.mismatch(z); }, x, 1e-6);
        EXPECT_LT((J - Jfd).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(PowerFlow, LossesNonnegative) {
    const GridCase& c = ieee9();
    const InjectionSet inj = reference_injections(c);
    const PfSolution s = solve_ac_pf(c, inj);
    const double losses = gen_p(c, inj, s).sum() + inj.p_rs.sum() - inj.p_l.sum();
    EXPECT_GE(losses, 0.0);
}

TEST(PowerFlow, NonConvergenceCarriesMismatch) {
    const GridCase& c = ieee9();
    InjectionSet inj = reference_injections(c);
    inj.p_l *= 40;
    inj.q_l *= 40;
    try {
        solve_ac_pf(c, inj, 1e-8, 15);
        FAIL();
    } catch (const PfError& e) {
        EXPECT_TRUE(e.kind() == PfError::Kind::NonConvergence || e.kind() == PfError::Kind::SingularJacobian);
    }
}

TEST(DcPowerFlow, SingleLineBalance) {
    const GridCase c = parse_case(two_bus_json(0.0, 0.1));
    const VectorXd th = solve_dc_pf(c, VectorXd{{1.0, -1.0}});
    EXPECT_EQ(th[0], 0.0);
    EXPECT_NEAR(std::abs(th[1] - th[0]), 0.1, 1e-12);
}

TEST(DcPowerFlow, ZeroInjections) {
    const GridCase& c = ieee9();
    EXPECT_LT(solve_dc_pf(c, VectorXd::Zero(c.m())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DcPowerFlow, UnbalancedRejected) {
    const GridCase& c = ieee9();
    VectorXd p = VectorXd::Zero(c.m());
    p[3] = 0.5;
    EXPECT_THROW(solve_dc_pf(c, p), PfError);
}

TEST(DcPowerFlow, ReproducesInjections) {
    const GridCase& c = ieee9();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    VectorXd p(c.m());
    for (int k = 0; k < c.m(); ++k) p[k] = n(rng);
    p.array() -= p.mean();
    const VectorXd th = solve_dc_pf(c, p);
    const VectorXd f = dc_branch_flows(c, th);
    VectorXd back = VectorXd::Zero(c.m());
    for (size_t b = 0; b < c.branches.size(); ++b) {
        back[c.index_of(c.branches[b].from)] += f[b];
        back[c.index_of(c.branches[b].to)] -= f[b];
    }
    EXPECT_LT((back - p).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DcPowerFlow, Ieee9FlowsNearAc) {
    // losses removed by scaling generation down to the load
    const GridCase& c = ieee9();
    const InjectionSet inj = reference_injections(c);
    const PfSolution ac = solve_ac_pf(c, inj);
    const VectorXd pg = gen_p(c, inj, ac);
    InjectionSet lossless = inj;
    lossless.p_g = pg * (inj.p_l.sum() - inj.p_rs.sum()) / pg.sum();
    const VectorXd th = solve_dc_pf(c, bus_p_spec(c, lossless));
    const VectorXd f = dc_branch_flows(c, th);
    for (size_t b = 0; b < c.branches.size(); ++b) {
        const double pac = ac.flows[b].p;
        EXPECT_LT(std::abs(f[b] - pac), 0.10 * std::abs(pac)) << "branch " << b;
    }
}
