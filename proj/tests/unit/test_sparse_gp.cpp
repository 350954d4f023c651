#include "gp_toys.hpp"
#include "oracles.hpp"

#include "gpccopf/kernel.hpp"
#include "gpccopf/sparse_gp.hpp"

#include <gtest/gtest.h>

using namespace gpccopf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(SparseGp, PinnedFullInducingSetMatchesFullGp) {
    const MatrixXd X = random_inputs(30, 3, 21);
    const VectorXd y = smooth_target(X);
    const Hyperparams h = toy_hyp(3);
    const SampleSet s = identity_set(X, y);
    const GpModel full = build_model(s, {h});
    SparseConfig cfg;
    cfg.m_m = 30;
    cfg.pin_inducing = true;
    cfg.inducing = X;
    cfg.fixed_hyper = {h};
    const SparseGpModel sp = train_sparse(s, cfg);
    const MatrixXd T = random_inputs(15, 3, 22, 1.5);
    for (int i = 0; i < T.rows(); ++i) {
        VectorXd fm, fv, sm, sv;
        full.predict(T.row(i).transpose(), fm, fv);
        sp.predict(T.row(i).transpose(), sm, sv);
        EXPECT_NEAR(sm[0], fm[0], 1e-6);
        EXPECT_NEAR(sv[0], fv[0], 1e-6);
    }
}

TEST(SparseGp, ElboBelowExactLikelihood) {
    const MatrixXd X = random_inputs(30, 2, 23);
    const VectorXd y = smooth_target(X);
    for (int m : {1, 3, 8, 15, 30})
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const MatrixXd Z = random_inputs(m, 2, 100 + seed + m, 1.2);
            const Hyperparams h = toy_hyp(2, 0.3 + 0.4 * seed, 1.0, 1e-2);
            EXPECT_LE(elbo(X, y, Z, h).value, log_marginal_likelihood(X, y, h).value + 1e-9) << "m " << m;
        }
}

TEST(SparseGp, ElboGradientMatchesFiniteDifferences) {
    const MatrixXd X = random_inputs(25, 2, 24);
    const VectorXd y = smooth_target(X);
    const MatrixXd Z = random_inputs(6, 2, 25);
    const Hyperparams h = toy_hyp(2, 0.6, 1.2, 5e-2);
    const ElboResult r = elbo(X, y, Z, h);
    const VectorXd th = h.to_log();
    const VectorXd fd_th =
        oracle::fd_gradient([&](const VectorXd& t) { return elbo(X, y, Z, Hyperparams::from_log(t)).value; }, th);
    EXPECT_LT((r.grad_theta - fd_th).norm() / fd_th.norm(), 1e-5);
    const Eigen::Map<const VectorXd> z0(Z.data(), Z.size());
    const VectorXd fd_z = oracle::fd_gradient(
        [&](const VectorXd& z) { return elbo(X, y, Eigen::Map<const MatrixXd>(z.data(), 6, 2), h).value; }, z0);
    const Eigen::Map<const VectorXd> gz(r.grad_Z.data(), r.grad_Z.size());
    EXPECT_LT((gz - fd_z).norm() / fd_z.norm(), 1e-5);
}

TEST(SparseGp, InducingCountBounded) {
    const MatrixXd X = random_inputs(10, 2, 26);
    SparseConfig cfg;
    cfg.m_m = 11;
    EXPECT_THROW(train_sparse(identity_set(X, smooth_target(X)), cfg), GpError);
    cfg.m_m = 0;
    EXPECT_THROW(train_sparse(identity_set(X, smooth_target(X)), cfg), GpError);
}

TEST(SparseGp, VariationalCovariancePsd) {
    const MatrixXd X = random_inputs(40, 2, 27);
    SparseConfig cfg;
    cfg.m_m = 8;
    cfg.gp.restarts = 2;
    const SparseGpModel m = train_sparse(identity_set(X, smooth_target(X)), cfg);
    const MatrixXd& A = m.outputs[0].A_m;
    EXPECT_LT((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-10 * A.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A + A.transpose()));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * A.cwiseAbs().maxCoeff());
}

TEST(SparseGp, PredictionFormsAgree) {
    // dense variance factor used by predict vs the triangular-solve posterior used by propagation
    const MatrixXd X = random_inputs(40, 3, 28);
    SparseConfig cfg;
    cfg.m_m = 10;
    cfg.gp.restarts = 2;
    const SparseGpModel m = train_sparse(identity_set(X, smooth_target(X)), cfg);
    const auto post = m.posteriors();
    const MatrixXd T = random_inputs(10, 3, 29, 1.5);
    for (int i = 0; i < T.rows(); ++i) {
        VectorXd mu, var;
        m.predict(T.row(i).transpose(), mu, var);
        double pm, pv;
        post[0].predict(T.row(i).transpose(), pm, pv);
        EXPECT_NEAR(mu[0], pm, 1e-9 * std::max(1.0, std::abs(pm)));
        EXPECT_NEAR(var[0], pv, 1e-9 * m.outputs[0].hyp.sigma_f2);
    }
}

TEST(SparseGp, SerializationRoundTrip) {
    const MatrixXd X = random_inputs(30, 2, 30);
    SparseConfig cfg;
    cfg.m_m = 6;
    cfg.gp.restarts = 1;
    const SparseGpModel m = train_sparse(identity_set(X, smooth_target(X)), cfg);
    const SparseGpModel back = sparse_model_from_json(sparse_model_to_json(m));
    const VectorXd x{{0.2, -0.7}};
    VectorXd a, va, b, vb;
    m.predict(x, a, va);
    back.predict(x, b, vb);
    EXPECT_NEAR(a[0], b[0], 1e-12);
    EXPECT_NEAR(va[0], vb[0], 1e-10);
}

TEST(SparseGp, KmeansCentersAreDistinctAndInsideHull) {
    const MatrixXd X = random_inputs(50, 2, 31);
    const MatrixXd C = kmeans_centers(X, 7, 1);
    ASSERT_EQ(C.rows(), 7);
    for (int j = 0; j < 2; ++j) {
        EXPECT_GE(C.col(j).minCoeff(), X.col(j).minCoeff());
        EXPECT_LE(C.col(j).maxCoeff(), X.col(j).maxCoeff());
    }
    for (int a = 0; a < 7; ++a)
        for (int b = a + 1; b < 7; ++b) EXPECT_GT((C.row(a) - C.row(b)).norm(), 0.0);
}
