#include "gpccopf/propagate.hpp"

#include <cmath>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void GaussianInput::validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw GpError("input covariance shape mismatch");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw GpError("input covariance is not symmetric");
    if (cov.size() && Eigen::SelfAdjointEigenSolver<MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() < -1e-10)
        throw GpError("input covariance is not PSD");
}

PosteriorDerivs posterior_derivs(const OutputPosterior& p, const VectorXd& x, bool hessians) {
    const VectorXd il = p.hyp.lambda.cwiseInverse();
    const VectorXd k = kernel_vector(p.basis, x, p.hyp.lambda, p.hyp.sigma_f2);
    // U_i = Lambda^-1 (x_i - x); grad k_i = k_i U_i
    const MatrixXd U = (p.basis.rowwise() - x.transpose()) * il.asDiagonal();
    const VectorXd Mk = p.apply(k);

    PosteriorDerivs d;
    d.mu = p.mean_offset + k.dot(p.weights);
    d.var = clamp_variance(p.hyp.sigma_f2 - p.quad(k), p.hyp.sigma_f2);
    const VectorXd wk = p.weights.cwiseProduct(k);
    d.dmu = U.transpose() * wk;
    const MatrixXd Jk = k.asDiagonal() * U;
    d.dvar = -2.0 * Jk.transpose() * Mk;
    if (hessians) {
        d.hmu = U.transpose() * wk.asDiagonal() * U;
        d.hmu.diagonal() -= wk.sum() * il;
        const VectorXd mkk = Mk.cwiseProduct(k);
        MatrixXd H = p.quad(Jk) + U.transpose() * mkk.asDiagonal() * U;
        H.diagonal() -= mkk.sum() * il;
        d.hvar = -2.0 * H;
    }
    return d;
}

void ta1_output(const OutputPosterior& p, const GaussianInput& gin, double& mean, double& var) {
    const PosteriorDerivs d = posterior_derivs(p, gin.mean, false);
    mean = d.mu;
    var = d.var + d.dmu.dot(gin.cov * d.dmu);
}

void ta2_output(const OutputPosterior& p, const GaussianInput& gin, double& mean, double& var) {
    const PosteriorDerivs d = posterior_derivs(p, gin.mean, true);
    mean = d.mu;
    var = d.var + d.dmu.dot(gin.cov * d.dmu) + 0.5 * (d.hvar * gin.cov).trace();
    // the second-order term is an approximation and can undershoot
    var = std::max(var, 0.0);
}

namespace {

// Extended precision for the expected-moment sums: the weights and the inverse Gram
// matrix are large when the fitted noise is tiny, and the variance is a small
// difference of such terms.
using Real = long double;
using MatL = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// k^T M k and tr(M Q) for M = A^-T (I - B^-T B^-1) A^-1
struct PosteriorL {
    MatL A, B;
    explicit PosteriorL(const OutputPosterior& p) : A(p.chol_a.cast<Real>()), B(p.chol_b.cast<Real>()) {}

    Real quad(const VecL& k) const {
        const VecL t = A.triangularView<Eigen::Lower>().solve(k);
        Real q = t.squaredNorm();
        if (B.size()) q -= B.triangularView<Eigen::Lower>().solve(t).squaredNorm();
        return q;
    }
    Real trace_with(const MatL& Q) const {
        const auto a = A.triangularView<Eigen::Lower>();
        const MatL S = a.solve(MatL(a.solve(Q).transpose()));
        Real tr = S.trace();
        if (B.size()) {
            const auto b = B.triangularView<Eigen::Lower>();
            tr -= b.solve(MatL(b.solve(S).transpose())).trace();
        }
        return tr;
    }
};

}  // namespace

void em_output(const OutputPosterior& p, const GaussianInput& gin, double& mean, double& var) {
    const int n = static_cast<int>(p.basis.rows());
    const VecL isq = p.hyp.lambda.cast<Real>().cwiseInverse().cwiseSqrt();
    const Real sf2 = p.hyp.sigma_f2;

    // S = Lambda^-1/2 Sigma Lambda^-1/2 = U diag(e) U^T; every Sigma-dependent term is
    // written through e so that it vanishes to full relative accuracy as Sigma -> 0.
    const MatL S = isq.asDiagonal() * gin.cov.cast<Real>() * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatL> es(Real(0.5) * (S + S.transpose()));
    if (es.info() != Eigen::Success) throw GpError("singular moment-matching system");
    const VecL e = es.eigenvalues().cwiseMax(Real(0));
    const MatL& U = es.eigenvectors();
    Real ld1 = 0, ld2 = 0;
    for (int k = 0; k < e.size(); ++k) {
        ld1 += std::log1p(e[k]);
        ld2 += std::log1p(2 * e[k]);
    }

    // scaled offsets t_i = Lambda^-1/2 (x_i - mu) in the eigenbasis
    const MatL T = (p.basis.cast<Real>().rowwise() - gin.mean.cast<Real>().transpose()) * isq.asDiagonal() * U;
    const VecL g1 = (Real(1) + e.array()).inverse().matrix();             // (I + S)^-1
    const VecL r1 = (e.array() / (Real(1) + e.array())).matrix();         // I - (I + S)^-1
    const VecL r2 = (4 * e.array() / (Real(1) + 2 * e.array())).matrix();  // 2 (I - (I + 2S)^-1)

    VecL q(n), a1(n);
    MatL W(n, e.size());
    for (int i = 0; i < n; ++i) {
        const auto t = T.row(i).transpose().array();
        q[i] = sf2 * std::exp(Real(-0.5) * ld1 - Real(0.5) * (t.square() * g1.array()).sum());
        a1[i] = (t.square() * r1.array()).sum();
        W.row(i) = (t * r2.array().sqrt()).matrix().transpose();
    }
    const VecL w = p.weights.cast<Real>();
    const Real m0 = q.dot(w);
    mean = p.mean_offset + static_cast<double>(m0);

    // C_ij = Cov[k_i(x), k_j(x)] = q_i q_j expm1(log Q_ij - log q_i - log q_j)
    MatL C(n, n);
    const Real c0 = ld1 - Real(0.5) * ld2;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const Real z = Real(0.25) * (W.row(i) + W.row(j)).squaredNorm();
            C(i, j) = C(j, i) = q[i] * q[j] * std::expm1(c0 + Real(0.5) * z - Real(0.5) * a1[i] - Real(0.5) * a1[j]);
        }
    // E[sigma^2] + Var[mu] with Q = q q^T + C
    const PosteriorL pl(p);
    const Real v = sf2 - pl.quad(q) - pl.trace_with(C) + w.dot(C * w);
    var = clamp_variance(static_cast<double>(v), p.hyp.sigma_f2);
}

GaussianOutput propagate(const std::vector<OutputPosterior>& post, const GaussianInput& gin, Propagation method) {
    gin.validate();
    GaussianOutput out;
    out.mean.resize(post.size());
    out.var.resize(post.size());
    for (size_t j = 0; j < post.size(); ++j) {
        switch (method) {
            case Propagation::TA1: ta1_output(post[j], gin, out.mean[j], out.var[j]); break;
            case Propagation::TA2: ta2_output(post[j], gin, out.mean[j], out.var[j]); break;
            case Propagation::EM: em_output(post[j], gin, out.mean[j], out.var[j]); break;
        }
    }
    return out;
}

GaussianOutput ta1(const GpModel& model, const GaussianInput& gin) {
    return propagate(model.posteriors(), gin, Propagation::TA1);
}

GaussianOutput ta2(const GpModel& model, const GaussianInput& gin) {
    return propagate(model.posteriors(), gin, Propagation::TA2);
}

GaussianOutput em(const GpModel& model, const GaussianInput& gin) {
    return propagate(model.posteriors(), gin, Propagation::EM);
}

GaussianOutput ta1(const SparseGpModel& model, const GaussianInput& gin) {
    return propagate(model.posteriors(), gin, Propagation::TA1);
}

}  // namespace gpccopf
