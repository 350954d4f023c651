#include "gpccopf/kernel.hpp"

#include <cmath>
#include <numbers>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd Hyperparams::to_log() const {
    VectorXd t(lambda.size() + 2);
    t.head(lambda.size()) = lambda.array().log();
    t[lambda.size()] = std::log(sigma_f2);
    t[lambda.size() + 1] = std::log(sigma_z2);
    return t;
}

Hyperparams Hyperparams::from_log(const VectorXd& theta) {
    const int d = static_cast<int>(theta.size()) - 2;
    Hyperparams h;
    h.lambda = theta.head(d).array().exp();
    h.sigma_f2 = std::exp(theta[d]);
    h.sigma_z2 = std::exp(theta[d + 1]);
    return h;
}

double kernel_seard(const VectorXd& xp, const VectorXd& xq, const Hyperparams& h) {
    const double r2 = ((xp - xq).array().square() / h.lambda.array()).sum();
    return h.sigma_f2 * std::exp(-0.5 * r2);
}

MatrixXd kernel_matrix(const MatrixXd& A, const MatrixXd& B, const VectorXd& lambda, double sigma_f2) {
    // explicit differences keep k(x, x) == sigma_f2 exactly
    const VectorXd il = lambda.cwiseInverse();
    const int d = static_cast<int>(A.cols());
    MatrixXd K(A.rows(), B.rows());
    for (int j = 0; j < B.rows(); ++j)
        for (int i = 0; i < A.rows(); ++i) {
            double r2 = 0;
            for (int k = 0; k < d; ++k) {
                const double t = A(i, k) - B(j, k);
                r2 += t * t * il[k];
            }
            K(i, j) = sigma_f2 * std::exp(-0.5 * r2);
        }
    return K;
}

VectorXd kernel_vector(const MatrixXd& X, const VectorXd& x, const VectorXd& lambda, double sigma_f2) {
    const VectorXd il = lambda.cwiseInverse();
    VectorXd k(X.rows());
    for (int i = 0; i < X.rows(); ++i) {
        const double r2 = (X.row(i).transpose() - x).array().square().matrix().dot(il);
        k[i] = sigma_f2 * std::exp(-0.5 * r2);
    }
    return k;
}

double cholesky_jitter(const MatrixXd& K, Eigen::LLT<MatrixXd>& llt, int* escalations) {
    llt.compute(K);
    if (llt.info() == Eigen::Success) {
        if (escalations) *escalations = 0;
        return 0.0;
    }
    const double scale = K.diagonal().mean();
    int esc = 0;
    for (double j = 1e-10; j <= 1e-4 * (1 + 1e-9); j *= 10.0) {
        ++esc;
        MatrixXd Kj = K;
        Kj.diagonal().array() += j * scale;
        llt.compute(Kj);
        if (llt.info() == Eigen::Success) {
            if (escalations) *escalations = esc;
            return j * scale;
        }
    }
    throw GpError("non-PD kernel matrix");
}

LmlResult log_marginal_likelihood(const MatrixXd& X, const VectorXd& y, const Hyperparams& h) {
    const int n = static_cast<int>(X.rows()), d = static_cast<int>(X.cols());
    const MatrixXd Kf = kernel_matrix(X, X, h.lambda, h.sigma_f2);
    MatrixXd K = Kf;
    K.diagonal().array() += h.sigma_z2;
    Eigen::LLT<MatrixXd> llt;
    cholesky_jitter(K, llt);
    const VectorXd alpha = llt.solve(y);
    const MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();

    LmlResult r;
    r.value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);

    // dL/dtheta = 1/2 tr((a a^T - K^-1) dK/dtheta)
    const MatrixXd W = alpha * alpha.transpose() - llt.solve(MatrixXd::Identity(n, n));
    const MatrixXd WK = W.cwiseProduct(Kf);
    r.grad.resize(d + 2);
    for (int dd = 0; dd < d; ++dd) {
        const VectorXd c = X.col(dd);
        double s = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double diff = c[i] - c[j];
                s += WK(i, j) * diff * diff;
            }
        r.grad[dd] = 0.5 * s / (2.0 * h.lambda[dd]);
    }
    r.grad[d] = 0.5 * WK.sum();
    r.grad[d + 1] = 0.5 * h.sigma_z2 * W.trace();
    return r;
}

}  // namespace gpccopf
