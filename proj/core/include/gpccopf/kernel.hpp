#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace gpccopf {

class GpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// lambda holds squared length-scales l^2 per input.
struct Hyperparams {
    Eigen::VectorXd lambda;
    double sigma_f2 = 1.0;
    double sigma_z2 = 1e-4;

    // [log lambda, log sigma_f2, log sigma_z2]
    Eigen::VectorXd to_log() const;
    static Hyperparams from_log(const Eigen::VectorXd& theta);
};

double kernel_seard(const Eigen::VectorXd& xp, const Eigen::VectorXd& xq, const Hyperparams& h);

// K_ij = k(A_i, B_j) for row-wise inputs.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::VectorXd& lambda,
                              double sigma_f2);
Eigen::VectorXd kernel_vector(const Eigen::MatrixXd& X, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                              double sigma_f2);

// Cholesky of a symmetric matrix with the jitter schedule 1e-10 * mean(diag), x10 up to 1e-4.
// Returns the jitter that was added (0 when none was needed); throws GpError otherwise.
double cholesky_jitter(const Eigen::MatrixXd& K, Eigen::LLT<Eigen::MatrixXd>& llt, int* escalations = nullptr);

struct LmlResult {
    double value = 0;       // log p(y | X, theta)
    Eigen::VectorXd grad;   // d value / d [log lambda, log sigma_f2, log sigma_z2]
};

LmlResult log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparams& h);

}  // namespace gpccopf
