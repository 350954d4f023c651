#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace gpccopf {

// min f(x)  s.t.  c_eq(x) = 0,  c_in(x) >= 0
struct NlpProblem {
    int n = 0, m_eq = 0, m_in = 0;
    std::function<void(const Eigen::VectorXd&, double&, Eigen::VectorXd&)> objective;
    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)> eq;
    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)> ineq;
    // Hessian of L = f - r^T c_eq - q^T c_in; damped BFGS when empty
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&)> hessian;
};

struct NlpOptions {
    double tol = 1e-5;
    int max_iter = 300;
    double psi0 = 0.1;
    double psi_shrink = 0.2;
    std::string log_path;  // iteration CSV when non-empty
};

enum class NlpStatus { Optimal, MaxIter, Infeasible, NumericFailure };

const char* to_string(NlpStatus s);

struct KktBlocks {
    double stationarity = 0, complementarity = 0, equality = 0, inequality = 0;
    double max() const;
};

struct NlpSolution {
    Eigen::VectorXd x, r, q, s;
    NlpStatus status = NlpStatus::MaxIter;
    double kkt_residual = 0;
    double f = 0;
    double psi = 0;
    int iterations = 0;
};

// Infinity norms of the four blocks: grad f - J_eq^T r - J_in^T q,  S q - psi e,  c_eq,  c_in - s.
KktBlocks kkt_residual(const NlpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                       const Eigen::VectorXd& r, const Eigen::VectorXd& q, double psi);

NlpSolution solve(const NlpProblem& p, const Eigen::VectorXd& x0, const NlpOptions& opts = {});

// Central differences of the Lagrangian gradient built from the problem's own Jacobians.
Eigen::MatrixXd fd_lagrangian_hessian(const NlpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& r,
                                      const Eigen::VectorXd& q, double h = 1e-6);

}  // namespace gpccopf
