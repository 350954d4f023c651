#pragma once

#include <ceres/ceres.h>

#include <Eigen/Dense>

#include <functional>
#include <limits>

namespace gpccopf::detail {

// value/gradient callback; returns false when the point is not evaluable
using Objective = std::function<bool(const Eigen::VectorXd&, double&, Eigen::VectorXd&)>;

class CeresObjective : public ceres::FirstOrderFunction {
public:
    CeresObjective(Objective f, int n) : f_(std::move(f)), n_(n) {}

    bool Evaluate(const double* p, double* cost, double* grad) const override {
        Eigen::Map<const Eigen::VectorXd> x(p, n_);
        Eigen::VectorXd g(n_);
        double v;
        if (!f_(x, v, g) || !std::isfinite(v) || !g.allFinite()) return false;
        *cost = v;
        if (grad) Eigen::Map<Eigen::VectorXd>(grad, n_) = g;
        return true;
    }
    int NumParameters() const override { return n_; }

private:
    Objective f_;
    int n_;
};

// L-BFGS with a Wolfe line search; x is updated in place, returns the final value
// (infinity when even the start point cannot be evaluated).
inline double minimize_lbfgs(const Objective& f, Eigen::VectorXd& x, int max_iters) {
    double v0;
    Eigen::VectorXd g0(x.size());
    if (!f(x, v0, g0) || !std::isfinite(v0)) return std::numeric_limits<double>::infinity();

    ceres::GradientProblem problem(new CeresObjective(f, static_cast<int>(x.size())));
    ceres::GradientProblemSolver::Options opts;
    opts.line_search_direction_type = ceres::LBFGS;
    opts.max_num_iterations = max_iters;
    opts.logging_type = ceres::SILENT;
    opts.minimizer_progress_to_stdout = false;
    opts.function_tolerance = 1e-10;
    opts.gradient_tolerance = 1e-8;
    opts.parameter_tolerance = 1e-10;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(opts, problem, x.data(), &summary);

    double v;
    Eigen::VectorXd g(x.size());
    if (!f(x, v, g)) return std::numeric_limits<double>::infinity();
    return v;
}

}  // namespace gpccopf::detail
