#pragma once

#include "gpccopf/gp.hpp"
#include "gpccopf/sparse_gp.hpp"

#include <Eigen/Dense>

#include <vector>

namespace gpccopf {

struct GaussianInput {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    void validate() const;
};

struct GaussianOutput {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
};

// Value, gradient and (optionally) Hessian of one posterior's mean and variance at x.
struct PosteriorDerivs {
    double mu = 0, var = 0;
    Eigen::VectorXd dmu, dvar;
    Eigen::MatrixXd hmu, hvar;
};

PosteriorDerivs posterior_derivs(const OutputPosterior& p, const Eigen::VectorXd& x, bool hessians);

enum class Propagation { TA1, TA2, EM };

// Single-output forms used by the optimisation layer.
void ta1_output(const OutputPosterior& p, const GaussianInput& gin, double& mean, double& var);
void ta2_output(const OutputPosterior& p, const GaussianInput& gin, double& mean, double& var);
void em_output(const OutputPosterior& p, const GaussianInput& gin, double& mean, double& var);

GaussianOutput propagate(const std::vector<OutputPosterior>& post, const GaussianInput& gin, Propagation method);

GaussianOutput ta1(const GpModel& model, const GaussianInput& gin);
GaussianOutput ta2(const GpModel& model, const GaussianInput& gin);
GaussianOutput em(const GpModel& model, const GaussianInput& gin);
GaussianOutput ta1(const SparseGpModel& model, const GaussianInput& gin);

}  // namespace gpccopf
