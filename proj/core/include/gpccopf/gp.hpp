#pragma once

#include "gpccopf/dataset.hpp"
#include "gpccopf/kernel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace gpccopf {

// One output's posterior in physical units:
//   mu(x) = mean_offset + k(x)^T weights,  sigma2(x) = sigma_f2 - k(x)^T M k(x)
// with k built from hyp over the rows of basis and M = A^-T (I - B^-T B^-1) A^-1 for
// lower-triangular factors A, B (B empty for a full GP). Full and sparse models both
// reduce to this; M is only ever applied through triangular solves.
struct OutputPosterior {
    Hyperparams hyp;
    Eigen::MatrixXd basis;
    Eigen::VectorXd weights;
    Eigen::MatrixXd chol_a, chol_b;
    double mean_offset = 0;

    void predict(const Eigen::VectorXd& x, double& mu, double& var) const;
    // k^T M k
    double quad(const Eigen::VectorXd& k) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& k) const;
    // J^T M J
    Eigen::MatrixXd quad(const Eigen::MatrixXd& J) const;
    // tr(M Q) for symmetric Q
    double trace_with(const Eigen::MatrixXd& Q) const;
    // dense M, for tests
    Eigen::MatrixXd var_matrix() const;
};

struct GpConfig {
    int restarts = 5;
    double init_lo = -2.0, init_hi = 2.0;  // log-uniform initialisation range
    int max_iters = 200;
    std::uint64_t seed = 0;
};

struct GpOutput {
    Hyperparams hyp;
    Eigen::MatrixXd L;     // chol(K + sigma_z2 I) in standardized units
    Eigen::VectorXd beta;  // (K + sigma_z2 I)^-1 y
    double nll = 0;
};

struct GpModel {
    std::vector<std::string> input_schema, output_schema;
    Scaler scaler;
    Eigen::MatrixXd X;  // standardized training inputs
    std::vector<GpOutput> outputs;

    int n_x() const { return static_cast<int>(X.cols()); }
    int n_y() const { return static_cast<int>(outputs.size()); }

    // physical in, physical out; variance excludes observation noise
    void predict(const Eigen::VectorXd& x, Eigen::VectorXd& mu, Eigen::VectorXd& var) const;
    Eigen::MatrixXd predict_mean_rows(const Eigen::MatrixXd& Xphys) const;

    std::vector<OutputPosterior> posteriors() const;
};

// Clamp rule shared by every predictor.
double clamp_variance(double var, double scale);

// Fit one standardized output; exposed for tests.
GpOutput fit_output(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, const GpConfig& cfg, std::uint64_t stream);
GpOutput make_output(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, const Hyperparams& h);

// Standardizes internally unless the set already carries a scaler.
GpModel train(const SampleSet& set, const GpConfig& cfg);

// Build a model with given standardized-space hyperparameters (no optimisation).
GpModel build_model(const SampleSet& set, const std::vector<Hyperparams>& hyps);

std::string model_to_json(const GpModel& m);
GpModel model_from_json(const std::string& text);

}  // namespace gpccopf
