#pragma once

#include "gpccopf/gp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace gpccopf {

struct SparseConfig {
    int m_m = 30;
    bool pin_inducing = false;
    GpConfig gp;
    // standardized initial inducing inputs; k-means centres when absent
    std::optional<Eigen::MatrixXd> inducing;
    // standardized-space hyperparameters per output; skips optimisation of theta when set
    std::vector<Hyperparams> fixed_hyper;
};

// Variational posterior (Titsias) for one output, standardized units.
struct SparseOutput {
    Hyperparams hyp;
    Eigen::MatrixXd Z;    // inducing inputs
    Eigen::MatrixXd Lm;   // chol(K_mm)
    Eigen::MatrixXd LB;   // chol(I + L^-1 K_mn K_nm L^-T / sigma^2)
    Eigen::VectorXd w;    // sigma^-2 Gamma K_mn y
    Eigen::VectorXd mu_m; // variational mean of u
    Eigen::MatrixXd A_m;  // variational covariance of u
    Eigen::MatrixXd Wt;   // predictive variance is sigma_f^2 - |Wt k|^2
    double elbo = 0;
};

struct SparseGpModel {
    std::vector<std::string> input_schema, output_schema;
    Scaler scaler;
    std::vector<SparseOutput> outputs;

    int n_y() const { return static_cast<int>(outputs.size()); }
    int m_m() const { return outputs.empty() ? 0 : static_cast<int>(outputs[0].Z.rows()); }

    void predict(const Eigen::VectorXd& x, Eigen::VectorXd& mu, Eigen::VectorXd& var) const;
    Eigen::MatrixXd predict_mean_rows(const Eigen::MatrixXd& Xphys) const;
    std::vector<OutputPosterior> posteriors() const;
};

struct ElboResult {
    double value = 0;
    Eigen::VectorXd grad_theta;  // w.r.t. [log lambda, log sigma_f2, log sigma_z2]
    Eigen::MatrixXd grad_Z;
};

// Collapsed bound log N(y | 0, Q + s2 I) - tr(K - Q) / (2 s2), Q = K_nm K_mm^-1 K_mn.
ElboResult elbo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::MatrixXd& Z, const Hyperparams& h);

Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& X, int k, std::uint64_t seed, int iters = 50);

SparseOutput make_sparse_output(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, const Eigen::MatrixXd& Z,
                                const Hyperparams& h);

SparseGpModel train_sparse(const SampleSet& set, const SparseConfig& cfg);

std::string sparse_model_to_json(const SparseGpModel& m);
SparseGpModel sparse_model_from_json(const std::string& text);

}  // namespace gpccopf
