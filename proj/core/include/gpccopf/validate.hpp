#pragma once

#include "gpccopf/ccopf.hpp"
#include "gpccopf/dataset.hpp"
#include "gpccopf/gp.hpp"
#include "gpccopf/grid.hpp"
#include "gpccopf/powerflow.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpccopf {

class ValidateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Affine recourse: p_g + alpha * Omega, Omega = sum(w_l) - sum(w_rs); loads and RES
// shift by their fluctuation at constant power factor.
InjectionSet apply_recourse(const GridCase& c, const Eigen::VectorXd& p_g, const Eigen::VectorXd& alpha,
                            const Forecast& f, const Eigen::VectorXd& w_l, const Eigen::VectorXd& w_rs);

struct Metrics {
    double mae = 0, mse = 0, rmse = 0, msle = 0;
    bool msle_valid = true;  // false when an argument is not positive
};

Metrics regression_metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Per-column metrics; rmse_avg is the mean of the column RMSEs.
struct MetricsTable {
    std::vector<Metrics> per_output;
    double rmse_avg = 0, mae_avg = 0, mse_avg = 0;
};

MetricsTable regression_metrics(const Eigen::MatrixXd& Y_true, const Eigen::MatrixXd& Y_pred);

struct ValidationReport {
    int n_samples = 0;
    int n_divergent = 0;
    bool valid = true;  // false when more than 5% of the power flows diverge
    std::vector<std::string> constraint_names;  // "<name>:lo" / "<name>:hi"
    Eigen::VectorXd violation_rate;
    double overall_rate = 0;
    std::vector<std::string> output_schema;
    Eigen::VectorXd y_nominal;  // AC outputs at the forecast
    Eigen::VectorXd lambda_upper, lambda_lower;
    double margin_eps = 0.0027;
    double cost_mean = 0, cost_std = 0;
};

struct ValidationOptions {
    int n = 1000;
    std::uint64_t seed = 1;
    double margin_eps = 0.0027;  // quantile level of the empirical margins (3 std)
    std::string samples_csv;     // per-sample outputs when non-empty
};

ValidationReport monte_carlo_validate(const GridCase& c, const Eigen::VectorXd& p_g, const Eigen::VectorXd& alpha,
                                      const Forecast& f, const UncertaintySpec& u, const ValidationOptions& opts = {});
ValidationReport monte_carlo_validate(const GridCase& c, const CcOpfSolution& sol, const Forecast& f,
                                      const UncertaintySpec& u, const ValidationOptions& opts = {});

std::string report_to_json(const ValidationReport& r);
ValidationReport report_from_json(const std::string& text);

struct CorruptionReport {
    int target_bus = 0;
    double gap_lo_mw = 0, gap_hi_mw = 0;
    double dropped_fraction = 0;
    int n_train = 0, n_test = 0;
    double rmse_full = 0, rmse_hybrid = 0;
};

struct CorruptionOptions {
    int n_samples = 400;  // drawn before the gap is cut out
    int n_test = 50;      // held-out samples inside the gap
    int max_train = 150;  // cap on the corrupted training set
    GpConfig gp;
};

// Trains a full and a hybrid GP on data with a load gap and scores both inside the gap.
CorruptionReport corruption_experiment(const GridCase& c, const SamplingParams& params, int target_bus,
                                       double gap_lo_mw, double gap_hi_mw, const CorruptionOptions& opts = {});

}  // namespace gpccopf
