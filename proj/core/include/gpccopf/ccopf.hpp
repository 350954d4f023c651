#pragma once

#include "gpccopf/dataset.hpp"
#include "gpccopf/gp.hpp"
#include "gpccopf/grid.hpp"
#include "gpccopf/nlp.hpp"
#include "gpccopf/propagate.hpp"
#include "gpccopf/sparse_gp.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpccopf {

class CcOpfError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Standard deviations of the injection fluctuations (p.u.) and violation probabilities.
struct UncertaintySpec {
    Eigen::VectorXd sigma_l, sigma_rs;
    double eps_pg = 0.001, eps_q = 0.025, eps_v = 0.025, eps_s = 0.025;

    double trace() const { return sigma_l.squaredNorm() + sigma_rs.squaredNorm(); }
    void validate() const;
};

// Mean loads and RES outputs (p.u.).
struct Forecast {
    Eigen::VectorXd p_l, p_rs;
};

Forecast reference_forecast(const GridCase& c);
UncertaintySpec default_uncertainty(const Forecast& f, double load_frac = 0.15, double res_frac = 0.30);

// r = Phi^-1(1 - eps)
double quantile(double eps);

// Sigma_x = M Sigma_w M^T with M = [alpha s^T; I]. Rows of M for the generators carry
// alpha_gen; s is +1 for a load fluctuation and -1 for a RES fluctuation, since
// recourse covers the net mismatch Omega = sum(w_l) - sum(w_rs).
Eigen::MatrixXd input_covariance(const Eigen::VectorXd& alpha_gen, const Eigen::VectorXd& sign,
                                 const Eigen::VectorXd& sigma);
// Same for the case's input schema: alpha over all gens, only controllable ones enter x.
Eigen::MatrixXd input_covariance(const GridCase& c, const Eigen::VectorXd& alpha, const UncertaintySpec& u);

struct Band {
    Eigen::VectorXd lo, hi;
};

// y_min + r sigma <= mu <= y_max - r sigma; throws naming the first empty band.
Band reformulate_margins(const Band& bounds, const Eigen::VectorXd& sigma2, const Eigen::VectorXd& r,
                         const std::vector<std::string>& names);
// p_min + r alpha sqrt(tr) <= p_g <= p_max - r alpha sqrt(tr)
Band generator_margins(const GridCase& c, const Eigen::VectorXd& alpha, double trace, double r_pg);

// Physical limits of every output in the schema (lower flow limit is -s_max).
Band output_bounds(const GridCase& c, const std::vector<std::string>& output_schema);
// Quantile per output from its eps.
Eigen::VectorXd output_quantiles(const std::vector<std::string>& output_schema, const UncertaintySpec& u);

// sum c2 (p_g^2 + tr alpha^2) + c1 p_g + c0, in $
double ccopf_cost(const GridCase& c, const Eigen::VectorXd& p_g, const Eigen::VectorXd& alpha, double trace);

// Constraint surrogate: GP posteriors, optionally on top of a linear map (hybrid).
struct Surrogate {
    std::vector<std::string> input_schema, output_schema;
    std::vector<OutputPosterior> gp;
    std::optional<LinearSurrogate> lin;
    Propagation method = Propagation::TA1;
};

Surrogate full_surrogate(const GpModel& m, Propagation method);
// Sparse models propagate with TA1 only.
Surrogate full_surrogate(const SparseGpModel& m, Propagation method);
Surrogate hybrid_surrogate(const LinearSurrogate& lin, const GpModel& resid);
Surrogate hybrid_surrogate(const LinearSurrogate& lin, const SparseGpModel& resid);

// Output moments at input moments (mu_x, Sigma_x).
GaussianOutput surrogate_moments(const Surrogate& s, const Eigen::VectorXd& mu_x, const Eigen::MatrixXd& cov_x);

// Decision vector is [p_g (all gens), alpha (all gens)].
struct CcOpfProblem {
    NlpProblem nlp;
    GridCase grid;
    Surrogate model;
    Forecast forecast;
    UncertaintySpec uncertainty;
    Eigen::VectorXd r_out;
    double r_pg = 0;
    double cost_scale = 1e-3;  // solver sees k$

    int n_gen() const { return grid.n_gen(); }
    Eigen::VectorXd input_mean(const Eigen::VectorXd& p_g) const;
};

CcOpfProblem build_full_problem(const GridCase& c, const GpModel& model, const Forecast& f, const UncertaintySpec& u,
                                Propagation method = Propagation::TA1);
CcOpfProblem build_hybrid_problem(const GridCase& c, const LinearSurrogate& lin, const GpModel& resid,
                                  const Forecast& f, const UncertaintySpec& u);
CcOpfProblem build_hybrid_problem(const GridCase& c, const LinearSurrogate& lin, const SparseGpModel& resid,
                                  const Forecast& f, const UncertaintySpec& u);
CcOpfProblem build_problem(const GridCase& c, Surrogate model, const Forecast& f, const UncertaintySpec& u);

struct CcOpfSolution {
    Eigen::VectorXd p_g, alpha;
    Eigen::VectorXd mu, sigma2;
    Eigen::VectorXd lambda_out, lambda_pg;
    std::vector<std::string> output_schema;
    double cost = 0;
    NlpStatus status = NlpStatus::MaxIter;
    double kkt_residual = 0;
    int iterations = 0;
    double solve_time = 0;
};

// DC economic dispatch at the forecast with uniform alpha.
Eigen::VectorXd default_start(const CcOpfProblem& p);

CcOpfSolution solve_cc_opf(const CcOpfProblem& p, const Eigen::VectorXd& x0, const NlpOptions& opts = {});
CcOpfSolution solve_cc_opf(const CcOpfProblem& p, const NlpOptions& opts = {});

std::string solution_to_json(const CcOpfSolution& s, bool canonical = false);
CcOpfSolution solution_from_json(const std::string& text);

// Deterministic AC-OPF at mean injections.
struct AcOpfResult {
    Eigen::VectorXd p_g, q_g, v, theta;
    double cost = 0;
    NlpStatus status = NlpStatus::MaxIter;
    double kkt_residual = 0;
};

// Decision vector [theta (non-slack buses), v, p_g, q_g]; x0 is a power-flow warm start.
struct AcOpfProblem {
    NlpProblem nlp;
    Eigen::VectorXd x0;
    std::function<AcOpfResult(const NlpSolution&)> unpack;
};

AcOpfProblem build_acopf_problem(const GridCase& c, const Forecast& f);
AcOpfResult solve_deterministic_acopf(const GridCase& c, const Forecast& f, const NlpOptions& opts = {});

// Equal-lambda dispatch of a lossless system with box limits; throws if demand is outside capacity.
Eigen::VectorXd economic_dispatch(const GridCase& c, double demand);

}  // namespace gpccopf
