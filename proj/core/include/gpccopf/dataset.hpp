#pragma once

#include "gpccopf/grid.hpp"
#include "gpccopf/powerflow.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpccopf {

// (mu, sigma) pairs are the parameters of the underlying normal.
struct SamplingParams {
    double mu_eta_corr = -1.0, sigma_eta_corr = 0.1;
    double mu_eta_unc = 1.0, sigma_eta_unc = 0.05;
    double mu_nu_corr = 0.2, sigma_nu_corr = 0.4;
    double mu_nu_unc = 1.0, sigma_nu_unc = 0.3;
    double psi_lo = 0.8, psi_hi = 1.2;
    double rho = 1.0139;
    std::uint64_t seed = 1;

    void validate() const;
};

class DatasetError : public std::runtime_error {
public:
    enum class Kind { InfeasibleSample, Unstable, ConstantColumn, SchemaMismatch, Io };
    DatasetError(Kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct Scaler {
    Eigen::VectorXd x_mean, x_std, y_mean, y_std;
};

struct SampleSet {
    std::vector<std::string> input_schema, output_schema;
    Eigen::MatrixXd X, Y;
    std::optional<Scaler> scaler;
    int dropped = 0;

    int rows() const { return static_cast<int>(X.rows()); }
    SampleSet subset(const std::vector<int>& rows) const;
};

// Loads and RES only; p_g is filled by sample_generation.
std::vector<InjectionSet> sample_injections(const GridCase& c, const SamplingParams& params, int m_s);

// Two-step generation draw for one sample; psi_out receives the raw psi factors.
Eigen::VectorXd sample_generation(const GridCase& c, const Eigen::VectorXd& p_l, const Eigen::VectorXd& p_rs,
                                  const SamplingParams& params, std::uint64_t sample_index,
                                  Eigen::VectorXd* psi_out = nullptr);

// sample_injections + sample_generation; infeasible rows are skipped and counted.
std::vector<InjectionSet> sample_operating_points(const GridCase& c, const SamplingParams& params, int m_s,
                                                  int* skipped = nullptr);

std::vector<std::string> input_schema(const GridCase& c);
std::vector<std::string> output_schema(const GridCase& c);

Eigen::VectorXd input_vector(const GridCase& c, const InjectionSet& inj);
Eigen::VectorXd output_vector(const GridCase& c, const InjectionSet& inj, const PfSolution& s);

// AC outputs per sample; rows with a divergent power flow are dropped.
SampleSet build_dataset(const GridCase& c, const std::vector<InjectionSet>& samples, double tol = 1e-8);
// Same rows through the lossless DC model: v = 1, q_g = 0, s = |p_dc|.
SampleSet build_dc_dataset(const GridCase& c, const std::vector<InjectionSet>& samples);
Eigen::VectorXd dc_output_vector(const GridCase& c, const InjectionSet& inj);

SampleSet generate_dataset(const GridCase& c, const SamplingParams& params, int m_s, double tol = 1e-8);

// Ordinary least squares y = A x + b per output column.
struct LinearSurrogate {
    Eigen::MatrixXd A;  // n_y x n_x
    Eigen::VectorXd b;
    std::vector<std::string> input_schema, output_schema;

    Eigen::VectorXd predict(const Eigen::VectorXd& x) const { return A * x + b; }
    Eigen::MatrixXd predict_rows(const Eigen::MatrixXd& X) const;
};

LinearSurrogate fit_linear_surrogate(const SampleSet& dc_set);

SampleSet residual_dataset(const SampleSet& ac_set, const LinearSurrogate& lin);

std::pair<SampleSet, Scaler> standardize(const SampleSet& s);
SampleSet unstandardize(const SampleSet& s, const Scaler& sc);

void write_csv(const SampleSet& s, const std::string& path);
SampleSet read_csv(const std::string& path);
std::string scaler_to_json(const Scaler& sc, const SampleSet& s);
Scaler scaler_from_json(const std::string& text);

}  // namespace gpccopf
