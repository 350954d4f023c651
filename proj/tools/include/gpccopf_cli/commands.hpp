#pragma once

#include "gpccopf/ccopf.hpp"
#include "gpccopf/dataset.hpp"
#include "gpccopf/gp.hpp"
#include "gpccopf/propagate.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

namespace gpccopf::cli {

// Exit codes: 1 config, 2 missing or stale upstream artifact, 3 numeric failure.
class CliError : public std::runtime_error {
public:
    CliError(int code, std::string kind, const std::string& what, std::string path = {})
        : std::runtime_error(what), code_(code), kind_(std::move(kind)), path_(std::move(path)) {}
    int code() const { return code_; }
    const std::string& kind() const { return kind_; }
    const std::string& path() const { return path_; }

private:
    int code_;
    std::string kind_, path_;
};

enum class Mode { Full, Hybrid };

struct RunConfig {
    std::string case_path;  // resolved against the config file's directory
    SamplingParams sampling;
    int m_s = 75;
    Mode mode = Mode::Full;
    std::optional<int> sparse_m;
    Propagation propagation = Propagation::TA1;
    GpConfig gp;
    double load_frac = 0.15, res_frac = 0.30;
    std::optional<Eigen::VectorXd> sigma_l, sigma_rs;  // p.u.; override the fractions
    double eps_pg = 0.001, eps_q = 0.025, eps_v = 0.025, eps_s = 0.025;
    int n_mc = 1000;
    std::uint64_t validation_seed = 1;
    std::string output_dir;
    std::string config_hash;
};

RunConfig parse_config(const std::string& text, const std::string& base_dir);
RunConfig load_config(const std::string& path);

struct Options {
    std::string config;
    std::string out;  // overrides output_dir
    bool canonical = false;
    std::optional<std::uint64_t> seed;  // overrides the sampling, training and validation seeds
};

// Applies the option overrides.
RunConfig resolve(const Options& opts);

UncertaintySpec uncertainty(const RunConfig& cfg, const GridCase& c);

void cmd_dataset(const RunConfig& cfg, const Options& opts);
void cmd_train(const RunConfig& cfg, const Options& opts);
void cmd_solve(const RunConfig& cfg, const Options& opts);
void cmd_validate(const RunConfig& cfg, const Options& opts);
void cmd_pipeline(const RunConfig& cfg, const Options& opts);

// Runs one subcommand; on failure prints an error JSON to err and returns the exit code.
int run(const std::string& command, const Options& opts, std::ostream& err);

}  // namespace gpccopf::cli
