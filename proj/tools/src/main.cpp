#include "gpccopf_cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"GP-based chance-constrained AC-OPF pipeline"};
    app.require_subcommand(1);
    gpccopf::cli::Options opts;
    std::uint64_t seed = 0;

    const std::pair<const char*, const char*> commands[] = {
        {"dataset", "sample operating points and write dataset.csv"},
        {"train", "fit the GP surrogate and write model.json"},
        {"solve", "solve the chance-constrained OPF and write solution.json"},
        {"validate", "Monte-Carlo check against the AC power flow, writes report.json"},
        {"pipeline", "dataset, train, solve and validate in sequence"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config, "run configuration (JSON)")->required();
        sub->add_option("--out", opts.out, "artifact directory, overrides output_dir");
        sub->add_flag("--canonical", opts.canonical, "omit timing fields so reruns are byte-identical");
        sub->add_option("--seed", seed, "overrides every seed in the config");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    const CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) opts.seed = seed;
    return gpccopf::cli::run(sub->get_name(), opts, std::cerr);
}
