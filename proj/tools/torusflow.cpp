#include <iostream>

#include <CLI11.hpp>

#include "torusflow/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Reflected SPDE experiments on the torus"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    std::string config;
    std::size_t replicas = 0;
    std::uint64_t seed = 0;
    std::string out;
    bool quiet = false;
    run->add_option("config", config, "Path to the experiment config")->required();
    auto* replicas_opt = run->add_option("--replicas", replicas, "Override the replica count")
                             ->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("--seed", seed, "Override the master seed");
    auto* out_opt = run->add_option("--out", out, "Output directory");
    run->add_flag("--quiet", quiet, "Suppress progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI usage errors are validation failures.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    torusflow::RunOptions options;
    if (*replicas_opt) options.replicas = replicas;
    if (*seed_opt) options.seed = seed;
    if (*out_opt) options.output = out;
    options.quiet = quiet;
    return torusflow::run_cli(config, options);
}
