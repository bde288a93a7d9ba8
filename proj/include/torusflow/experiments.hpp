#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusflow/coupling.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/reflected_spde.hpp"

namespace torusflow {

enum class ExperimentKind { simulate, picard, obstacle, coupling, feller, markov, baseline };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

/// Initial profile: {"type": "constant", "value"}, {"type": "cosine", "mean",
/// "amplitude", "mode"}, {"type": "bump", "center", "width", "height", "floor"}
/// or {"type": "file", "path"} (CSV `u,value` on the same grid).
struct ProfileSpec {
    nlohmann::json spec;
    PeriodicField build(const GridSpec& grid, const std::filesystem::path& base_dir) const;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::simulate;
    std::size_t n_cells = 64;
    double dt = 1e-4;
    double T = 0.01;
    nlohmann::json kernel;  // {"type": constant|trigonometric|file, ...}
    SolverConfig solver;
    ProfileSpec phi;
    double x = 0.0;
    ProfileSpec psi;        // second initial condition (coupling, feller)
    double y = 0.0;
    std::size_t replicas = 1;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::filesystem::path output;
    std::filesystem::path base_dir;  // directory of the config file
    nlohmann::json extra;            // experiment-specific block (coupling, feller, ...)

    /// Parses and validates; throws ValidationError naming the rule.
    static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    KernelSpec build_kernel() const;
    GridSpec grid() const { return GridSpec(n_cells); }
};

struct RunOptions {
    std::optional<std::size_t> replicas;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> output;
    bool quiet = false;
};

/// Checks everything that can be checked without running: files, ranges,
/// stability rule, experiment-specific minimums. Returns advisory warnings.
std::vector<std::string> validate(const ExperimentConfig& cfg);

/// Runs the experiment and writes CSV outputs plus summary.json into
/// cfg.output. Returns the summary.
nlohmann::json run_experiment(const ExperimentConfig& cfg, bool quiet = true);

/// Re-aggregates `replicas.csv` and `results.json` in a results directory into
/// a versioned summary. Partial replica sets are flagged.
nlohmann::json emit_summary(const std::filesystem::path& results_dir);

inline constexpr int kSummarySchemaVersion = 1;

/// Full CLI flow for `run <config>`: 0 success, 1 runtime failure, 2 validation failure.
int run_cli(const std::filesystem::path& config_path, const RunOptions& options);

}  // namespace torusflow
