#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "torusflow/interaction.hpp"
#include "torusflow/noise.hpp"
#include "torusflow/reflected_spde.hpp"

namespace torusflow {

enum class CouplingMode {
    frozen,  // the copy uses the reference's reaction β(g)g and M-drift
    live,    // the copy uses its own coefficients
};

CouplingMode parse_coupling_mode(const std::string& name);

struct CouplingConfig {
    double T = 0.1;
    double delta_cap = 0.0;          // closing window before T; 0 means one step
    double merge_threshold = 1e-12;  // merge early once both distances fall below
    std::size_t replicas = 100;
    CouplingMode mode = CouplingMode::frozen;
    std::size_t threads = 0;         // 0 = hardware concurrency
};

/// log dQ/dP for the law of the copy, accumulated step by step.
struct GirsanovLedger {
    double log_density = 0.0;
    double field_integral = 0.0;       // Σ <γ, dW>
    double scalar_integral = 0.0;      // Σ γ̃ dB
    double quadratic_variation = 0.0;  // Σ dt (||γ||² + γ̃²)
    bool clamped = false;              // |log_density| exceeded 700
    std::vector<double> increments;    // per-step contribution

    /// Sum of increments over steps [from, to).
    double partial(std::size_t from, std::size_t to) const;
    double density() const;
};

struct DistanceSample {
    double t;
    double g_distance;  // ||g - g̃||_{L2}
    double M_distance;  // |M - M̃|
};

struct CouplingResult {
    bool coupled = false;
    std::optional<double> merge_time;
    std::vector<DistanceSample> distance_path;  // t_0 .. t_N
    GirsanovLedger ledger;
    double bridge_integral = 0.0;  // Σ dt ||g - g̃||² / ξ²
    double initial_distance_sq = 0.0;
    /// max_t (||δ_t||² - ||δ_0||² ((T-t)/T)²) / ||δ_0||², and the same for M.
    double bound_excess_g = 0.0;
    double bound_excess_M = 0.0;
    CoupledState reference{PeriodicField(GridSpec(2)), 0.0, 0.0};  // (g_T, M_T)
    CoupledState copy{PeriodicField(GridSpec(2)), 0.0, 0.0};       // (g̃_T, M̃_T)
};

/// Reference from (phi, x) and copy from (psi, y) on shared noise; the copy
/// carries the bridge drifts -(g̃ - g)/ξ and -(M̃ - M)/ξ with ξ = T - t.
CouplingResult run_coupled_pair(const PeriodicField& phi, double x, const PeriodicField& psi,
                                double y, const KernelSpec& kernel, const CouplingConfig& cfg,
                                const SolverConfig& solver, const SeedSpec& seed);

double girsanov_log_density(const CouplingResult& result);

/// Bounded functional F(g, M) with known sup norm.
struct Functional {
    std::string id;
    double sup_norm;
    std::function<double(const PeriodicField& g, double M)> eval;
};

Functional functional_by_name(const std::string& id);

struct TvBound {
    double pinsker_tv = 0.0;        // ½ sqrt(E QV) >= d_TV
    double functional_bound = 0.0;  // sqrt(E QV) >= |P_T F(φ) - P_T F(ψ)| for ||F|| <= 1
    double direct_tv = 0.0;         // ½ E|1 - Z|
    double mean_qv = 0.0;
    double mean_density = 0.0;
    double density_stderr = 0.0;
    double functional_gap = 0.0;    // E[F (1 - Z)] for the supplied functional
    double functional_gap_stderr = 0.0;
    double merged_fraction = 0.0;
    std::size_t replicas = 0;
    std::vector<CouplingResult> runs;  // kept only when requested
};

TvBound tv_bound_estimate(const PeriodicField& phi, double x, const PeriodicField& psi, double y,
                          const KernelSpec& kernel, const CouplingConfig& cfg,
                          const SolverConfig& solver, const SeedSpec& seed,
                          const Functional& functional, bool keep_runs = false);

enum class FellerEstimator {
    independent,   // separate noise for the two initial conditions
    common_noise,  // both runs share one noise path per replica
    girsanov,      // E[F(X^φ) (1 - Z)] from the coupled pair
};

FellerEstimator parse_feller_estimator(const std::string& name);

struct FellerEstimate {
    std::string functional_id;
    double estimate = 0.0;  // |P_T F(φ,x) - P_T F(ψ,y)|
    double signed_estimate = 0.0;
    double mc_stderr = 0.0;
    double input_distance = 0.0;  // ||φ - ψ||_{L2} + |x - y|
    double input_d12 = 0.0;       // d_{1,2} of the reconstructed measures
    std::vector<double> samples;  // per-replica contributions
};

FellerEstimate strong_feller_probe(const Functional& F, const PeriodicField& phi, double x,
                                   const PeriodicField& psi, double y, const KernelSpec& kernel,
                                   const CouplingConfig& cfg, const SolverConfig& solver,
                                   const SeedSpec& seed,
                                   FellerEstimator estimator = FellerEstimator::independent);

struct MarkovShiftResult {
    std::vector<std::string> panel;  // M, g_l2, g_cos1, eta_total
    std::vector<double> p_values;
    std::vector<double> statistics;
    double min_p = 1.0;
};

/// Compares (g, M) after running t from time s (noise of the first s/dt steps
/// skipped) with fresh runs of length t_fresh (default t) on other streams.
MarkovShiftResult markov_shift_test(const PeriodicField& phi, double x, double s, double t,
                                    const KernelSpec& kernel, const SolverConfig& solver,
                                    const SeedSpec& seed, std::size_t replicas,
                                    std::optional<double> t_fresh = std::nullopt,
                                    std::size_t threads = 0);

/// Rows `replica,merge_time,final_g_dist,final_M_dist,log_density`.
void write_coupling_csv(std::ostream& os, const std::vector<CouplingResult>& runs);

}  // namespace torusflow
