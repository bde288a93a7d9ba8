#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "torusflow/grid.hpp"
#include "torusflow/heat.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/noise.hpp"
#include "torusflow/obstacle.hpp"
#include "torusflow/state.hpp"

namespace torusflow {

enum class StepMode { projected, penalised };
enum class HeatScheme { exponential, explicit_euler };

struct SolverConfig {
    double dt = 1e-3;
    std::size_t n_steps = 0;
    StepMode mode = StepMode::projected;
    double epsilon = 1e-4;
    MDriftVariant m_drift_variant = MDriftVariant::unweighted;
    HeatScheme heat = HeatScheme::exponential;
    Spectrum spectrum = Spectrum::discrete;
    double noise_amplitude = 1.0;  // σ, multiplies dW and dB
    double diffusion = 1.0;        // ν, coefficient of Δ; 0 with σ = 0 gives the transport ODE
    std::size_t noise_refinement = 1;
    std::size_t snapshot_stride = 1;  // 0 keeps only the initial and final states
    double tau_threshold = std::numeric_limits<double>::infinity();  // on ||g||²
    bool record_ledger = true;
};

StepMode parse_step_mode(const std::string& name);
HeatScheme parse_heat_scheme(const std::string& name);

/// Throws ValidationError for inconsistent settings; returns advisory warnings.
std::vector<std::string> validate_solver_config(const SolverConfig& cfg, const GridSpec& grid);

/// Heat step multiplier of the configured scheme: e^{-νλ dt} or 1 - νλ dt.
std::vector<double> heat_step_multiplier(const SpectralPlan& plan, const SolverConfig& cfg);

/// Predictor p = S g + dt β g + σ dW / dx, shared by both step modes.
void predictor(const SpectralPlan& plan, std::span<const double> heat_mult,
               std::span<const double> g, std::span<const double> beta,
               std::span<const double> dW, const SolverConfig& cfg, std::span<double> p);

/// Replaces the predictor by the new g in place (projection or implicit
/// penalisation) and writes the increments (g - p)·dx into `eta`.
void reflect_predictor(std::span<double> p, std::span<double> eta, const SolverConfig& cfg,
                       double dx);

CoupledState step_penalised(const CoupledState& state, const PeriodicField& beta, double m_drift,
                            std::span<const double> dW, double dB, const SolverConfig& cfg,
                            const SpectralPlan& plan);

struct ProjectedStep {
    CoupledState state;
    std::vector<double> eta;  // reflection increment per cell
};

ProjectedStep step_projected(const CoupledState& state, const PeriodicField& beta, double m_drift,
                             std::span<const double> dW, double dB, const SolverConfig& cfg,
                             const SpectralPlan& plan);

/// Reusable single-path integrator. Not thread-safe; use one per replica.
class Stepper {
public:
    Stepper(GridSpec grid, KernelSpec kernel, SolverConfig cfg);

    const SolverConfig& config() const noexcept { return cfg_; }
    const SpectralPlan& plan() const noexcept { return plan_; }
    const DriftEvaluator& drift() const noexcept { return drift_; }
    std::span<const double> heat_multiplier() const noexcept { return heat_mult_; }

    /// β and m at the current state (β into an internal buffer).
    std::span<const double> evaluate(const CoupledState& s, double& m);

    /// One step with the configured mode. `eta` receives the reflection
    /// increment (g_new - p)·dx per cell.
    void advance(CoupledState& s, std::span<const double> dW, double dB, std::span<double> eta);

private:
    GridSpec grid_;
    SolverConfig cfg_;
    SpectralPlan plan_;
    DriftEvaluator drift_;
    std::vector<double> heat_mult_;
    std::vector<double> beta_;
    std::vector<double> p_;
};

struct Trajectory {
    GridSpec grid;
    SolverConfig config;
    SeedSpec noise_ref;
    std::vector<CoupledState> states;  // every snapshot_stride steps, plus the final state
    std::vector<double> M_path;        // all n_steps + 1 values
    std::vector<double> g_l2_path;     // ||g_t||_{L2}, all n_steps + 1 values
    ReflectionLedger ledger;           // empty when record_ledger is off
    double eta_total = 0.0;
    std::optional<double> tau_time;    // first time ||g||² reached tau_threshold

    const CoupledState& final_state() const { return states.back(); }
    double sup_g_l2_squared() const noexcept;
};

/// Integrates the reflected system from (phi, x) over n_steps = T / dt steps.
Trajectory simulate(const PeriodicField& phi, double x, double T, const KernelSpec& kernel,
                    const SolverConfig& cfg, const SeedSpec& seed);

/// Same, driven by a given noise path (its dt must equal cfg.dt).
Trajectory simulate_with_noise(const PeriodicField& phi, double x, const KernelSpec& kernel,
                               const SolverConfig& cfg, const NoiseIncrement& noise);

/// Noise path exactly as simulate() draws it for this config and seed.
NoiseIncrement draw_path_noise(const GridSpec& grid, const SolverConfig& cfg, const SeedSpec& seed);

struct PicardResult {
    Trajectory trajectory;          // the last iterate
    std::vector<double> distances;  // sup over t, x of |g^k - g^{k-1}|, k = 2..n_iter
    bool diverged = false;          // distance grew 3 times in a row
    std::optional<std::size_t> converged_after;  // first k with |g^{k+1} - g^k| <= 1e-12
};

/// Successive approximation with frozen coefficients: f^k solves the linear
/// heat equation with forcing β(g^{k-1}) g^{k-1} and the noise, z^k is the
/// obstacle solution for v = f^k, g^k = f^k + z^k, and M^k follows the SDE with
/// drift m(g^{k-1}). Iterate 1 freezes at the initial data.
PicardResult picard_solve(const PeriodicField& phi, double x, double T, const KernelSpec& kernel,
                          const SolverConfig& cfg, const SeedSpec& seed, std::size_t n_iter);

struct SolutionReport {
    double max_residual = 0.0;
    std::vector<double> residuals;  // one per test function
    double complementarity = 0.0;   // Σ g_{s+1} · dη_s
    double min_g = 0.0;
    double min_eta = 0.0;
};

/// Weak-form residuals |<g_T,φ> - <g_0,φ> - Σ dt <g_s,νΔφ> - Σ dt <β_s g_s,φ>
/// - σ Σ φ·dW - Σ φ·dη| with left-point sums, recomputing β from the states
/// and the noise from the trajectory's seed. Needs snapshot_stride = 1 and a
/// recorded ledger. Pass `noise` for trajectories from simulate_with_noise.
SolutionReport check_solution(const Trajectory& traj, const KernelSpec& kernel,
                              const std::vector<PeriodicField>& tests,
                              const NoiseIncrement* noise = nullptr);

/// cos(2πkx) and sin(2πkx) for k = 0..max_mode (k = 0 gives the constant).
std::vector<PeriodicField> trig_test_functions(const GridSpec& grid, int max_mode);

/// `t,M` rows for every step.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
/// `t,x,g` rows for every snapshot.
void write_snapshots_csv(std::ostream& os, const Trajectory& traj);

}  // namespace torusflow
