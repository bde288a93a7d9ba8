#include "torusflow/reflected_spde.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace torusflow {

StepMode parse_step_mode(const std::string& name) {
    if (name == "projected") return StepMode::projected;
    if (name == "penalised" || name == "penalized") return StepMode::penalised;
    throw ValidationError("solver.mode", "unknown solver mode '" + name +
                                             "' (expected projected or penalised)");
}

HeatScheme parse_heat_scheme(const std::string& name) {
    if (name == "exponential") return HeatScheme::exponential;
    if (name == "explicit" || name == "explicit_euler") return HeatScheme::explicit_euler;
    throw ValidationError("solver.heat", "unknown heat scheme '" + name +
                                             "' (expected exponential or explicit)");
}

std::vector<std::string> validate_solver_config(const SolverConfig& cfg, const GridSpec& grid) {
    std::vector<std::string> warnings;
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) {
        throw ValidationError("solver.dt>0", "time step must be positive and finite");
    }
    if (cfg.mode == StepMode::penalised && !(cfg.epsilon > 0.0)) {
        throw ValidationError("solver.epsilon>0", "penalised mode needs epsilon > 0");
    }
    if (!(cfg.noise_amplitude >= 0.0) || !(cfg.diffusion >= 0.0)) {
        throw ValidationError("solver.noise>=0", "noise amplitudes must be nonnegative");
    }
    if (cfg.noise_refinement < 1) {
        throw ValidationError("noise.refinement>=1", "noise refinement must be >= 1");
    }
    const double dx = grid.spacing();
    if (cfg.heat == HeatScheme::explicit_euler) {
        if (cfg.dt * cfg.diffusion > dx * dx / 4.0) {
            throw ValidationError("stability.dt<=dx^2/4",
                                  "explicit heat step needs diffusion*dt <= spacing^2/4 (dt = " +
                                      std::to_string(cfg.dt) + ", limit = " +
                                      std::to_string(dx * dx / (4.0 * std::max(cfg.diffusion, 1e-300))) + ")");
        }
    } else if (cfg.dt > 0.1 * dx) {
        warnings.push_back("advisory: dt > 0.1*spacing; the explicit reaction term may be inaccurate");
    }
    return warnings;
}

std::vector<double> heat_step_multiplier(const SpectralPlan& plan, const SolverConfig& cfg) {
    if (cfg.heat == HeatScheme::exponential) return plan.semigroup_multiplier(cfg.diffusion * cfg.dt);
    std::vector<double> m(plan.n_modes());
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = 1.0 - plan.eigenvalue(k) * cfg.diffusion * cfg.dt;
    return m;
}

void predictor(const SpectralPlan& plan, std::span<const double> heat_mult,
               std::span<const double> g, std::span<const double> beta,
               std::span<const double> dW, const SolverConfig& cfg, std::span<double> p) {
    const std::size_t n = g.size();
    plan.apply_multiplier(g, p, heat_mult);
    const double noise_scale = cfg.noise_amplitude * static_cast<double>(n);  // σ / dx
    for (std::size_t i = 0; i < n; ++i) {
        p[i] += cfg.dt * beta[i] * g[i] + noise_scale * dW[i];
    }
}

void reflect_predictor(std::span<double> p, std::span<double> eta, const SolverConfig& cfg,
                       double dx) {
    if (cfg.mode == StepMode::projected) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] < 0.0) {
                eta[i] = -p[i] * dx;
                p[i] = 0.0;
            } else {
                eta[i] = 0.0;
            }
        }
        return;
    }
    const double damp = 1.0 / (1.0 + cfg.dt / cfg.epsilon);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0) {
            const double g = p[i] * damp;
            eta[i] = (g - p[i]) * dx;
            p[i] = g;
        } else {
            eta[i] = 0.0;
        }
    }
}

namespace {

CoupledState step_with_mode(const CoupledState& state, const PeriodicField& beta, double m_drift,
                            std::span<const double> dW, double dB, SolverConfig cfg,
                            const SpectralPlan& plan, StepMode mode, std::vector<double>& eta) {
    cfg.mode = mode;
    require_same_grid(state.g.grid, plan.grid(), "step");
    const auto mult = heat_step_multiplier(plan, cfg);
    CoupledState next{PeriodicField(state.g.grid), 0.0, state.t + cfg.dt};
    predictor(plan, mult, state.g.values, beta.values, dW, cfg, next.g.values);
    eta.assign(state.g.size(), 0.0);
    reflect_predictor(next.g.values, eta, cfg, state.g.grid.spacing());
    next.M = state.M + cfg.dt * m_drift + cfg.noise_amplitude * dB;
    return next;
}

}  // namespace

CoupledState step_penalised(const CoupledState& state, const PeriodicField& beta, double m_drift,
                            std::span<const double> dW, double dB, const SolverConfig& cfg,
                            const SpectralPlan& plan) {
    if (!(cfg.epsilon > 0.0)) throw ValidationError("solver.epsilon>0", "epsilon must be positive");
    std::vector<double> eta;
    return step_with_mode(state, beta, m_drift, dW, dB, cfg, plan, StepMode::penalised, eta);
}

ProjectedStep step_projected(const CoupledState& state, const PeriodicField& beta, double m_drift,
                             std::span<const double> dW, double dB, const SolverConfig& cfg,
                             const SpectralPlan& plan) {
    std::vector<double> eta;
    CoupledState next =
        step_with_mode(state, beta, m_drift, dW, dB, cfg, plan, StepMode::projected, eta);
    return {std::move(next), std::move(eta)};
}

// ------------------------------------------------------------------ stepper

Stepper::Stepper(GridSpec grid, KernelSpec kernel, SolverConfig cfg)
    : grid_(grid),
      cfg_(cfg),
      plan_(grid, cfg.spectrum),
      drift_(std::move(kernel)),
      heat_mult_(heat_step_multiplier(plan_, cfg)),
      beta_(grid.n_cells()),
      p_(grid.n_cells()) {}

std::span<const double> Stepper::evaluate(const CoupledState& s, double& m) {
    const EquivariantMap A = reconstruct_A(s.g, s.M);
    double mu = 0.0, mw = 0.0;
    drift_.evaluate(A, s.g.values, beta_, mu, mw);
    m = cfg_.m_drift_variant == MDriftVariant::weighted ? mw : mu;
    return beta_;
}

void Stepper::advance(CoupledState& s, std::span<const double> dW, double dB,
                      std::span<double> eta) {
    double m = 0.0;
    evaluate(s, m);
    predictor(plan_, heat_mult_, s.g.values, beta_, dW, cfg_, p_);
    reflect_predictor(p_, eta, cfg_, grid_.spacing());
    std::copy(p_.begin(), p_.end(), s.g.values.begin());
    s.M += cfg_.dt * m + cfg_.noise_amplitude * dB;
    s.t += cfg_.dt;
}

// ---------------------------------------------------------------- simulate

double Trajectory::sup_g_l2_squared() const noexcept {
    double s = 0.0;
    for (double v : g_l2_path) s = std::max(s, v * v);
    return s;
}

namespace {

std::size_t resolve_steps(double T, const SolverConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw ValidationError("solver.dt>0", "time step must be positive");
    if (cfg.n_steps > 0) {
        if (std::abs(static_cast<double>(cfg.n_steps) * cfg.dt - T) > 1e-9 * std::max(1.0, T)) {
            throw ValidationError("solver.T=n_steps*dt", "horizon must equal n_steps * dt");
        }
        return cfg.n_steps;
    }
    const double steps = std::round(T / cfg.dt);
    if (!(T > 0.0) || std::abs(steps * cfg.dt - T) > 1e-9 * std::max(1.0, T)) {
        throw ValidationError("solver.T=n_steps*dt", "horizon must be a positive multiple of dt");
    }
    return static_cast<std::size_t>(steps);
}

void require_nonnegative(const PeriodicField& phi) {
    for (double v : phi.values) {
        if (!(v >= 0.0)) throw ValidationError("initial.phi>=0", "initial data must be >= 0");
    }
}

bool keep_snapshot(std::size_t s, std::size_t n_steps, std::size_t stride) {
    if (s == 0 || s == n_steps) return true;
    return stride > 0 && s % stride == 0;
}

template <class NoiseFn>
Trajectory run_path(const PeriodicField& phi, double x, const KernelSpec& kernel, SolverConfig cfg,
                    std::size_t n_steps, const SeedSpec& seed, NoiseFn&& noise) {
    require_nonnegative(phi);
    validate_solver_config(cfg, phi.grid);
    cfg.n_steps = n_steps;
    const std::size_t n = phi.grid.n_cells();
    Trajectory traj{phi.grid, cfg, seed, {}, {}, {},
                    ReflectionLedger(phi.grid, cfg.record_ledger ? n_steps : 0), 0.0, std::nullopt};
    Stepper stepper(phi.grid, kernel, cfg);
    CoupledState s{phi, x, 0.0};
    traj.M_path.reserve(n_steps + 1);
    traj.g_l2_path.reserve(n_steps + 1);

    auto record = [&](std::size_t step) {
        const double l2 = s.g.l2_norm();
        traj.M_path.push_back(s.M);
        traj.g_l2_path.push_back(l2);
        if (!traj.tau_time && l2 * l2 >= cfg.tau_threshold) traj.tau_time = s.t;
        if (keep_snapshot(step, n_steps, cfg.snapshot_stride)) traj.states.push_back(s);
    };
    record(0);
    std::vector<double> dW(n), eta_local(n);
    double dB = 0.0;
    for (std::size_t step = 0; step < n_steps; ++step) {
        noise(step, dW, dB);
        std::span<double> eta = cfg.record_ledger ? traj.ledger.step(step) : std::span<double>(eta_local);
        stepper.advance(s, dW, dB, eta);
        s.t = static_cast<double>(step + 1) * cfg.dt;
        for (double e : eta) traj.eta_total += e;
        record(step + 1);
    }
    return traj;
}

}  // namespace

NoiseIncrement draw_path_noise(const GridSpec& grid, const SolverConfig& cfg, const SeedSpec& seed) {
    NoiseIncrement noise{grid, cfg.dt, cfg.n_steps, std::vector<double>(cfg.n_steps * grid.n_cells()),
                         std::vector<double>(cfg.n_steps)};
    PathNoise path(grid, cfg.dt, seed, cfg.noise_refinement);
    const std::size_t n = grid.n_cells();
    for (std::size_t s = 0; s < cfg.n_steps; ++s) {
        path.next(std::span<double>(noise.dW.data() + s * n, n), noise.dB[s]);
    }
    return noise;
}

Trajectory simulate(const PeriodicField& phi, double x, double T, const KernelSpec& kernel,
                    const SolverConfig& cfg, const SeedSpec& seed) {
    const std::size_t n_steps = resolve_steps(T, cfg);
    PathNoise path(phi.grid, cfg.dt, seed, std::max<std::size_t>(cfg.noise_refinement, 1));
    return run_path(phi, x, kernel, cfg, n_steps, seed,
                    [&](std::size_t, std::span<double> dW, double& dB) { path.next(dW, dB); });
}

Trajectory simulate_with_noise(const PeriodicField& phi, double x, const KernelSpec& kernel,
                               const SolverConfig& cfg, const NoiseIncrement& noise) {
    require_same_grid(phi.grid, noise.grid, "simulate_with_noise");
    if (std::abs(noise.dt - cfg.dt) > 1e-15 * cfg.dt) {
        throw ValidationError("noise.dt", "noise time step differs from the solver's");
    }
    return run_path(phi, x, kernel, cfg, noise.n_steps, SeedSpec{},
                    [&](std::size_t s, std::span<double> dW, double& dB) {
                        const auto src = noise.dW_step(s);
                        std::copy(src.begin(), src.end(), dW.begin());
                        dB = noise.dB[s];
                    });
}

// ------------------------------------------------------------------ picard

PicardResult picard_solve(const PeriodicField& phi, double x, double T, const KernelSpec& kernel,
                          const SolverConfig& cfg_in, const SeedSpec& seed, std::size_t n_iter) {
    if (n_iter < 1) throw ValidationError("picard.n_iter>=1", "need at least one iteration");
    if (cfg_in.heat != HeatScheme::exponential) {
        throw ValidationError("picard.heat", "Picard solver uses the exponential heat step");
    }
    if (cfg_in.diffusion != 1.0) {
        throw ValidationError("picard.diffusion=1", "Picard solver uses the unit heat semigroup");
    }
    require_nonnegative(phi);
    validate_solver_config(cfg_in, phi.grid);
    SolverConfig cfg = cfg_in;
    cfg.n_steps = resolve_steps(T, cfg_in);
    cfg.mode = StepMode::projected;
    const std::size_t N = cfg.n_steps;
    const GridSpec grid = phi.grid;
    const std::size_t n = grid.n_cells();
    const NoiseIncrement noise = draw_path_noise(grid, cfg, seed);
    Stepper stepper(grid, kernel, cfg);
    const SpectralPlan& plan = stepper.plan();
    const auto mult = stepper.heat_multiplier();
    const double noise_scale = cfg.noise_amplitude * static_cast<double>(n);

    // Iterate 0: frozen at the initial data.
    std::vector<double> g_prev((N + 1) * n), M_prev(N + 1, x);
    for (std::size_t s = 0; s <= N; ++s) std::copy(phi.values.begin(), phi.values.end(), g_prev.begin() + s * n);
    std::vector<double> g_cur((N + 1) * n), M_cur(N + 1), f((N + 1) * n), heat(n);

    PicardResult result{Trajectory{grid, cfg, seed, {}, {}, {}, ReflectionLedger(grid, N), 0.0, std::nullopt},
                        {}, false, std::nullopt};
    ObstacleSolution obstacle{grid, cfg.dt, N, {}, ReflectionLedger(grid, 0)};
    std::size_t growth_run = 0;
    for (std::size_t k = 1; k <= n_iter; ++k) {
        std::copy(phi.values.begin(), phi.values.end(), f.begin());
        M_cur[0] = x;
        for (std::size_t s = 0; s < N; ++s) {
            CoupledState frozen{PeriodicField(grid, std::vector<double>(g_prev.begin() + s * n,
                                                                        g_prev.begin() + (s + 1) * n)),
                                M_prev[s], 0.0};
            double m = 0.0;
            const auto beta = stepper.evaluate(frozen, m);
            std::span<const double> fs{f.data() + s * n, n};
            plan.apply_multiplier(fs, heat, mult);
            const auto dW = noise.dW_step(s);
            for (std::size_t i = 0; i < n; ++i) {
                f[(s + 1) * n + i] = heat[i] + cfg.dt * beta[i] * frozen.g[i] + noise_scale * dW[i];
            }
            M_cur[s + 1] = M_cur[s] + cfg.dt * m + cfg.noise_amplitude * noise.dB[s];
        }
        obstacle = solve_obstacle(ObstaclePath(grid, cfg.dt, N, f), plan, ObstacleHeat::exponential);
        for (std::size_t j = 0; j < g_cur.size(); ++j) g_cur[j] = f[j] + obstacle.z[j];

        if (k >= 2) {
            double d = 0.0;
            for (std::size_t j = 0; j < g_cur.size(); ++j) d = std::max(d, std::abs(g_cur[j] - g_prev[j]));
            for (std::size_t s = 0; s <= N; ++s) d = std::max(d, std::abs(M_cur[s] - M_prev[s]));
            if (!result.distances.empty() && d > result.distances.back()) {
                if (++growth_run >= 3) result.diverged = true;
            } else {
                growth_run = 0;
            }
            result.distances.push_back(d);
            if (!result.converged_after && d <= 1e-12) result.converged_after = k - 1;
        }
        std::swap(g_prev, g_cur);
        std::swap(M_prev, M_cur);
    }

    // g_prev / M_prev now hold the last iterate.
    Trajectory& traj = result.trajectory;
    traj.ledger = obstacle.eta;
    traj.eta_total = obstacle.eta.total_mass();
    for (std::size_t s = 0; s <= N; ++s) {
        CoupledState st{PeriodicField(grid, std::vector<double>(g_prev.begin() + s * n,
                                                                g_prev.begin() + (s + 1) * n)),
                        M_prev[s], static_cast<double>(s) * cfg.dt};
        const double l2 = st.g.l2_norm();
        traj.M_path.push_back(st.M);
        traj.g_l2_path.push_back(l2);
        if (!traj.tau_time && l2 * l2 >= cfg.tau_threshold) traj.tau_time = st.t;
        if (keep_snapshot(s, N, cfg.snapshot_stride)) traj.states.push_back(std::move(st));
    }
    return result;
}

// ------------------------------------------------------------------ checks

std::vector<PeriodicField> trig_test_functions(const GridSpec& grid, int max_mode) {
    std::vector<PeriodicField> tests;
    tests.emplace_back(grid, 1.0);
    for (int k = 1; k <= max_mode; ++k) {
        const double w = 2.0 * 3.14159265358979323846 * k;
        tests.push_back(PeriodicField::from_function(grid, [w](double u) { return std::cos(w * u); }));
        tests.push_back(PeriodicField::from_function(grid, [w](double u) { return std::sin(w * u); }));
    }
    return tests;
}

SolutionReport check_solution(const Trajectory& traj, const KernelSpec& kernel,
                              const std::vector<PeriodicField>& tests, const NoiseIncrement* noise) {
    const SolverConfig& cfg = traj.config;
    const std::size_t N = cfg.n_steps;
    if (traj.states.size() != N + 1) {
        throw ValidationError("check.stride=1", "check_solution needs every step (snapshot_stride = 1)");
    }
    if (traj.ledger.n_steps != N) {
        throw ValidationError("check.ledger", "check_solution needs the reflection ledger");
    }
    std::optional<NoiseIncrement> drawn;
    if (!noise) {
        drawn = draw_path_noise(traj.grid, cfg, traj.noise_ref);
        noise = &*drawn;
    }
    const std::size_t n = traj.grid.n_cells();
    Stepper stepper(traj.grid, kernel, cfg);
    std::vector<PeriodicField> laps;
    for (const auto& t : tests) laps.push_back(laplacian_apply(stepper.plan(), t));

    std::vector<double> acc(tests.size(), 0.0);
    std::vector<double> bg(n);
    SolutionReport rep;
    rep.min_g = traj.states.front().g.min();
    for (std::size_t s = 0; s < N; ++s) {
        const CoupledState& st = traj.states[s];
        double m = 0.0;
        const auto beta = stepper.evaluate(st, m);
        for (std::size_t i = 0; i < n; ++i) bg[i] = beta[i] * st.g[i];
        const auto dW = noise->dW_step(s);
        const auto eta = traj.ledger.step(s);
        for (std::size_t j = 0; j < tests.size(); ++j) {
            double stoch = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                stoch += tests[j][i] * (cfg.noise_amplitude * dW[i] + eta[i]);
            }
            acc[j] += cfg.dt * (cfg.diffusion * grid_inner(st.g.values, laps[j].values) +
                                grid_inner(bg, tests[j].values)) +
                      stoch;
        }
        const auto& next = traj.states[s + 1].g;
        for (std::size_t i = 0; i < n; ++i) rep.complementarity += next[i] * eta[i];
        rep.min_g = std::min(rep.min_g, next.min());
    }
    rep.min_eta = traj.ledger.min();
    for (std::size_t j = 0; j < tests.size(); ++j) {
        const double lhs = inner(traj.states[N].g, tests[j]) - inner(traj.states[0].g, tests[j]);
        rep.residuals.push_back(std::abs(lhs - acc[j]));
        rep.max_residual = std::max(rep.max_residual, rep.residuals.back());
    }
    return rep;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,M\n" << std::setprecision(17);
    for (std::size_t s = 0; s < traj.M_path.size(); ++s) {
        os << static_cast<double>(s) * traj.config.dt << ',' << traj.M_path[s] << '\n';
    }
}

void write_snapshots_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,x,g\n" << std::setprecision(17);
    for (const auto& st : traj.states) {
        for (std::size_t i = 0; i < st.g.size(); ++i) {
            os << st.t << ',' << traj.grid.node(i) << ',' << st.g[i] << '\n';
        }
    }
}

}  // namespace torusflow
