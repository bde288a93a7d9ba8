#include "torusflow/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "torusflow/parallel.hpp"
#include "torusflow/stats.hpp"

namespace torusflow {

CouplingMode parse_coupling_mode(const std::string& name) {
    if (name == "frozen") return CouplingMode::frozen;
    if (name == "live") return CouplingMode::live;
    throw ValidationError("coupling.mode", "unknown coupling mode '" + name +
                                               "' (expected frozen or live)");
}

FellerEstimator parse_feller_estimator(const std::string& name) {
    if (name == "independent") return FellerEstimator::independent;
    if (name == "common_noise" || name == "common") return FellerEstimator::common_noise;
    if (name == "girsanov") return FellerEstimator::girsanov;
    throw ValidationError("feller.estimator", "unknown estimator '" + name +
                                                  "' (expected independent, common_noise or girsanov)");
}

double GirsanovLedger::partial(std::size_t from, std::size_t to) const {
    NeumaierSum s;
    for (std::size_t i = from; i < std::min(to, increments.size()); ++i) s.add(increments[i]);
    return s.value();
}

double GirsanovLedger::density() const { return std::exp(log_density); }

namespace {

constexpr double kLogClamp = 700.0;

void check_coupling_inputs(const PeriodicField& phi, const PeriodicField& psi,
                           const CouplingConfig& cfg, const SolverConfig& solver) {
    require_same_grid(phi.grid, psi.grid, "coupling");
    if (!(cfg.T > 0.0)) throw ValidationError("coupling.T>0", "coupling horizon must be positive");
    if (!(cfg.delta_cap >= 0.0) || cfg.delta_cap >= cfg.T) {
        throw ValidationError("coupling.delta_cap", "delta_cap must lie in [0, T)");
    }
    if (!(cfg.merge_threshold > 0.0)) {
        throw ValidationError("coupling.merge_threshold>0", "merge threshold must be positive");
    }
    if (!(solver.noise_amplitude > 0.0)) {
        throw ValidationError("coupling.noise>0", "the density needs nondegenerate noise");
    }
}

std::size_t steps_for(double T, double dt) {
    const double steps = std::round(T / dt);
    if (steps < 1.0 || std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T)) {
        throw ValidationError("solver.T=n_steps*dt", "horizon must be a positive multiple of dt");
    }
    return static_cast<std::size_t>(steps);
}

}  // namespace

CouplingResult run_coupled_pair(const PeriodicField& phi, double x, const PeriodicField& psi,
                                double y, const KernelSpec& kernel, const CouplingConfig& cfg,
                                const SolverConfig& solver_in, const SeedSpec& seed) {
    check_coupling_inputs(phi, psi, cfg, solver_in);
    for (const auto* f : {&phi, &psi}) {
        for (double v : f->values) {
            if (!(v >= 0.0)) throw ValidationError("initial.phi>=0", "initial data must be >= 0");
        }
    }
    validate_solver_config(solver_in, phi.grid);
    SolverConfig solver = solver_in;
    const std::size_t N = steps_for(cfg.T, solver.dt);
    solver.n_steps = N;
    const double dt = solver.dt;
    const double sigma = solver.noise_amplitude;
    const double delta_cap = cfg.delta_cap > 0.0 ? cfg.delta_cap : dt;
    const bool frozen = cfg.mode == CouplingMode::frozen;

    const GridSpec grid = phi.grid;
    const std::size_t n = grid.n_cells();
    const double dx = grid.spacing();
    const double noise_scale = sigma / dx;

    Stepper ref(grid, kernel, solver);
    Stepper til(grid, kernel, solver);
    const SpectralPlan& plan = ref.plan();
    const auto mult = ref.heat_multiplier();
    PathNoise noise(grid, dt, seed, solver.noise_refinement);

    CouplingResult out;
    out.reference = CoupledState{phi, x, 0.0};
    out.copy = CoupledState{psi, y, 0.0};
    CoupledState& a = out.reference;
    CoupledState& b = out.copy;
    out.ledger.increments.reserve(N);
    out.distance_path.reserve(N + 1);

    std::vector<double> dW(n), delta(n), sdelta(n), gamma(n), p(n), pt(n), eta(n), beta_ref(n);
    double dB = 0.0;
    NeumaierSum log_sum, field_sum, scalar_sum, qv_sum, bridge_sum;

    const double d0 = l2_distance(phi, psi);
    const double m0 = std::abs(x - y);
    out.initial_distance_sq = d0 * d0;
    bool merged = false;

    for (std::size_t s = 0; s <= N; ++s) {
        const double t = static_cast<double>(s) * dt;
        for (std::size_t i = 0; i < n; ++i) delta[i] = b.g[i] - a.g[i];
        const double gd = grid_l2_norm(delta);
        const double md = std::abs(b.M - a.M);
        out.distance_path.push_back({t, gd, md});
        const double shrink = (cfg.T - t) / cfg.T;
        if (d0 > 0.0) {
            out.bound_excess_g = std::max(out.bound_excess_g, (gd * gd - d0 * d0 * shrink * shrink) / (d0 * d0));
        }
        if (m0 > 0.0) {
            out.bound_excess_M = std::max(out.bound_excess_M, (md * md - m0 * m0 * shrink * shrink) / (m0 * m0));
        }
        if (s == N) break;

        const double xi = cfg.T - t;
        noise.next(dW, dB);
        if (merged) {
            ref.advance(a, dW, dB, eta);
            b.g.values = a.g.values;
            b.M = a.M;
            b.t = a.t;
            out.ledger.increments.push_back(0.0);
            continue;
        }
        bridge_sum.add(dt * gd * gd / (xi * xi));
        const bool closing = t >= cfg.T - delta_cap - 1e-12 * cfg.T ||
                             (gd < cfg.merge_threshold && md < cfg.merge_threshold);
        const double c = closing ? 1.0 : dt / xi;

        double m_ref = 0.0, m_til = 0.0;
        const auto br = ref.evaluate(a, m_ref);
        std::copy(br.begin(), br.end(), beta_ref.begin());
        const auto bt = til.evaluate(b, m_til);
        plan.apply_multiplier(delta, sdelta, mult);

        // e: drift of the copy minus the drift of its own equation, per unit time.
        double gamma_sq = 0.0, gamma_dw = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double e = -(c / dt) * sdelta[i];
            if (frozen) e += beta_ref[i] * a.g[i] - bt[i] * b.g[i];
            gamma[i] = -e / sigma;
            gamma_sq += gamma[i] * gamma[i];
            gamma_dw += gamma[i] * dW[i];
        }
        gamma_sq *= dx;
        double e_M = -(c / dt) * (b.M - a.M);
        if (frozen) e_M += m_ref - m_til;
        const double gamma_M = -e_M / sigma;
        const double inc = gamma_dw - 0.5 * dt * gamma_sq + gamma_M * dB - 0.5 * dt * gamma_M * gamma_M;
        log_sum.add(inc);
        field_sum.add(gamma_dw);
        scalar_sum.add(gamma_M * dB);
        qv_sum.add(dt * (gamma_sq + gamma_M * gamma_M));
        out.ledger.increments.push_back(inc);

        // Reference step.
        predictor(plan, mult, a.g.values, beta_ref, dW, solver, p);
        reflect_predictor(p, eta, solver, dx);
        const double M_next = a.M + dt * m_ref + sigma * dB;

        if (closing) {
            a.g.values = p;
            a.M = M_next;
            b.g.values = p;
            b.M = M_next;
            merged = true;
            out.merge_time = t + dt;
        } else {
            plan.apply_multiplier(b.g.values, pt, mult);
            for (std::size_t i = 0; i < n; ++i) {
                const double reaction = frozen ? beta_ref[i] * a.g[i] : bt[i] * b.g[i];
                pt[i] += dt * reaction + noise_scale * dW[i] - c * sdelta[i];
            }
            reflect_predictor(pt, eta, solver, dx);
            const double Mt_next = b.M + dt * (frozen ? m_ref : m_til) + sigma * dB - c * (b.M - a.M);
            a.g.values = p;
            a.M = M_next;
            b.g.values = pt;
            b.M = Mt_next;
        }
        a.t = b.t = t + dt;
    }

    out.coupled = merged || (out.distance_path.back().g_distance == 0.0 &&
                             out.distance_path.back().M_distance == 0.0);
    if (out.coupled && !out.merge_time) out.merge_time = 0.0;
    out.bridge_integral = bridge_sum.value();
    GirsanovLedger& L = out.ledger;
    L.field_integral = field_sum.value();
    L.scalar_integral = scalar_sum.value();
    L.quadratic_variation = qv_sum.value();
    L.log_density = log_sum.value();
    if (!std::isfinite(L.log_density) || std::abs(L.log_density) > kLogClamp) {
        L.clamped = true;
        L.log_density = std::isnan(L.log_density) ? -kLogClamp
                                                  : std::clamp(L.log_density, -kLogClamp, kLogClamp);
    }
    return out;
}

double girsanov_log_density(const CouplingResult& result) { return result.ledger.log_density; }

// -------------------------------------------------------------- functionals

Functional functional_by_name(const std::string& id) {
    if (id == "one") return {id, 1.0, [](const PeriodicField&, double) { return 1.0; }};
    if (id == "tanh_M") return {id, 1.0, [](const PeriodicField&, double M) { return std::tanh(M); }};
    if (id == "tanh_cos1") {
        return {id, 1.0, [](const PeriodicField& g, double) {
                    double c = 0.0;
                    const double w = 2.0 * std::numbers::pi;
                    for (std::size_t i = 0; i < g.size(); ++i) c += g[i] * std::cos(w * g.grid.node(i));
                    return std::tanh(c / static_cast<double>(g.size()));
                }};
    }
    if (id == "mixed") {
        return {id, 1.0, [](const PeriodicField& g, double M) {
                    double c = 0.0;
                    const double w = 2.0 * std::numbers::pi;
                    for (std::size_t i = 0; i < g.size(); ++i) c += g[i] * std::cos(w * g.grid.node(i));
                    return 0.5 * std::tanh(M) + 0.5 * std::tanh(c / static_cast<double>(g.size()));
                }};
    }
    throw ValidationError("functional", "unknown functional '" + id +
                                            "' (expected one, tanh_M, tanh_cos1 or mixed)");
}

namespace {

// Stream ids for the second initial condition in independent runs.
constexpr std::uint64_t kSecondStream = 1ULL << 40;
constexpr std::uint64_t kFreshStream = 1ULL << 41;

struct EndPoint {
    CoupledState state;
    double eta_total = 0.0;
};

EndPoint run_to_end(const PeriodicField& phi, double x, const KernelSpec& kernel,
                    const SolverConfig& solver, const SeedSpec& seed, std::size_t n_steps,
                    std::size_t skip) {
    const std::size_t n = phi.grid.n_cells();
    Stepper stepper(phi.grid, kernel, solver);
    PathNoise noise(phi.grid, solver.dt, seed, solver.noise_refinement);
    noise.skip(skip);
    EndPoint end{CoupledState{phi, x, 0.0}, 0.0};
    std::vector<double> dW(n), eta(n);
    double dB = 0.0;
    for (std::size_t s = 0; s < n_steps; ++s) {
        noise.next(dW, dB);
        stepper.advance(end.state, dW, dB, eta);
        for (double e : eta) end.eta_total += e;
    }
    return end;
}

}  // namespace

TvBound tv_bound_estimate(const PeriodicField& phi, double x, const PeriodicField& psi, double y,
                          const KernelSpec& kernel, const CouplingConfig& cfg,
                          const SolverConfig& solver, const SeedSpec& seed,
                          const Functional& functional, bool keep_runs) {
    if (cfg.replicas < 100) {
        throw ValidationError("coupling.replicas>=100", "TV bound estimate needs at least 100 replicas");
    }
    const std::size_t R = cfg.replicas;
    std::vector<CouplingResult> runs(R);
    parallel_for(R, [&](std::size_t r) {
        runs[r] = run_coupled_pair(phi, x, psi, y, kernel, cfg, solver, seed.with_stream(seed.stream_id + r));
    }, cfg.threads);

    std::vector<double> qv(R), z(R), dev(R), gap(R);
    std::size_t merged = 0;
    for (std::size_t r = 0; r < R; ++r) {
        qv[r] = runs[r].ledger.quadratic_variation;
        z[r] = runs[r].ledger.density();
        dev[r] = std::abs(1.0 - z[r]);
        gap[r] = functional.eval(runs[r].reference.g, runs[r].reference.M) * (1.0 - z[r]);
        if (runs[r].coupled) ++merged;
    }
    TvBound out;
    out.replicas = R;
    out.mean_qv = mean_estimate(qv).mean;
    out.pinsker_tv = 0.5 * std::sqrt(out.mean_qv);
    out.functional_bound = std::sqrt(out.mean_qv);
    out.direct_tv = 0.5 * mean_estimate(dev).mean;
    const auto zm = mean_estimate(z);
    out.mean_density = zm.mean;
    out.density_stderr = zm.stderr_;
    const auto gm = mean_estimate(gap);
    out.functional_gap = gm.mean;
    out.functional_gap_stderr = gm.stderr_;
    out.merged_fraction = static_cast<double>(merged) / static_cast<double>(R);
    if (keep_runs) out.runs = std::move(runs);
    return out;
}

FellerEstimate strong_feller_probe(const Functional& F, const PeriodicField& phi, double x,
                                   const PeriodicField& psi, double y, const KernelSpec& kernel,
                                   const CouplingConfig& cfg, const SolverConfig& solver,
                                   const SeedSpec& seed, FellerEstimator estimator) {
    check_coupling_inputs(phi, psi, cfg, solver);
    if (cfg.replicas < 2) throw ValidationError("feller.replicas>=2", "need at least 2 replicas");
    const std::size_t R = cfg.replicas;
    const std::size_t N = steps_for(cfg.T, solver.dt);
    FellerEstimate est;
    est.functional_id = F.id;
    est.input_distance = l2_distance(phi, psi) + std::abs(x - y);
    est.input_d12 = d12_metric(MeasureH1::from_state(phi, x), MeasureH1::from_state(psi, y));

    std::vector<double> first(R), second(R);
    parallel_for(R, [&](std::size_t r) {
        const SeedSpec s1 = seed.with_stream(seed.stream_id + r);
        if (estimator == FellerEstimator::girsanov) {
            const auto run = run_coupled_pair(phi, x, psi, y, kernel, cfg, solver, s1);
            first[r] = F.eval(run.reference.g, run.reference.M) * (1.0 - run.ledger.density());
            return;
        }
        const SeedSpec s2 = estimator == FellerEstimator::common_noise
                                ? s1
                                : seed.with_stream(seed.stream_id + kSecondStream + r);
        const auto e1 = run_to_end(phi, x, kernel, solver, s1, N, 0);
        const auto e2 = run_to_end(psi, y, kernel, solver, s2, N, 0);
        first[r] = F.eval(e1.state.g, e1.state.M);
        second[r] = F.eval(e2.state.g, e2.state.M);
    }, cfg.threads);

    if (estimator == FellerEstimator::girsanov) {
        const auto m = mean_estimate(first);
        est.signed_estimate = m.mean;
        est.mc_stderr = m.stderr_;
        est.samples = first;
    } else if (estimator == FellerEstimator::common_noise) {
        std::vector<double> diff(R);
        for (std::size_t r = 0; r < R; ++r) diff[r] = first[r] - second[r];
        const auto m = mean_estimate(diff);
        est.signed_estimate = m.mean;
        est.mc_stderr = m.stderr_;
        est.samples = std::move(diff);
    } else {
        const auto m1 = mean_estimate(first);
        const auto m2 = mean_estimate(second);
        est.signed_estimate = m1.mean - m2.mean;
        est.mc_stderr = std::hypot(m1.stderr_, m2.stderr_);
        est.samples = first;
        est.samples.insert(est.samples.end(), second.begin(), second.end());
    }
    est.estimate = std::abs(est.signed_estimate);
    return est;
}

MarkovShiftResult markov_shift_test(const PeriodicField& phi, double x, double s, double t,
                                    const KernelSpec& kernel, const SolverConfig& solver,
                                    const SeedSpec& seed, std::size_t replicas,
                                    std::optional<double> t_fresh, std::size_t threads) {
    if (replicas < 50) throw ValidationError("markov.replicas>=50", "KS panel needs at least 50 replicas");
    if (!(s >= 0.0) || !(t > 0.0)) throw ValidationError("markov.times", "need s >= 0 and t > 0");
    validate_solver_config(solver, phi.grid);
    const std::size_t skip = s > 0.0 ? steps_for(s, solver.dt) : 0;
    const std::size_t steps = steps_for(t, solver.dt);
    const std::size_t steps_fresh = steps_for(t_fresh.value_or(t), solver.dt);

    constexpr std::size_t kPanel = 4;
    std::vector<std::vector<double>> A(kPanel, std::vector<double>(replicas));
    std::vector<std::vector<double>> B = A;
    const double w = 2.0 * std::numbers::pi;
    const PeriodicField cos1 = PeriodicField::from_function(phi.grid, [w](double u) { return std::cos(w * u); });
    auto fill = [&](std::vector<std::vector<double>>& panel, std::size_t r, const EndPoint& e) {
        panel[0][r] = e.state.M;
        panel[1][r] = e.state.g.l2_norm();
        panel[2][r] = inner(e.state.g, cos1);
        panel[3][r] = e.eta_total;
    };
    parallel_for(replicas, [&](std::size_t r) {
        fill(A, r, run_to_end(phi, x, kernel, solver, seed.with_stream(seed.stream_id + r), steps, skip));
        fill(B, r, run_to_end(phi, x, kernel, solver,
                              seed.with_stream(seed.stream_id + kFreshStream + r), steps_fresh, 0));
    }, threads);

    MarkovShiftResult out;
    out.panel = {"M", "g_l2", "g_cos1", "eta_total"};
    for (std::size_t k = 0; k < kPanel; ++k) {
        const auto ks = ks_two_sample(A[k], B[k]);
        out.p_values.push_back(ks.p_value);
        out.statistics.push_back(ks.statistic);
        out.min_p = std::min(out.min_p, ks.p_value);
    }
    return out;
}

void write_coupling_csv(std::ostream& os, const std::vector<CouplingResult>& runs) {
    os << "replica,merge_time,final_g_dist,final_M_dist,log_density\n" << std::setprecision(17);
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& run = runs[r];
        os << r << ',';
        if (run.merge_time) os << *run.merge_time; else os << "nan";
        os << ',' << run.distance_path.back().g_distance << ',' << run.distance_path.back().M_distance
           << ',' << run.ledger.log_density << '\n';
    }
}

}  // namespace torusflow
