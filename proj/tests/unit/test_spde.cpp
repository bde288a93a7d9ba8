#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "torusflow/reflected_spde.hpp"

using namespace torusflow;
constexpr double kPi = std::numbers::pi;

namespace {

SolverConfig quiet_config(double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.noise_amplitude = 0.0;
    return cfg;
}

PeriodicField bump(const GridSpec& g, double lift) {
    return PeriodicField::from_function(g, [lift](double u) { return lift + std::cos(2 * kPi * u); });
}

}  // namespace

TEST_CASE("penalised step without forcing is a heat step") {
    GridSpec g(32);
    SpectralPlan plan(g);
    auto cfg = quiet_config(1e-3);
    cfg.mode = StepMode::penalised;
    const CoupledState s{PeriodicField::from_function(g, [](double u) { return 1.5 + 0.5 * std::sin(2 * kPi * u); }),
                         0.2, 0.0};
    std::vector<double> dW(32, 0.0);
    const auto next = step_penalised(s, PeriodicField(g), 0.0, dW, 0.0, cfg, plan);
    CHECK(sup_distance(next.g, semigroup_apply(plan, s.g, 1e-3)) < 1e-14);
    CHECK(next.M == 0.2);
    CHECK(next.t == doctest::Approx(1e-3));
}

TEST_CASE("reflection arithmetic") {
    SolverConfig cfg;
    cfg.dt = 1.0;
    cfg.epsilon = 1e-4;
    cfg.mode = StepMode::penalised;
    std::vector<double> p{-0.5, 0.2}, eta(2);
    reflect_predictor(p, eta, cfg, 1.0);
    CHECK(p[0] == doctest::Approx(-0.5 / 10001.0).epsilon(1e-14));
    CHECK(p[1] == 0.2);

    cfg.mode = StepMode::projected;
    std::vector<double> q{-0.3, 0.4}, e(2);
    reflect_predictor(q, e, cfg, 1.0 / 64);
    CHECK(q[0] == 0.0);
    CHECK(e[0] == doctest::Approx(0.3 / 64).epsilon(1e-14));
    CHECK(e[1] == 0.0);
    CHECK(q[0] * e[0] == 0.0);
}

TEST_CASE("projected equals penalised when nothing binds") {
    GridSpec g(32);
    SpectralPlan plan(g);
    auto cfg = quiet_config(1e-3);
    const CoupledState s{PeriodicField(g, 2.0), 0.0, 0.0};
    std::vector<double> dW(32, 1e-3);
    const auto proj = step_projected(s, PeriodicField(g, 0.1), 0.3, dW, 0.01, cfg, plan);
    cfg.mode = StepMode::penalised;
    const auto pen = step_penalised(s, PeriodicField(g, 0.1), 0.3, dW, 0.01, cfg, plan);
    CHECK(sup_distance(proj.state.g, pen.g) == 0.0);
    for (double e : proj.eta) CHECK(e == 0.0);
    CHECK(proj.state.M == pen.M);
}

TEST_CASE("penalisation converges to the projected scheme") {
    GridSpec g(32);
    const auto phi = PeriodicField::from_function(g, [](double u) { return std::max(0.0, std::cos(2 * kPi * u)); });
    const auto kernel = KernelSpec::trigonometric(0.0, {0.3}, {0.2});
    SolverConfig cfg;
    cfg.dt = 1e-3;
    cfg.snapshot_stride = 0;
    const SeedSpec seed{21, 0, 0};
    const auto proj = simulate(phi, 0.0, 0.1, kernel, cfg, seed);
    cfg.mode = StepMode::penalised;
    double prev = 1e300, min_prev = -1e300;
    for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
        cfg.epsilon = eps;
        const auto pen = simulate(phi, 0.0, 0.1, kernel, cfg, seed);
        const double d = l2_distance(pen.final_state().g, proj.final_state().g);
        CHECK(d < prev);
        prev = d;
        const double m = pen.final_state().g.min();
        CHECK(m >= min_prev - 1e-15);
        min_prev = m;
        if (eps == 1e-5) CHECK(d < 5.0 * std::sqrt(eps));
    }
}

TEST_CASE("deterministic runs") {
    GridSpec g(16);
    auto cfg = quiet_config(1e-3);
    cfg.diffusion = 1.0;
    const auto t = simulate(PeriodicField(g, 1.0), 0.4, 0.05, KernelSpec::constant(0.0), cfg, {1, 0, 0});
    for (const auto& s : t.states) {
        for (double v : s.g.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(s.M == 0.4);
    }
    CHECK(t.eta_total == 0.0);
}

TEST_CASE("constant kernel gives M_T = x + cT + B_T") {
    GridSpec g(16);
    SolverConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 100;
    const SeedSpec seed{5, 3, 0};
    const auto t = simulate(PeriodicField(g, 1.0), 0.1, 0.1, KernelSpec::constant(0.7), cfg, seed);
    const auto noise = draw_path_noise(g, cfg, seed);
    double B = 0.0;
    for (double b : noise.dB) B += b;
    CHECK(t.final_state().M == doctest::Approx(0.1 + 0.07 + B).epsilon(1e-12));
}

TEST_CASE("reflection activates from zeros and keeps g nonnegative") {
    GridSpec g(32);
    const auto phi = PeriodicField::from_function(g, [](double u) { return std::max(0.0, std::sin(2 * kPi * u)); });
    SolverConfig cfg;
    cfg.dt = 1e-3;
    int active = 0;
    for (std::uint64_t r = 0; r < 100; ++r) {
        const auto t = simulate(phi, 0.0, 0.02, KernelSpec::trigonometric(0, {0.5}, {}), cfg, {8, r, 0});
        active += t.eta_total > 0.0;
        for (const auto& s : t.states) CHECK(s.g.min() >= 0.0);
        CHECK(t.ledger.min() >= 0.0);
    }
    CHECK(active >= 99);
}

TEST_CASE("same seed reproduces the trajectory") {
    GridSpec g(16);
    SolverConfig cfg;
    cfg.dt = 1e-3;
    const auto k = KernelSpec::trigonometric(0, {0.5}, {0.1});
    const auto a = simulate(bump(g, 1.5), 0.0, 0.05, k, cfg, {3, 1, 0});
    const auto b = simulate(bump(g, 1.5), 0.0, 0.05, k, cfg, {3, 1, 0});
    CHECK(a.M_path == b.M_path);
    CHECK(a.final_state().g.values == b.final_state().g.values);
    CHECK(a.ledger.increments == b.ledger.increments);
}

TEST_CASE("validation") {
    GridSpec g(64);
    SolverConfig cfg;
    cfg.heat = HeatScheme::explicit_euler;
    cfg.dt = 1e-3;
    CHECK_THROWS_AS(validate_solver_config(cfg, g), ValidationError);
    try {
        validate_solver_config(cfg, g);
    } catch (const ValidationError& e) {
        CHECK(e.rule() == "stability.dt<=dx^2/4");
    }
    cfg.dt = 1.0 / (64.0 * 64.0 * 4.0);
    CHECK_NOTHROW(validate_solver_config(cfg, g));
    cfg.heat = HeatScheme::exponential;
    cfg.dt = 1e-2;
    CHECK(!validate_solver_config(cfg, g).empty());
    CHECK_THROWS_AS(simulate(PeriodicField(g, -1.0), 0, 0.1, KernelSpec::constant(0), cfg, {}), ValidationError);
    CHECK_THROWS_AS(simulate(PeriodicField(g, 1.0), 0, 0.1005, KernelSpec::constant(0), SolverConfig{}, {}),
                    ValidationError);
    CHECK_THROWS_AS(parse_step_mode("implicit"), ValidationError);
}

TEST_CASE("picard") {
    GridSpec g(32);
    SolverConfig cfg;
    cfg.dt = 1e-3;
    cfg.noise_amplitude = 0.5;
    const SeedSpec seed{4, 0, 0};
    const auto phi = bump(g, 1.2);
    const auto flat = picard_solve(phi, 0.0, 0.05, KernelSpec::constant(0.0), cfg, seed, 3);
    REQUIRE(flat.converged_after);
    CHECK(*flat.converged_after == 1);

    const auto k = KernelSpec::trigonometric(0.0, {0.4}, {0.3});
    const auto res = picard_solve(phi, 0.0, 0.1, k, cfg, seed, 8);
    CHECK(!res.diverged);
    for (std::size_t i = 1; i < res.distances.size(); ++i) {
        if (res.distances[i - 1] > 1e-13) CHECK(res.distances[i] < res.distances[i - 1]);
    }
    const auto sim = simulate(phi, 0.0, 0.1, k, cfg, seed);
    CHECK(l2_distance(res.trajectory.final_state().g, sim.final_state().g) < 1e-10);
    cfg.heat = HeatScheme::explicit_euler;
    CHECK_THROWS_AS(picard_solve(phi, 0.0, 0.1, k, cfg, seed, 2), ValidationError);
}

TEST_CASE("check_solution") {
    GridSpec g(128);
    SolverConfig cfg;
    cfg.dt = 1e-4;
    const auto phi = PeriodicField::from_function(g, [](double u) { return std::max(0.0, std::cos(2 * kPi * u)) + 0.05; });
    const auto k = KernelSpec::trigonometric(0.0, {0.5}, {0.2});
    const auto traj = simulate(phi, 0.0, 0.02, k, cfg, {6, 0, 0});
    const auto rep = check_solution(traj, k, {PeriodicField(g, 1.0)});
    CHECK(rep.max_residual < 1e-3 * phi.l2_norm());
    CHECK(rep.complementarity == 0.0);
    CHECK(rep.min_g >= 0.0);
    CHECK(rep.min_eta >= 0.0);

    // Zero noise, no interaction: only the heat discretisation error remains.
    auto quiet = cfg;
    quiet.noise_amplitude = 0.0;
    const auto pos = bump(g, 1.5);
    const auto heat = simulate(pos, 0.0, 0.02, KernelSpec::constant(0.0), quiet, {});
    const auto tests = trig_test_functions(g, 2);
    const auto r = check_solution(heat, KernelSpec::constant(0.0), tests);
    // Per step ⟨g, (e^{-λdt} - 1 + λdt) φ⟩ ≈ ½(λdt)², summed over the run.
    const double lam = 4 * kPi * kPi;
    CHECK(r.max_residual < 0.5 * lam * lam * cfg.dt * 0.02 * 1.1);
    CHECK(heat.eta_total == 0.0);

    auto sparse = cfg;
    sparse.snapshot_stride = 10;
    const auto t2 = simulate(phi, 0.0, 0.002, k, sparse, {});
    CHECK_THROWS_AS(check_solution(t2, k, tests), ValidationError);
}

TEST_CASE("trajectory csv") {
    GridSpec g(4);
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.snapshot_stride = 2;
    const auto t = simulate(PeriodicField(g, 1.0), 0.0, 0.05, KernelSpec::constant(0.0), cfg, {});
    std::stringstream a, b;
    write_trajectory_csv(a, t);
    write_snapshots_csv(b, t);
    std::string line;
    std::getline(a, line);
    CHECK(line == "t,M");
    int rows = 0;
    while (std::getline(a, line)) ++rows;
    CHECK(rows == 6);
    std::getline(b, line);
    CHECK(line == "t,x,g");
    rows = 0;
    while (std::getline(b, line)) ++rows;
    CHECK(rows == 4 * 4);  // steps 0, 2, 4 and the final step 5
}
