#include "torusflow/obstacle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace torusflow {

double ReflectionLedger::total_mass() const noexcept {
    double s = 0.0;
    for (double v : increments) s += v;
    return s;
}

double ReflectionLedger::min() const noexcept {
    return increments.empty() ? 0.0 : *std::min_element(increments.begin(), increments.end());
}

ObstaclePath::ObstaclePath(GridSpec g, double step, std::size_t steps, std::vector<double> v)
    : grid(g), dt(step), n_steps(steps), values(std::move(v)) {
    if (!(dt > 0.0)) throw ValidationError("obstacle.dt>0", "obstacle time step must be positive");
    if (values.size() != (n_steps + 1) * grid.n_cells()) {
        throw ValidationError("obstacle.shape", "obstacle path needs (n_steps + 1) x n_cells values");
    }
}

ObstaclePath ObstaclePath::from_function(GridSpec g, double dt, std::size_t n_steps,
                                         const std::function<double(double, double)>& v) {
    std::vector<double> vals((n_steps + 1) * g.n_cells());
    for (std::size_t s = 0; s <= n_steps; ++s) {
        const double t = static_cast<double>(s) * dt;
        for (std::size_t i = 0; i < g.n_cells(); ++i) vals[s * g.n_cells() + i] = v(t, g.node(i));
    }
    return ObstaclePath(g, dt, n_steps, std::move(vals));
}

double ObstaclePath::sup_norm() const noexcept { return grid_sup_norm(values); }
double ObstacleSolution::sup_norm() const noexcept { return grid_sup_norm(z); }

ObstacleSolution solve_obstacle(const ObstaclePath& v, ObstacleHeat heat) {
    return solve_obstacle(v, SpectralPlan(v.grid), heat);
}

ObstacleSolution solve_obstacle(const ObstaclePath& v, const SpectralPlan& plan, ObstacleHeat heat) {
    require_same_grid(plan.grid(), v.grid, "solve_obstacle");
    const std::size_t n = v.grid.n_cells();
    for (double x : v.row(0)) {
        if (!(x >= 0.0)) {
            throw ValidationError("obstacle.initial>=0", "initial obstacle v(0, .) must be >= 0");
        }
    }
    const double h = v.grid.spacing();
    const auto mult = heat == ObstacleHeat::exponential ? plan.semigroup_multiplier(v.dt)
                                                        : plan.resolvent_multiplier(v.dt);
    ObstacleSolution sol{v.grid, v.dt, v.n_steps,
                         std::vector<double>((v.n_steps + 1) * n, 0.0),
                         ReflectionLedger(v.grid, v.n_steps)};
    for (std::size_t s = 0; s < v.n_steps; ++s) {
        std::span<const double> prev{sol.z.data() + s * n, n};
        std::span<double> next{sol.z.data() + (s + 1) * n, n};
        plan.apply_multiplier(prev, next, mult);
        const auto vs = v.row(s + 1);
        auto eta = sol.eta.step(s);
        for (std::size_t i = 0; i < n; ++i) {
            const double floor_value = -vs[i];
            if (next[i] < floor_value) {
                eta[i] = (floor_value - next[i]) * h;
                next[i] = floor_value;
            }
        }
    }
    return sol;
}

double weak_form_residual(const ObstacleSolution& sol, const PeriodicField& test) {
    return weak_form_residual(sol, test, SpectralPlan(sol.grid));
}

double weak_form_residual(const ObstacleSolution& sol, const PeriodicField& test,
                          const SpectralPlan& plan) {
    require_same_grid(sol.grid, test.grid, "weak_form_residual");
    const PeriodicField lap = laplacian_apply(plan, test);
    const std::size_t n = sol.grid.n_cells();
    double heat_term = 0.0;
    double eta_term = 0.0;
    for (std::size_t s = 0; s < sol.n_steps; ++s) {
        heat_term += sol.dt * grid_inner(sol.row(s + 1), lap.values);
        const auto eta = sol.eta.step(s);
        for (std::size_t i = 0; i < n; ++i) eta_term += test[i] * eta[i];
    }
    const double lhs = grid_inner(sol.row(sol.n_steps), test.values) -
                       grid_inner(sol.row(0), test.values);
    return std::abs(lhs - heat_term - eta_term);
}

double complementarity_defect(const ObstacleSolution& sol, const ObstaclePath& v) {
    const std::size_t n = sol.grid.n_cells();
    double num = 0.0;
    double mass = 0.0;
    for (std::size_t s = 0; s < sol.n_steps; ++s) {
        const auto z = sol.row(s + 1);
        const auto vs = v.row(s + 1);
        const auto eta = sol.eta.step(s);
        for (std::size_t i = 0; i < n; ++i) {
            num += std::abs(z[i] + vs[i]) * eta[i];
            mass += eta[i];
        }
    }
    return mass > 0.0 ? num / mass : 0.0;
}

void write_obstacle_csv(std::ostream& os, const ObstacleSolution& sol) {
    const std::size_t n = sol.grid.n_cells();
    os << "t,x,z,eta_increment\n" << std::setprecision(17);
    for (std::size_t s = 0; s <= sol.n_steps; ++s) {
        const double t = static_cast<double>(s) * sol.dt;
        const auto z = sol.row(s);
        for (std::size_t i = 0; i < n; ++i) {
            const double eta = s == 0 ? 0.0 : sol.eta.at(i, s - 1);
            os << t << ',' << sol.grid.node(i) << ',' << z[i] << ',' << eta << '\n';
        }
    }
}

void write_ledger_csv(std::ostream& os, const ReflectionLedger& eta, double dt,
                      const std::vector<std::vector<double>>& z_rows) {
    const std::size_t n = eta.grid.n_cells();
    os << "t,x,z,eta_increment\n" << std::setprecision(17);
    for (std::size_t s = 0; s < z_rows.size(); ++s) {
        const double t = static_cast<double>(s) * dt;
        for (std::size_t i = 0; i < n; ++i) {
            const double inc = s == 0 ? 0.0 : eta.at(i, s - 1);
            os << t << ',' << eta.grid.node(i) << ',' << z_rows[s][i] << ',' << inc << '\n';
        }
    }
}

}  // namespace torusflow
