#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "torusflow/grid.hpp"
#include "torusflow/heat.hpp"

namespace torusflow {

/// Nonnegative reflection mass per (cell, step). Entry (i, s) is the mass
/// added at node i while advancing from t_s to t_{s+1}.
struct ReflectionLedger {
    GridSpec grid;
    std::size_t n_steps = 0;
    std::vector<double> increments;  // step-major

    ReflectionLedger(GridSpec g, std::size_t steps)
        : grid(g), n_steps(steps), increments(g.n_cells() * steps, 0.0) {}

    std::span<const double> step(std::size_t s) const noexcept {
        return {increments.data() + s * grid.n_cells(), grid.n_cells()};
    }
    std::span<double> step(std::size_t s) noexcept {
        return {increments.data() + s * grid.n_cells(), grid.n_cells()};
    }
    double at(std::size_t cell, std::size_t s) const noexcept {
        return increments[s * grid.n_cells() + cell];
    }
    double total_mass() const noexcept;
    double min() const noexcept;
};

/// Obstacle values v(t_s, x_i) for s = 0..n_steps, piecewise constant in time
/// between steps.
struct ObstaclePath {
    GridSpec grid;
    double dt;
    std::size_t n_steps;
    std::vector<double> values;  // step-major, (n_steps + 1) rows

    ObstaclePath(GridSpec g, double dt, std::size_t n_steps, std::vector<double> values);
    static ObstaclePath from_function(GridSpec g, double dt, std::size_t n_steps,
                                      const std::function<double(double t, double x)>& v);

    std::span<const double> row(std::size_t s) const noexcept {
        return {values.data() + s * grid.n_cells(), grid.n_cells()};
    }
    double sup_norm() const noexcept;
};

struct ObstacleSolution {
    GridSpec grid;
    double dt;
    std::size_t n_steps;
    std::vector<double> z;  // step-major, (n_steps + 1) rows, z(0, ·) = 0
    ReflectionLedger eta;

    std::span<const double> row(std::size_t s) const noexcept {
        return {z.data() + s * grid.n_cells(), grid.n_cells()};
    }
    double sup_norm() const noexcept;
};

enum class ObstacleHeat {
    backward_euler,  // (I - dt Δ)^{-1}, the default splitting
    exponential,     // e^{dt Δ}, matches the SPDE stepper for the Picard solver
};

/// Per step: heat update of z, then z <- max(z, -v); the correction times the
/// spacing is recorded as the reflection increment.
ObstacleSolution solve_obstacle(const ObstaclePath& v, ObstacleHeat heat = ObstacleHeat::backward_euler);
ObstacleSolution solve_obstacle(const ObstaclePath& v, const SpectralPlan& plan,
                                ObstacleHeat heat = ObstacleHeat::backward_euler);

/// |<z_T,φ> - <z_0,φ> - Σ dt <z_{s+1}, Δφ> - Σ φ·dη| with Δ from the plan.
double weak_form_residual(const ObstacleSolution& sol, const PeriodicField& test);
double weak_form_residual(const ObstacleSolution& sol, const PeriodicField& test,
                          const SpectralPlan& plan);

/// Σ (z + v)·dη divided by Σ dη (0 when no mass was added).
double complementarity_defect(const ObstacleSolution& sol, const ObstaclePath& v);

/// Rows `t,x,z,eta_increment`; the increment on row t_s is the mass added on (t_{s-1}, t_s].
void write_obstacle_csv(std::ostream& os, const ObstacleSolution& sol);
void write_ledger_csv(std::ostream& os, const ReflectionLedger& eta, double dt,
                      const std::vector<std::vector<double>>& z_rows);

}  // namespace torusflow
