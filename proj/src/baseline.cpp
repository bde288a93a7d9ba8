#include "torusflow/baseline.hpp"

#include <cmath>
#include <stdexcept>

namespace torusflow {

namespace {

std::size_t step_count(double T, double dt) {
    if (!(dt > 0.0)) throw ValidationError("baseline.dt>0", "time step must be positive");
    if (!(T >= 0.0)) throw ValidationError("baseline.T>=0", "horizon must be nonnegative");
    const double steps = std::round(T / dt);
    if (std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T)) {
        throw ValidationError("baseline.T=n*dt", "horizon must be a multiple of dt");
    }
    return static_cast<std::size_t>(steps);
}

// b at every point of `at`, for μ = Σ w_j δ_{p_j}.
void drift_at(const KernelSpec& kernel, const std::vector<double>& at,
              const std::vector<double>& loc, const std::vector<double>& w, std::vector<double>& out) {
    out.assign(at.size(), 0.0);
    for (std::size_t i = 0; i < at.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < loc.size(); ++j) s += w[j] * kernel.value(at[i] - loc[j]);
        out[i] = s;
    }
}

}  // namespace

FlowState evolve_lagrangian(const TorusMeasure& mu0, const KernelSpec& kernel, double T, double dt,
                            const GridSpec& map_grid) {
    const std::size_t steps = step_count(T, dt);
    std::vector<double> loc, w;
    if (mu0.is_atomic()) {
        for (const auto& a : mu0.atoms()) {
            loc.push_back(a.location);
            w.push_back(a.weight);
        }
    } else {
        static constexpr double gx[4] = {0.069431844202973712, 0.33000947820757187,
                                         0.66999052179242813, 0.93056815579702629};
        static constexpr double gw[4] = {0.17392742256872693, 0.32607257743127307,
                                         0.32607257743127307, 0.17392742256872693};
        const auto& hist = mu0.histogram();
        const double bin = hist.grid.spacing();
        for (std::size_t j = 0; j < hist.mass.size(); ++j) {
            if (hist.mass[j] == 0.0) continue;
            for (int q = 0; q < 4; ++q) {
                loc.push_back(hist.grid.node(j) + gx[q] * bin);
                w.push_back(hist.mass[j] * gw[q]);
            }
        }
    }
    const std::size_t n = map_grid.n_cells();
    std::vector<double> map(n);
    for (std::size_t i = 0; i < n; ++i) map[i] = map_grid.node(i);

    // Particles and map nodes move in the same field: stack them.
    const std::size_t P = loc.size();
    std::vector<double> pos(loc);
    pos.insert(pos.end(), map.begin(), map.end());
    std::vector<double> k1, k2, mid(pos.size()), mid_loc(P);
    for (std::size_t s = 0; s < steps; ++s) {
        drift_at(kernel, pos, std::vector<double>(pos.begin(), pos.begin() + P), w, k1);
        for (std::size_t i = 0; i < pos.size(); ++i) mid[i] = pos[i] + 0.5 * dt * k1[i];
        std::copy(mid.begin(), mid.begin() + P, mid_loc.begin());
        drift_at(kernel, mid, mid_loc, w, k2);
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] += dt * k2[i];

        const EquivariantMap check(map_grid, std::vector<double>(pos.begin() + P, pos.end()), 1.0);
        if (!check.is_monotone(1e-12)) {
            throw std::runtime_error("baseline.monotone: Lagrangian map lost monotonicity; reduce dt");
        }
    }
    std::vector<Atom> particles(P);
    for (std::size_t j = 0; j < P; ++j) particles[j] = Atom{pos[j], w[j]};
    FlowState out{EquivariantMap(map_grid, std::vector<double>(pos.begin() + P, pos.end()), 1.0),
                  TorusMeasure::normalised_atoms(particles), static_cast<double>(steps) * dt,
                  particles};
    return out;
}

EquivariantMap evolve_quantile(const EquivariantMap& F0, const KernelSpec& kernel, double T,
                               double dt) {
    const std::size_t steps = step_count(T, dt);
    if (std::abs(F0.winding() - 1.0) > 1e-12) {
        throw ValidationError("baseline.winding=1", "quantile maps must have winding 1");
    }
    if (!F0.is_monotone(1e-12)) throw ValidationError("baseline.monotone", "F0 must be monotone");
    const DriftEvaluator ev(kernel);
    const GridSpec grid = F0.grid();
    const std::size_t n = grid.n_cells();
    std::vector<double> F = F0.base(), mid(n), b, bp;
    for (std::size_t s = 0; s < steps; ++s) {
        ev.along(EquivariantMap(grid, F, 1.0), b, bp);
        for (std::size_t i = 0; i < n; ++i) mid[i] = F[i] + 0.5 * dt * b[i];
        ev.along(EquivariantMap(grid, mid, 1.0), b, bp);
        for (std::size_t i = 0; i < n; ++i) F[i] += dt * b[i];
        if (!EquivariantMap(grid, F, 1.0).is_monotone(1e-12)) {
            throw std::runtime_error("baseline.monotone: quantile lost monotonicity; reduce dt");
        }
    }
    return EquivariantMap(grid, std::move(F), 1.0);
}

}  // namespace torusflow
