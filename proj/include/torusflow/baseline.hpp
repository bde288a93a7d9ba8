#pragma once

#include <vector>

#include "torusflow/grid.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/torus.hpp"

namespace torusflow {

/// Lagrangian flow u ↦ x(u, t) on a grid plus the transported measure.
struct FlowState {
    EquivariantMap x;  // x(u_i, t), winding 1
    TorusMeasure mu;   // image of μ0 under x(·, t)
    double t;
    std::vector<Atom> particles;  // carriers of μ_t (atoms, or bin quadrature points)
};

/// Explicit midpoint integration of dx/dt = b(x, μ_t), μ_t = x(·, t)#μ0.
/// Histogram measures are carried by 4 Gauss points per bin. Throws
/// std::runtime_error if the grid map stops being monotone.
FlowState evolve_lagrangian(const TorusMeasure& mu0, const KernelSpec& kernel, double T, double dt,
                            const GridSpec& map_grid = GridSpec(64));

/// Explicit midpoint integration of dF/dt = ∫ h(F - F(a)) da for a winding-1
/// monotone F0, trapezoid quadrature on the nodes of F.
EquivariantMap evolve_quantile(const EquivariantMap& F0, const KernelSpec& kernel, double T,
                               double dt);

}  // namespace torusflow
