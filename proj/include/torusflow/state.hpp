#pragma once

#include "torusflow/grid.hpp"

namespace torusflow {

/// Solver state: quantile derivative g, quantile mean M, time t.
struct CoupledState {
    PeriodicField g;
    double M = 0.0;
    double t = 0.0;
};

}  // namespace torusflow
