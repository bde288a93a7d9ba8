"""Reflected SPDE simulations of noisy transport on the circle."""

from ._torusflow import (
    SUMMARY_SCHEMA_VERSION,
    Kernel,
    ValidationError,
    circular_wasserstein,
    coupled_pair,
    d12,
    evolve_quantile,
    reconstruct_A,
    run_config,
    simulate,
    solve_obstacle,
    torus_distance,
)

__all__ = [
    "SUMMARY_SCHEMA_VERSION",
    "Kernel",
    "ValidationError",
    "circular_wasserstein",
    "coupled_pair",
    "d12",
    "evolve_quantile",
    "reconstruct_A",
    "run_config",
    "simulate",
    "solve_obstacle",
    "torus_distance",
]
