"""Deep BSDE/PDE solvers for multi-asset Heston option pricing."""

from dbb._core import (
    HestonParams,
    McEstimate,
    Method,
    SolverConfig,
    SolverRun,
    bs_closed_form,
    feller_check,
    iqr,
    mc_price,
    median_pe,
    payoff,
    quartiles,
    simulate_paths,
    solve,
    sqrt_scaling_fit,
)

__all__ = [
    "HestonParams",
    "McEstimate",
    "Method",
    "SolverConfig",
    "SolverRun",
    "bs_closed_form",
    "feller_check",
    "iqr",
    "mc_price",
    "median_pe",
    "payoff",
    "quartiles",
    "simulate_paths",
    "solve",
    "sqrt_scaling_fit",
]

__version__ = "0.1.0"
