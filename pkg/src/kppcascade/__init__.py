"""Numerical laboratory for cascading Fisher-KPP fronts.

Subpackage map: :mod:`~kppcascade.core` (reaction terms, dispersion,
grids), :mod:`~kppcascade.waves` (traveling-wave profiles),
:mod:`~kppcascade.evolve` (IMEX solvers in lab and moving frames),
:mod:`~kppcascade.selfsim` (self-similar spectral tools and half-line
heat heuristics), :mod:`~kppcascade.fronts` (level sets and front
regressions), :mod:`~kppcascade.bbm` (multitype branching Brownian
motion), :mod:`~kppcascade.cli` (experiment orchestration).
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bbm import (
    BbmConfig,
    BbmReplica,
    ComparisonReport,
    EmpiricalCdf,
    MartingaleSeries,
    compare_bbm_pde,
    derivative_martingale_series,
    empirical_max_cdf,
    simulate_replica,
    simulate_replicas,
)
from .core import (
    DispersionData,
    FieldStack,
    Grid1D,
    KppNonlinearity,
    ValidationReport,
    dispersion,
    eval_nonlinearity,
    heaviside_stack,
    mckean,
    polynomial,
    quadratic,
    validate_kpp,
)
from .evolve import (
    EvolveConfig,
    FrameSpec,
    OrderingReport,
    Trajectory,
    check_ordering,
    evolve_lab,
    evolve_linear_dirichlet,
    evolve_moving_frame,
    heaviside_in_frames,
)
from .fronts import (
    FrontFit,
    FrontTrace,
    LevelCrossings,
    estimate_x_infty,
    extract_level_set,
    fit_log_correction,
    front_separation,
)
from .selfsim import (
    MResult,
    SelfSimilarState,
    SpectralDecomposition,
    WSeries,
    apply_M,
    decompose,
    evolve_w_system,
    excited_eigenfunction,
    forced_halfline_heat,
    halfline_heat,
    principal_eigenfunction,
    quadratic_form_Q,
    remainder_decay,
    split_on_e0,
    to_self_similar,
)
from .waves import TailFit, WaveProfile, shift_align, solve_profile, tail_fit

__all__ = [
    "BbmConfig",
    "BbmReplica",
    "ComparisonReport",
    "DispersionData",
    "EmpiricalCdf",
    "EvolveConfig",
    "FieldStack",
    "FrameSpec",
    "FrontFit",
    "FrontTrace",
    "Grid1D",
    "KppNonlinearity",
    "LevelCrossings",
    "MResult",
    "MartingaleSeries",
    "OrderingReport",
    "SelfSimilarState",
    "SpectralDecomposition",
    "TailFit",
    "Trajectory",
    "ValidationReport",
    "WSeries",
    "WaveProfile",
    "apply_M",
    "check_ordering",
    "compare_bbm_pde",
    "decompose",
    "derivative_martingale_series",
    "dispersion",
    "empirical_max_cdf",
    "estimate_x_infty",
    "eval_nonlinearity",
    "evolve_lab",
    "evolve_linear_dirichlet",
    "evolve_moving_frame",
    "evolve_w_system",
    "excited_eigenfunction",
    "extract_level_set",
    "fit_log_correction",
    "forced_halfline_heat",
    "front_separation",
    "halfline_heat",
    "heaviside_in_frames",
    "heaviside_stack",
    "mckean",
    "polynomial",
    "principal_eigenfunction",
    "quadratic",
    "quadratic_form_Q",
    "remainder_decay",
    "shift_align",
    "simulate_replica",
    "simulate_replicas",
    "solve_profile",
    "split_on_e0",
    "tail_fit",
    "to_self_similar",
    "validate_kpp",
    "__version__",
]
