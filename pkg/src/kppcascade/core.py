"""Reaction terms, dispersion relations, and the grid/field containers.

Everything downstream (wave profiles, the IMEX solvers, the particle system)
pulls its linearization constants from here, so f'(0) and f'(1) are always
computed from the analytic coefficients, never by finite differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, SubcriticalSpeedError

_KINDS = ("quadratic", "mckean", "polynomial")

# tolerance for the exact-zero conditions f(0) = f(1) = 0
_ZERO_TOL = 1e-12


# ===================================================================
# nonlinearity
# ===================================================================

@dataclass(frozen=True)
class KppNonlinearity:
    """A monostable reaction term f on [0, 1] with exact linearization data.

    Instances are built through :func:`quadratic`, :func:`mckean` or
    :func:`polynomial`; the constructor enforces f(0) = f(1) = 0,
    f'(0) > 0 and f'(1) < 0.  The sampled slope condition
    0 < f(u) <= f'(0) u is checked separately by :func:`validate_kpp`
    so that candidate reaction terms violating only that condition can
    still be constructed and reported on.

    Attributes
    ----------
    kind : str
        One of ``"quadratic"``, ``"mckean"``, ``"polynomial"``.
    coefficients : tuple of float
        Kind-specific parameters; empty for ``"quadratic"``, ``(beta,
        p1, ..., pM)`` for ``"mckean"``, ascending power-series
        coefficients for ``"polynomial"``.
    fprime0, fprime1 : float
        The derivatives f'(0) and f'(1), exact from the coefficients.
    """

    kind: str
    coefficients: Tuple[float, ...]
    fprime0: float
    fprime1: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInputError(f"unknown nonlinearity kind {self.kind!r}")
        if not all(np.isfinite(c) for c in self.coefficients):
            raise InvalidInputError("nonlinearity coefficients must be finite")
        f0 = _eval_raw(self, 0.0)
        f1 = _eval_raw(self, 1.0)
        if abs(f0) > _ZERO_TOL or abs(f1) > _ZERO_TOL:
            raise InvalidInputError(
                f"reaction term must vanish at 0 and 1 (got f(0)={f0:g}, f(1)={f1:g})"
            )
        if not self.fprime0 > 0.0:
            raise InvalidInputError(f"f'(0) must be positive, got {self.fprime0:g}")
        if not self.fprime1 < 0.0:
            raise InvalidInputError(f"f'(1) must be negative, got {self.fprime1:g}")

    def __call__(self, u):
        return eval_nonlinearity(self, u)


def quadratic() -> KppNonlinearity:
    """The logistic reaction term f(u) = u - u^2."""
    return KppNonlinearity("quadratic", (), 1.0, -1.0)


def mckean(beta: float = 1.0, offspring: Sequence[float] = (0.0, 1.0)) -> KppNonlinearity:
    """Reaction term of a branching process with branching rate ``beta``.

    ``offspring[m-1]`` is the probability p_m of m offspring, so the
    default ``(0.0, 1.0)`` is binary branching.  The term is

        f(u) = beta (1 - u) - beta sum_m p_m (1 - u)^m,

    with f'(0) = beta (mean - 1) and f'(1) = -beta (1 - p_1).

    Parameters
    ----------
    beta : float
        Branching rate, must be positive.
    offspring : sequence of float
        Offspring law (p_1, p_2, ...); must sum to 1.

    Returns
    -------
    KppNonlinearity
    """
    p = tuple(float(q) for q in offspring)
    if beta <= 0.0 or not np.isfinite(beta):
        raise InvalidInputError(f"branching rate must be positive, got {beta!r}")
    if any(q < 0.0 for q in p) or abs(sum(p) - 1.0) > _ZERO_TOL:
        raise InvalidInputError("offspring law must be a probability vector")
    mean = sum(m * q for m, q in enumerate(p, start=1))
    fprime0 = beta * (mean - 1.0)
    fprime1 = -beta * (1.0 - p[0])
    return KppNonlinearity("mckean", (float(beta),) + p, fprime0, fprime1)


def polynomial(coefficients: Sequence[float]) -> KppNonlinearity:
    """Reaction term f(u) = sum_j a_j u^j from ascending coefficients."""
    a = tuple(float(c) for c in coefficients)
    if len(a) < 2:
        raise InvalidInputError("polynomial reaction term needs degree >= 1")
    fprime0 = a[1]
    fprime1 = float(sum(j * c for j, c in enumerate(a)))
    return KppNonlinearity("polynomial", a, fprime0, fprime1)


def _eval_raw(f: KppNonlinearity, u):
    """Evaluate f without any domain handling (u may be scalar or array)."""
    if f.kind == "quadratic":
        return u - u * u
    if f.kind == "mckean":
        beta = f.coefficients[0]
        p = f.coefficients[1:]
        s = 1.0 - np.asarray(u, dtype=float)
        acc = np.zeros_like(s)
        for q in reversed(p):        # Horner in s = 1 - u
            acc = acc * s + q
        acc *= s
        out = beta * (s - acc)
        return out if out.ndim else float(out)
    # polynomial, Horner in u
    acc = np.zeros_like(np.asarray(u, dtype=float))
    for c in reversed(f.coefficients):
        acc = acc * u + c
    return acc if acc.ndim else float(acc)


def eval_nonlinearity(f: KppNonlinearity, u, *, warn_out_of_range: bool = True):
    """Evaluate the reaction term at ``u`` (scalar or array).

    Values outside [0, 1] are clamped to the interval first; a
    RuntimeWarning is emitted when that happens unless
    ``warn_out_of_range`` is False (the IMEX solvers clamp on their own
    and keep counters instead).

    Parameters
    ----------
    f : KppNonlinearity
    u : float or ndarray
        State value(s); must be finite.

    Returns
    -------
    float or ndarray
        f(u) with the same shape as ``u``.
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("reaction term evaluated at non-finite state")
    clipped = np.clip(arr, 0.0, 1.0)
    if warn_out_of_range and np.any(clipped != arr):
        warnings.warn("state outside [0, 1] clamped before reaction evaluation",
                      RuntimeWarning, stacklevel=2)
    out = _eval_raw(f, clipped)
    if np.isscalar(u) or np.ndim(u) == 0:
        return float(out)
    return out


def d_nonlinearity(f: KppNonlinearity, u):
    """Analytic f'(u) for any catalogue kind (scalar or array)."""
    if f.kind == "quadratic":
        return 1.0 - 2.0 * np.asarray(u, dtype=float) if np.ndim(u) else 1.0 - 2.0 * u
    if f.kind == "mckean":
        beta = f.coefficients[0]
        p = f.coefficients[1:]
        s = 1.0 - np.asarray(u, dtype=float)
        acc = np.zeros_like(s)
        for m, q in reversed(list(enumerate(p, start=1))):
            acc = acc * s + m * q
        out = beta * (acc - 1.0)
        return out if out.ndim else float(out)
    acc = np.zeros_like(np.asarray(u, dtype=float))
    for j, c in reversed(list(enumerate(f.coefficients))):
        if j >= 1:
            acc = acc * u + j * c
    return acc if acc.ndim else float(acc)


def d2_nonlinearity(f: KppNonlinearity, u):
    """Analytic f''(u) for any catalogue kind (scalar or array)."""
    if f.kind == "quadratic":
        return np.full_like(np.asarray(u, dtype=float), -2.0) if np.ndim(u) else -2.0
    if f.kind == "mckean":
        beta = f.coefficients[0]
        p = f.coefficients[1:]
        s = 1.0 - np.asarray(u, dtype=float)
        acc = np.zeros_like(s)
        for m, q in reversed(list(enumerate(p, start=1))):
            if m >= 2:
                acc = acc * s + m * (m - 1) * q
        out = -beta * acc
        return out if out.ndim else float(out)
    acc = np.zeros_like(np.asarray(u, dtype=float))
    for j, c in reversed(list(enumerate(f.coefficients))):
        if j >= 2:
            acc = acc * u + j * (j - 1) * c
    return acc if acc.ndim else float(acc)


def shifted_coefficients(f: KppNonlinearity) -> np.ndarray:
    """Ascending coefficients b with f(1 - p) = sum_m b[m] p^m, b[0] = 0.

    Lets callers evaluate f near u = 1 without the catastrophic
    cancellation of forming u - u^2 (or its analogues) directly; the
    constant term vanishes analytically because f(1) = 0.
    """
    if f.kind == "quadratic":
        return np.array([0.0, 1.0, -1.0])
    if f.kind == "mckean":
        beta = f.coefficients[0]
        p = f.coefficients[1:]
        b = np.zeros(len(p) + 1)
        b[1] = beta * (1.0 - p[0])
        for m, q in enumerate(p[1:], start=2):
            b[m] = -beta * q
        return b
    comp = np.polynomial.Polynomial(list(f.coefficients))(
        np.polynomial.Polynomial([1.0, -1.0])
    )
    b = np.asarray(comp.coef, dtype=float).copy()
    b[0] = 0.0  # analytically f(1); only rounding residue lives here
    return b


@dataclass(frozen=True)
class ValidationReport:
    """Pass/fail record for each monostability condition."""

    results: Tuple[Tuple[str, bool], ...]
    n_samples: int

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.results)

    @property
    def failures(self) -> Tuple[str, ...]:
        return tuple(name for name, ok in self.results if not ok)

    def as_dict(self) -> dict:
        return dict(self.results)


def validate_kpp(f: KppNonlinearity, n_samples: int = 257) -> ValidationReport:
    """Check the monostability conditions on a uniform sample of (0, 1).

    The five conditions are: f(0) = 0, f(1) = 0, f'(0) > 0, f'(1) < 0,
    and 0 < f(u) <= f'(0) u on the open interval.  Derivatives come from
    the analytic coefficients.  Failures are reported, never raised.

    Parameters
    ----------
    f : KppNonlinearity
    n_samples : int
        Number of interior sample points, at least 10.

    Returns
    -------
    ValidationReport
    """
    if n_samples < 10:
        raise InvalidInputError("validate_kpp needs n_samples >= 10")
    u = np.linspace(0.0, 1.0, n_samples + 2)[1:-1]
    fu = _eval_raw(f, u)
    results = (
        ("f(0) = 0", abs(_eval_raw(f, 0.0)) <= _ZERO_TOL),
        ("f(1) = 0", abs(_eval_raw(f, 1.0)) <= _ZERO_TOL),
        ("f'(0) > 0", f.fprime0 > 0.0),
        ("f'(1) < 0", f.fprime1 < 0.0),
        ("0 < f(u) on (0,1)", bool(np.all(fu > 0.0))),
        ("f(u) <= f'(0) u on (0,1)", bool(np.all(fu <= f.fprime0 * u + _ZERO_TOL))),
    )
    return ValidationReport(results, n_samples)


# ===================================================================
# dispersion
# ===================================================================

@dataclass(frozen=True)
class DispersionData:
    """Minimal speed and exponential decay rates of the linearized front."""

    fprime0: float
    cstar: float
    lambdastar: float
    lambda_c: Optional[float] = None


def dispersion(f: KppNonlinearity, c: Optional[float] = None) -> DispersionData:
    """Minimal speed c* = 2 sqrt(f'(0)) and the decay rate at speed c.

    For c >= c* the linearization u'' + c u' + f'(0) u = 0 has the slow
    root lambda_c = (c - sqrt(c^2 - 4 f'(0)))/2, which collapses to
    lambda* = sqrt(f'(0)) at the minimal speed.

    Parameters
    ----------
    f : KppNonlinearity
    c : float, optional
        Wave speed; when supplied it must satisfy c >= c*.

    Returns
    -------
    DispersionData

    Raises
    ------
    SubcriticalSpeedError
        If ``c`` is below the minimal speed.
    """
    lambdastar = float(np.sqrt(f.fprime0))
    cstar = 2.0 * lambdastar
    lambda_c = None
    if c is not None:
        if not np.isfinite(c):
            raise InvalidInputError("wave speed must be finite")
        if c < cstar:
            raise SubcriticalSpeedError(
                f"speed {c:g} is below the minimal speed {cstar:g}"
            )
        disc = c * c - 4.0 * f.fprime0
        lambda_c = (c - np.sqrt(max(disc, 0.0))) / 2.0
    return DispersionData(f.fprime0, cstar, lambdastar, lambda_c)


# ===================================================================
# grid and field containers
# ===================================================================

@dataclass(frozen=True)
class Grid1D:
    """Uniform one dimensional grid x_j = x0 + j dx, j = 0..n-1."""

    x0: float
    dx: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.x0) and np.isfinite(self.dx)) or self.dx <= 0.0:
            raise InvalidInputError(f"grid spacing must be positive, got {self.dx!r}")
        if self.n < 3:
            raise InvalidInputError(f"grid needs at least 3 points, got {self.n}")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def x_last(self) -> float:
        return self.x0 + self.dx * (self.n - 1)

    def shifted(self, offset: float) -> "Grid1D":
        return Grid1D(self.x0 + offset, self.dx, self.n)


@dataclass
class FieldStack:
    """k solution components sampled on one grid at one time.

    ``values`` has shape (k, n); component k-1 (the last row) is the
    autonomous one and never references a coupling partner.
    """

    grid: Grid1D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n:
            raise InvalidInputError(
                f"field values must be (k, {self.grid.n}), got {self.values.shape}"
            )
        if self.values.shape[0] < 1:
            raise InvalidInputError("field stack needs at least one component")
        if self.time < 0.0:
            raise InvalidInputError("time must be nonnegative")

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> np.ndarray:
        """Component by 1-based index, matching the i = 1..k labeling."""
        if not 1 <= i <= self.k:
            raise InvalidInputError(f"component index {i} outside 1..{self.k}")
        return self.values[i - 1]

    def range_violation(self) -> float:
        """Largest distance of any value from the interval [0, 1]."""
        v = self.values
        return float(max(np.max(-v, initial=0.0), np.max(v - 1.0, initial=0.0)))

    def copy(self) -> "FieldStack":
        return FieldStack(self.grid, self.values.copy(), self.time)


def heaviside_stack(grid: Grid1D, k: int, interface: float = 0.0) -> FieldStack:
    """Heaviside-type initial data: every component 1 left of ``interface``."""
    row = np.where(grid.x <= interface, 1.0, 0.0)
    return FieldStack(grid, np.tile(row, (k, 1)), 0.0)
