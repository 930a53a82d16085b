"""Front location analysis: level sets, log-correction fits, shift estimates.

The solvers produce fields and front traces; this module turns them into
the handful of numbers the asymptotic theory predicts.  A front position
series m(t) is fitted against the model

    m(t) = c_hat * t - a_hat * ln t + b_hat

with the linear coefficient frozen to the known spreading speed, because a
free linear term absorbs essentially all of the logarithmic signal over
windows of one or two decades.  Differences of front positions between
components, and differences of aligned wave shifts, are the quantities
that converge at desk scale; absolute constants do not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence, Tuple

import numpy as np

from .core import FieldStack
from .errors import InvalidInputError, NoDataError, NoFrontError, NotConvergedError
from .waves import WaveProfile, shift_align

if TYPE_CHECKING:  # pragma: no cover
    from .evolve import FrameSpec

__all__ = [
    "FrontTrace",
    "FrontFit",
    "LevelCrossings",
    "extract_level_set",
    "fit_log_correction",
    "front_separation",
    "estimate_x_infty",
]

_WHICH = ("max_level_set", "min_level_set")


@dataclass(frozen=True)
class FrontTrace:
    """Time series of one level-set location for one component.

    ``which`` records whether the rightmost or the leftmost crossing was
    tracked; for monotone profiles the two coincide.
    """

    level: float
    times: np.ndarray
    positions: np.ndarray
    which: str = "max_level_set"

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        if not 0.0 < self.level < 1.0:
            raise InvalidInputError(f"level must lie in (0, 1), got {self.level}")
        if self.which not in _WHICH:
            raise InvalidInputError(f"which must be one of {_WHICH}, got {self.which!r}")
        if self.times.shape != self.positions.shape or self.times.ndim != 1:
            raise InvalidInputError("times and positions must be matching 1-d arrays")
        if self.times.size and np.any(np.diff(self.times) <= 0.0):
            raise InvalidInputError("trace times must be strictly increasing")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.positions))):
            raise InvalidInputError("trace samples must be finite")

    def __len__(self) -> int:
        return self.times.size

    def restricted(self, t_lo: float, t_hi: float) -> "FrontTrace":
        """The sub-trace with t_lo <= t <= t_hi."""
        keep = (self.times >= t_lo) & (self.times <= t_hi)
        return FrontTrace(self.level, self.times[keep], self.positions[keep], self.which)


@dataclass(frozen=True)
class FrontFit:
    """Least-squares fit of a front trace to c_hat*t - a_hat*ln t + b_hat.

    c_hat is frozen by the caller, never regressed.  The window must span
    at least a decade in t; anything shorter cannot separate the
    logarithm from the constant.
    """

    c_hat: float
    a_hat: float
    b_hat: float
    rms_residual: float
    window: Tuple[float, float]

    def __post_init__(self):
        lo, hi = self.window
        if not (lo > 0.0 and hi >= 10.0 * lo):
            raise InvalidInputError(
                f"fit window must span at least a decade with positive endpoints, got {self.window}"
            )
        if not np.isfinite(self.rms_residual):
            raise InvalidInputError("rms_residual must be finite")

    def model(self, t):
        """Evaluate the fitted front location at times t."""
        t = np.asarray(t, dtype=float)
        return self.c_hat * t - self.a_hat * np.log(t) + self.b_hat


@dataclass(frozen=True)
class LevelCrossings:
    """All locations where a sampled field crosses one level."""

    level: float
    positions: np.ndarray

    @property
    def max_position(self) -> float:
        return float(self.positions[-1])

    @property
    def min_position(self) -> float:
        return float(self.positions[0])


def extract_level_set(field: FieldStack, level: float, component: int = 1) -> LevelCrossings:
    """Locate every crossing of ``level`` in one component of ``field``.

    Crossings between adjacent grid points are placed by linear
    interpolation; grid points that hit the level exactly count as
    crossings themselves.  Raises NoFrontError when the component never
    meets the level.
    """
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    x = field.grid.x
    u = field.component(component)
    d = u - level
    exact = np.nonzero(d == 0.0)[0]
    strict = np.nonzero(d[:-1] * d[1:] < 0.0)[0]
    positions = []
    for j in exact:
        positions.append(x[j])
    for j in strict:
        positions.append(x[j] + field.grid.dx * d[j] / (d[j] - d[j + 1]))
    if not positions:
        raise NoFrontError(
            f"component {component} never crosses level {level} on the grid"
        )
    return LevelCrossings(level, np.sort(np.asarray(positions, dtype=float)))


def fit_log_correction(
    trace: FrontTrace, cstar: float, window: Tuple[float, float]
) -> FrontFit:
    """Regress trace positions minus cstar*t on (-ln t, 1) over a window.

    Ordinary least squares with the linear term removed beforehand.  At
    least 20 samples must fall inside the window.
    """
    lo, hi = float(window[0]), float(window[1])
    keep = (trace.times >= lo) & (trace.times <= hi)
    t = trace.times[keep]
    if t.size < 20:
        raise NoDataError(
            f"only {t.size} trace samples inside window [{lo}, {hi}]; need at least 20"
        )
    y = trace.positions[keep] - cstar * t
    design = np.column_stack([-np.log(t), np.ones_like(t)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    a_hat, b_hat = float(coef[0]), float(coef[1])
    resid = y - design @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    return FrontFit(c_hat=float(cstar), a_hat=a_hat, b_hat=b_hat, rms_residual=rms, window=(lo, hi))


def front_separation(
    trace_a: FrontTrace, trace_b: FrontTrace
) -> Tuple[np.ndarray, float]:
    """Per-time position differences a - b and their slope against ln t.

    The traces must be sampled at identical times.  Returns the
    difference series and the least-squares slope of difference versus
    ln t (intercept included in the regression).
    """
    if len(trace_a) != len(trace_b) or not np.allclose(
        trace_a.times, trace_b.times, rtol=0.0, atol=1e-9
    ):
        raise InvalidInputError("front traces do not share sample times")
    if len(trace_a) < 2:
        raise NoDataError("need at least two shared samples to measure separation")
    t = trace_a.times
    if t[0] <= 0.0:
        raise InvalidInputError("separation slope needs strictly positive times")
    diff = trace_a.positions - trace_b.positions
    logt = np.log(t)
    if np.ptp(logt) == 0.0:
        raise NoDataError("sample times do not span an interval")
    design = np.column_stack([logt, np.ones_like(logt)])
    coef, _, _, _ = np.linalg.lstsq(design, diff, rcond=None)
    return diff, float(coef[0])


def estimate_x_infty(
    field: FieldStack,
    frame: "FrameSpec",
    profile: WaveProfile,
    component: int = 1,
    in_frame: bool = True,
) -> float:
    """Finite-time wave shift of one component against the minimal wave.

    Returns the s with field(x) close to U(x + s), where U is the
    profile anchored at U(0) = 1/2.  With ``in_frame`` false the field is
    taken in laboratory coordinates and translated by -xi(T) first.
    Absolute values of s carry an initial-data dependent offset; only
    differences between components of one run are meaningful.
    """
    grid = field.grid
    if not in_frame:
        grid = grid.shifted(-frame.xi(field.time))
    u = field.component(component)
    shift, distance = shift_align(grid.x, u, profile)
    if distance > 0.2:
        raise NotConvergedError(
            f"aligned shape distance {distance:.3g} exceeds 0.2; "
            "field is not close to the traveling wave yet"
        )
    return -shift
