"""Time stepping for the cascading reaction-diffusion system.

One first-order IMEX scheme drives three solver entry points.  Diffusion
is treated implicitly by a tridiagonal solve, so the only time-step
restrictions come from the explicit pieces: the reaction and coupling
terms ask for dt below about 1/(L + alpha) with L the Lipschitz bound of
f on [0, 1], and the upwinded advection of the linearized Dirichlet
solver asks for the usual CFL number at most one.  Both are far looser
than the accuracy-motivated dt <= 10 dx^2 enforced at configuration
time.  Under these bounds each update of the nonlinear solvers is a
convex combination of old values and boundary data, which is what makes
the scheme monotone: order between solutions is preserved step by step,
fields stay inside [0, 1] without ever touching the clamp, and
comparison-principle experiments are meaningful at the discrete level.

The nonlinear moving-frame solver does not discretize its advection
term at all: the storage window slides by whole cells to track each
frame, an exact translation that adds no numerical diffusion, and the
sub-cell remainder of the frame motion is accounted for when fields are
read out or the coupling shift is evaluated.

The triangular structure is kept exact by evaluating every coupling term
from the previous step's partner component, so component i never sees
its own update or any component below it.

Lab-frame runs can recentre their window as the front advances
(``window_policy="follow_front"``); runs in the logarithmically shifted
frames keep the front at an essentially fixed station instead, and the
linearized Dirichlet system lives on a half line with zero boundary
values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import FieldStack, Grid1D, KppNonlinearity, d_nonlinearity, eval_nonlinearity
from .errors import InvalidInputError, NumericalError
from .fronts import FrontTrace

__all__ = [
    "FrameSpec",
    "EvolveConfig",
    "Trajectory",
    "OrderingReport",
    "evolve_lab",
    "evolve_moving_frame",
    "evolve_linear_dirichlet",
    "check_ordering",
    "heaviside_in_frames",
]

_WINDOW_POLICIES = ("fixed", "follow_front")
_BOUNDARIES = ("heaviside_clamp", "dirichlet_zero")
_CFL_SAFETY = 10.0
_CLAMP_TOL = 1e-12
_DISCARD_TOL = 1e-12
_EDGE_FRACTION = 0.2
_SHIFT_FRACTION = 0.25
_FRONT_LEVEL = 0.5


@dataclass(frozen=True)
class FrameSpec:
    """Reference frame xi(t) = cstar*t - a_coeff*ln(t + t0).

    ``a_coeff`` carries the whole 1/lambda_* factor, so the frame for
    component i of a k-cascade at minimal speed uses
    a_coeff = (3/2 + i - k)/lambda_*.
    """

    cstar: float
    a_coeff: float
    t0: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.cstar) and np.isfinite(self.a_coeff)):
            raise InvalidInputError("frame coefficients must be finite")
        if not (np.isfinite(self.t0) and self.t0 > 0.0):
            raise InvalidInputError(f"t0 must be positive, got {self.t0}")

    def xi(self, t):
        """Frame position at time t (vectorizes over t)."""
        return self.cstar * np.asarray(t, dtype=float) - self.a_coeff * np.log(
            np.asarray(t, dtype=float) + self.t0
        )

    def xi_prime(self, t):
        """Frame velocity at time t."""
        return self.cstar - self.a_coeff / (np.asarray(t, dtype=float) + self.t0)


@dataclass(frozen=True)
class EvolveConfig:
    """Everything a run needs besides its initial data.

    ``snapshot_times`` requests field copies at the first step time at
    or past each entry; the final state is always kept.  Validation
    raises before any stepping happens, including the accuracy bound
    dt <= 10 dx^2 for the explicit reaction and, when frames are
    supplied, the CFL condition dt |xi'| <= dx that the linearized
    solver's upwinding needs and that keeps every solver's per-step
    frame motion below one cell.
    """

    k: int
    alpha: float
    f: KppNonlinearity
    grid: Grid1D
    dt: float
    t_end: float
    frames: Optional[Tuple[FrameSpec, ...]] = None
    window_policy: str = "fixed"
    boundary: str = "heaviside_clamp"
    snapshot_times: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0.0):
            raise InvalidInputError(f"alpha must be nonnegative, got {self.alpha}")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.t_end) and self.t_end > 0.0):
            raise InvalidInputError(f"t_end must be positive, got {self.t_end}")
        if self.t_end < self.dt / 2.0:
            raise InvalidInputError("t_end shorter than half a step")
        dx = self.grid.dx
        if self.dt > _CFL_SAFETY * dx * dx:
            raise InvalidInputError(
                f"dt = {self.dt:g} violates the reaction accuracy bound "
                f"{_CFL_SAFETY:g}*dx^2 = {_CFL_SAFETY * dx * dx:g}"
            )
        if self.window_policy not in _WINDOW_POLICIES:
            raise InvalidInputError(
                f"window_policy must be one of {_WINDOW_POLICIES}, got {self.window_policy!r}"
            )
        if self.boundary not in _BOUNDARIES:
            raise InvalidInputError(
                f"boundary must be one of {_BOUNDARIES}, got {self.boundary!r}"
            )
        if self.frames is not None:
            frames = tuple(self.frames)
            if len(frames) != self.k:
                raise InvalidInputError(
                    f"need one frame per component: got {len(frames)} for k = {self.k}"
                )
            object.__setattr__(self, "frames", frames)
            speed = max(
                max(abs(fr.xi_prime(0.0)), abs(fr.xi_prime(self.t_end))) for fr in frames
            )
            if speed * self.dt / dx > 1.0:
                raise InvalidInputError(
                    f"advective CFL violated: |xi'| up to {speed:g} needs dt <= {dx / speed:g}"
                )
        if self.snapshot_times is not None:
            snaps = np.unique(np.asarray(self.snapshot_times, dtype=float))
            if snaps.size and (snaps[0] <= 0.0 or snaps[-1] > self.t_end + self.dt / 2.0):
                raise InvalidInputError(
                    "snapshot times must lie in (0, t_end]"
                )
            object.__setattr__(self, "snapshot_times", tuple(snaps))

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass
class Trajectory:
    """Output of one evolution run.

    Snapshots are full field copies at the requested times (plus the
    final state); the step arrays hold cheap per-step diagnostics for
    every completed step, including the rightmost 1/2-level location of
    each component (NaN where the level is not attained).  Positions are
    absolute lab coordinates for lab runs and frame coordinates
    otherwise.
    """

    times: np.ndarray
    snapshots: List[FieldStack]
    step_times: np.ndarray
    minima: np.ndarray
    maxima: np.ndarray
    clamp_counts: np.ndarray
    front_positions: np.ndarray
    front_level: float
    kind: str
    frames: Optional[Tuple[FrameSpec, ...]] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.snapshots) != self.times.size:
            raise InvalidInputError("one snapshot per snapshot time required")
        if self.times.size and np.any(np.diff(self.times) <= 0.0):
            raise InvalidInputError("snapshot times must be strictly increasing")

    @property
    def k(self) -> int:
        return self.snapshots[-1].k

    @property
    def final(self) -> FieldStack:
        return self.snapshots[-1]

    def total_clamps(self, component: Optional[int] = None) -> int:
        if component is None:
            return int(self.clamp_counts.sum())
        return int(self.clamp_counts[:, component - 1].sum())

    def front_trace(self, component: int = 1, which: str = "max_level_set") -> FrontTrace:
        """Per-step front record of one component as a FrontTrace.

        Steps where the component does not attain the tracked level are
        dropped.
        """
        pos = self.front_positions[:, component - 1]
        keep = np.isfinite(pos)
        return FrontTrace(self.front_level, self.step_times[keep], pos[keep], which)


@dataclass(frozen=True)
class OrderingReport:
    """Pointwise comparison scale*a >= b on x > 0, one row per snapshot."""

    times: np.ndarray
    margins: np.ndarray
    scale: float

    @property
    def holds(self) -> np.ndarray:
        return self.margins >= 0.0

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.holds))

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())


def heaviside_in_frames(
    grid: Grid1D, frames: Sequence[FrameSpec], interface: float = 0.0
) -> FieldStack:
    """Lab-frame Heaviside data expressed in each component's own frame.

    The frames generally start at different lab positions xi(0), so a
    step at a common lab interface lands at a different grid location
    per component.  Using this instead of a plain per-frame step keeps
    the cross-component shift constants comparable.
    """
    rows = [
        np.where(grid.x + fr.xi(0.0) <= interface, 1.0, 0.0) for fr in frames
    ]
    return FieldStack(grid, np.vstack(rows), 0.0)


def _diffusion_solver(n: int, dx: float, dt: float):
    """Factorized (I - dt D2) with identity rows at both boundaries."""
    r = dt / (dx * dx)
    main = np.full(n, 1.0 + 2.0 * r)
    lower = np.full(n - 1, -r)
    upper = np.full(n - 1, -r)
    main[0] = main[-1] = 1.0
    lower[-1] = 0.0
    upper[0] = 0.0
    matrix = sp.diags([lower, main, upper], offsets=(-1, 0, 1), format="csc")
    return splu(matrix)


def _rightmost_crossings(x: np.ndarray, values: np.ndarray, level: float) -> np.ndarray:
    """Rightmost crossing of ``level`` per component row, NaN if absent."""
    out = np.full(values.shape[0], np.nan)
    d = values - level
    for i in range(values.shape[0]):
        di = d[i]
        best = -np.inf
        exact = np.nonzero(di == 0.0)[0]
        if exact.size:
            best = x[exact[-1]]
        strict = np.nonzero(np.sign(di[:-1]) * np.sign(di[1:]) < 0.0)[0]
        if strict.size:
            j = strict[-1]
            cand = x[j] + (x[j + 1] - x[j]) * di[j] / (di[j] - di[j + 1])
            best = max(best, cand)
        if np.isfinite(best):
            out[i] = best
    return out


def _check_init(config: EvolveConfig, init: FieldStack):
    if init.k != config.k:
        raise InvalidInputError(
            f"initial data has {init.k} components, config wants {config.k}"
        )
    if init.grid != config.grid:
        raise InvalidInputError("initial data grid differs from the configured grid")


def _evolve(config: EvolveConfig, init: FieldStack, mode: str) -> Trajectory:
    _check_init(config, init)
    linear = mode == "linear_dirichlet"
    framed = mode != "lab"
    if framed and config.frames is None:
        raise InvalidInputError(f"{mode} evolution requires frames for every component")
    if framed and not linear and config.window_policy != "fixed":
        raise InvalidInputError(
            "frame runs manage their window through the frame itself; use window_policy='fixed'"
        )
    follow = config.window_policy == "follow_front" and not framed
    sliding = framed and not linear

    grid = config.grid
    dx, n, k, dt = grid.dx, grid.n, config.k, config.dt
    x = grid.x
    n_steps = config.n_steps
    alpha = config.alpha

    if linear:
        left_val = right_val = 0.0
        rate = float(d_nonlinearity(config.f, 0.0))
    else:
        left_val = 1.0 if config.boundary == "heaviside_clamp" else 0.0
        right_val = 0.0
    fill_left = left_val

    lu = _diffusion_solver(n, dx, dt)
    v = init.values.astype(float, copy=True)
    v[:, 0] = left_val
    v[:, -1] = right_val

    # Sliding-window bookkeeping for the nonlinear frame solver: stored
    # sample j of component i sits at lab position x_j + xi_i(0) + cells[i]*dx,
    # so its frame coordinate is x_j + offset_i with
    # offset_i = cells[i]*dx - (xi_i(t) - xi_i(0)), a fraction of a cell.
    cells = np.zeros(k, dtype=np.int64)
    if framed:
        xi0 = np.array([float(fr.xi(0.0)) for fr in config.frames])

    step_times = np.empty(n_steps)
    minima = np.empty((n_steps, k))
    maxima = np.empty((n_steps, k))
    clamp_counts = np.zeros((n_steps, k), dtype=np.int64)
    front_positions = np.empty((n_steps, k))

    requested = list(config.snapshot_times or ())
    req_idx = 0
    snap_times: List[float] = []
    snapshots: List[FieldStack] = []
    width = x[-1] - x[0]

    def frame_offsets(t: float) -> np.ndarray:
        travelled = np.array(
            [float(fr.xi(t)) for fr in config.frames]
        ) - xi0
        return cells * dx - travelled

    def frame_readout(t: float) -> np.ndarray:
        off = frame_offsets(t)
        rows = [np.interp(x, x + off[i], v[i]) for i in range(k)]
        return np.vstack(rows)

    for step in range(n_steps):
        t = step * dt
        t_new = (step + 1) * dt

        if linear:
            expl = v + (dt * rate) * v
        else:
            expl = v + dt * eval_nonlinearity(config.f, v, warn_out_of_range=False)

        if alpha > 0.0 and k > 1:
            for i in range(k - 1):
                if sliding:
                    shift = float(xi0[i] - xi0[i + 1] + (cells[i] - cells[i + 1]) * dx)
                elif linear:
                    shift = float(config.frames[i].xi(t) - config.frames[i + 1].xi(t))
                else:
                    shift = 0.0
                if framed:
                    if abs(shift) >= width:
                        raise NumericalError(
                            f"inter-frame shift {shift:.4g} left the grid at t = {t:.6g}"
                        )
                    partner = np.interp(
                        x + shift, x, v[i + 1], left=fill_left, right=0.0
                    )
                else:
                    partner = v[i + 1]
                if linear:
                    expl[i] += (dt * alpha) * partner
                else:
                    expl[i] += (dt * alpha) * partner * (1.0 - v[i])

        if linear:
            # Upwind advection; the Dirichlet wall pins the window, so the
            # frame transport cannot be absorbed into grid shifts here.
            for i in range(k):
                speed = float(config.frames[i].xi_prime(t))
                nu = dt * speed / dx
                if speed >= 0.0:
                    expl[i, 1:-1] += nu * (v[i, 2:] - v[i, 1:-1])
                else:
                    expl[i, 1:-1] += nu * (v[i, 1:-1] - v[i, :-2])

        if not linear:
            out_of_range = (expl < -_CLAMP_TOL) | (expl > 1.0 + _CLAMP_TOL)
            clamp_counts[step] = out_of_range.sum(axis=1)
            np.clip(expl, 0.0, 1.0, out=expl)

        expl[:, 0] = left_val
        expl[:, -1] = right_val

        v = lu.solve(expl.T).T
        if not linear:
            clamp_counts[step] += (
                (v < -_CLAMP_TOL) | (v > 1.0 + _CLAMP_TOL)
            ).sum(axis=1)
            np.clip(v, 0.0, 1.0, out=v)

        if not np.all(np.isfinite(v)):
            raise NumericalError(
                f"non-finite value detected at step {step + 1}, t = {t_new:.6g}"
            )

        if sliding:
            # Advance each window by whole cells so that it keeps tracking
            # its frame; the transport itself is an exact translation.
            for i in range(k):
                travelled = float(config.frames[i].xi(t_new)) - xi0[i]
                target = int(np.floor(travelled / dx + 0.5))
                m = target - int(cells[i])
                if m == 0:
                    continue
                if abs(m) >= n:
                    raise NumericalError(
                        f"frame {i + 1} outran its window at t = {t_new:.6g}"
                    )
                if m > 0:
                    worst = float(np.abs(v[i, :m] - left_val).max())
                    if worst > 1e-6:
                        raise NumericalError(
                            f"window slide at t = {t_new:.6g} would discard cells "
                            f"off the left boundary value by {worst:.3g}; widen the grid"
                        )
                    v[i, : n - m] = v[i, m:]
                    v[i, n - m :] = right_val
                else:
                    worst = float(np.abs(v[i, m:] - right_val).max())
                    if worst > 1e-6:
                        raise NumericalError(
                            f"window slide at t = {t_new:.6g} would discard cells "
                            f"off the right boundary value by {worst:.3g}; widen the grid"
                        )
                    v[i, -m:] = v[i, : n + m]
                    v[i, : -m] = left_val
                cells[i] = target
                v[i, 0] = left_val
                v[i, -1] = right_val

        if follow:
            fronts_now = _rightmost_crossings(x, v, _FRONT_LEVEL)
            lead = np.nanmax(fronts_now) if np.any(np.isfinite(fronts_now)) else -np.inf
            if lead >= x[-1] - _EDGE_FRACTION * width:
                m = int(round(_SHIFT_FRACTION * n))
                worst = float(np.abs(v[:, :m] - 1.0).max())
                if worst > _DISCARD_TOL:
                    raise NumericalError(
                        f"window recentring at t = {t_new:.6g} would discard cells "
                        f"off saturation by {worst:.3g}"
                    )
                v[:, : n - m] = v[:, m:]
                v[:, n - m :] = 0.0
                v[:, 0] = left_val
                v[:, -1] = right_val
                grid = grid.shifted(m * dx)
                x = grid.x

        step_times[step] = t_new
        minima[step] = v.min(axis=1)
        maxima[step] = v.max(axis=1)
        if sliding:
            front_positions[step] = (
                _rightmost_crossings(x, v, _FRONT_LEVEL) + frame_offsets(t_new)
            )
        else:
            front_positions[step] = _rightmost_crossings(x, v, _FRONT_LEVEL)

        take_snapshot = False
        while req_idx < len(requested) and t_new >= requested[req_idx] - 1e-9 * dt:
            take_snapshot = True
            req_idx += 1
        if take_snapshot and step < n_steps - 1:
            values = frame_readout(t_new) if sliding else v.copy()
            snap_times.append(t_new)
            snapshots.append(FieldStack(grid, values, t_new))

    final_values = frame_readout(step_times[-1]) if sliding else v.copy()
    snap_times.append(step_times[-1])
    snapshots.append(FieldStack(grid, final_values, step_times[-1]))

    return Trajectory(
        times=np.asarray(snap_times),
        snapshots=snapshots,
        step_times=step_times,
        minima=minima,
        maxima=maxima,
        clamp_counts=clamp_counts,
        front_positions=front_positions,
        front_level=_FRONT_LEVEL,
        kind=mode,
        frames=config.frames,
    )


def evolve_lab(config: EvolveConfig, init: FieldStack) -> Trajectory:
    """Evolve the nonlinear cascade in laboratory coordinates.

    Any frames on the config are ignored here.  With
    ``window_policy="follow_front"`` the grid slides rightward whenever
    the leading 1/2-level comes within 20% of the right edge, discarding
    saturated cells on the left; a discarded cell off 1 by more than
    1e-12 aborts the run, since data would be lost.
    """
    return _evolve(config, init, "lab")


def evolve_moving_frame(config: EvolveConfig, init: FieldStack) -> Trajectory:
    """Evolve the nonlinear cascade, each component in its own frame.

    Frame transport is realized by sliding each component's storage
    window whole cells at a time, an exact translation; cells that leave
    the window must sit at the boundary value to 1e-6 or the run aborts,
    so grids need a generous margin behind the front.  The coupling
    samples the partner at x + (xi_i - xi_{i+1})(t) by linear
    interpolation, with saturated fill on the left and vacuum fill on
    the right.  A shift exceeding the grid width raises NumericalError
    naming the time.
    """
    if config.frames is None:
        raise InvalidInputError("moving-frame evolution requires frames")
    return _evolve(config, init, "moving_frame")


def evolve_linear_dirichlet(config: EvolveConfig, init: FieldStack) -> Trajectory:
    """Evolve the linearized system with zero boundary values.

    The reaction is f'(0) V, the coupling alpha V^{i+1}(t, x + shift)
    enters without the saturation factor, and both grid edges are pinned
    to zero; the configured ``boundary`` value is not consulted.  The
    left grid edge plays the role of the half-line origin.  Initial data
    must be nonnegative; nonnegativity then persists, but values are not
    confined to [0, 1] and the clamp machinery stays off.
    """
    if config.frames is None:
        raise InvalidInputError("linearized Dirichlet evolution requires frames")
    if config.window_policy != "fixed":
        raise InvalidInputError("the Dirichlet solver supports only the fixed window")
    if float(init.values.min()) < 0.0:
        raise InvalidInputError("linearized Dirichlet initial data must be nonnegative")
    return _evolve(config, init, "linear_dirichlet")


def check_ordering(a: Trajectory, b: Trajectory, scale: float) -> OrderingReport:
    """Verify scale*a >= b pointwise on x > 0 at every shared snapshot.

    The margin reported per snapshot and component is the minimum of
    scale*a - b over the half line, so nonnegative margins mean the
    ordering holds.
    """
    if len(a.snapshots) != len(b.snapshots) or not np.allclose(
        a.times, b.times, rtol=0.0, atol=1e-9
    ):
        raise InvalidInputError("trajectories do not share snapshot times")
    margins = np.empty((len(a.snapshots), a.k))
    for row, (sa, sb) in enumerate(zip(a.snapshots, b.snapshots)):
        if sa.k != sb.k:
            raise InvalidInputError("trajectories have different component counts")
        if sa.grid != sb.grid:
            raise InvalidInputError("trajectories do not share grids")
        mask = sa.grid.x > 0.0
        if not mask.any():
            raise InvalidInputError("no grid points with x > 0 to compare on")
        diff = scale * sa.values[:, mask] - sb.values[:, mask]
        margins[row] = diff.min(axis=1)
    return OrderingReport(times=a.times.copy(), margins=margins, scale=float(scale))
