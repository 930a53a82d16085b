"""Traveling-wave profiles: the connection ODE, tail asymptotics, alignment.

The profile U_c solves U'' + c U' + f(U) = 0 with U(-inf) = 1,
U(+inf) = 0.  It is computed by integrating forward along the unstable
manifold of the saddle (U, U') = (1, 0).  That orbit *is* the wave (the
connection is structurally guaranteed for monostable f, no shooting
parameter exists), and forward integration is stable for every
c >= c*: the only growing direction at the saddle is the one the wave
itself leaves along, and at the origin both modes contract.  Backward
integration from the tail, by contrast, amplifies fast-mode
contamination by (U_anchor/U_tail)^(lambda_plus/lambda_c - 1), which is
~1e17 for c = 2.5 started at U = 1e-6; it cannot reach the residual
targets this module promises.

Near U = 1 the reaction term is evaluated through its shifted power
series f(1 - p) = sum b_m p^m (exact zero constant term), because
forming f(U) directly there loses all significant digits against the
tight relative tolerances the integrator runs at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .core import (
    Grid1D,
    KppNonlinearity,
    _eval_raw,
    d2_nonlinearity,
    d_nonlinearity,
    dispersion,
    shifted_coefficients,
)
from .errors import InvalidInputError, NoDataError, NoFrontError, NotConvergedError

# deviation from the saddle at which integration starts / switches to
# plain variables
_SEED_DEVIATION = 1e-8
_SWITCH_DEVIATION = 0.05

# right tail is integrated down to this value (the container invariant
# asks for < 1e-6 at the last grid point)
_TAIL_TARGET = 1e-7

# left-edge deviation target: 1 - U(x0) stays below 1e-5, an order of
# magnitude inside the 1e-4 invariant
_LEFT_TARGET = 1e-5

# float64 noise floor of a centered second difference with O(1) values
_ROUNDOFF = 8e-16

_MAX_POINTS = 4_000_000


# ===================================================================
# result containers
# ===================================================================

@dataclass(frozen=True)
class TailFit:
    """Fitted tail form of a wave profile.

    ``linear_factor`` is True when the fitted model is the minimal-speed
    form (x + k) e^(-lambda x); otherwise the model is k e^(-lambda x).
    ``fit_residual`` is the largest absolute log-space misfit on the
    window and ``lambda_band`` a two-sigma half width for lambda_est.
    """

    lambda_est: float
    k_const: float
    linear_factor: bool
    fit_residual: float
    lambda_band: float


@dataclass
class WaveProfile:
    """A traveling wave sampled on a grid, anchored so U(0) = 1/2."""

    speed: float
    cstar: float
    grid: Grid1D
    values: np.ndarray
    anchor: float = 0.0
    tail: Optional[TailFit] = None
    ode_residual: float = float("nan")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise InvalidInputError(
                f"profile values must have shape ({self.grid.n},), got {self.values.shape}"
            )

    def interp(self, x) -> np.ndarray:
        """Profile value at arbitrary positions (1 far left, 0 far right)."""
        return np.interp(x, self.grid.x, self.values, left=1.0, right=0.0)


# ===================================================================
# profile solver
# ===================================================================

def _integrate_connection(f: KppNonlinearity, c: float, half_width: float):
    """Follow the saddle connection; return a piecewise dense evaluator.

    Returns (evaluate, s_half, s_end, mu_plus) where ``evaluate`` maps
    internal coordinates s (s = 0 at the seed point 1 - U = 1e-8) to
    (U, U'), s_half is where U crosses 1/2, and s_end is the end of the
    computed data: far enough that both s_end - s_half >= half_width
    and U(s_end) <= the tail target hold.
    """
    mu_plus = (-c + math.sqrt(c * c - 4.0 * f.fprime1)) / 2.0
    b = shifted_coefficients(f)

    def f_shifted(p):
        # f(1 - p), cancellation-free ascending series
        acc = 0.0
        for coef in b[::-1]:
            acc = acc * p + coef
        return acc

    # --- phase A: deviation variables (p, q) = (1 - U, -U') from the seed
    def rhs_dev(s, y):
        p, q = y
        return (q, -c * q + f_shifted(p))

    hit_switch = lambda s, y: y[0] - _SWITCH_DEVIATION
    hit_switch.terminal = True
    hit_switch.direction = 1.0
    span_a = (math.log(_SWITCH_DEVIATION / _SEED_DEVIATION) / mu_plus) * 3.0 + 50.0
    sol_a = solve_ivp(
        rhs_dev, (0.0, span_a), [_SEED_DEVIATION, mu_plus * _SEED_DEVIATION],
        method="DOP853", rtol=1e-13, atol=1e-300, events=[hit_switch],
        dense_output=True,
    )
    if not sol_a.t_events[0].size:
        raise NotConvergedError(
            "saddle departure never reached the switch deviation "
            f"(c={c:g}); last deviation {sol_a.y[0, -1]:.3e}"
        )
    s1 = float(sol_a.t_events[0][0])
    p1, q1 = (float(v) for v in sol_a.y_events[0][0])

    # --- phase B: plain variables down through the anchor to the far tail
    def rhs(s, y):
        u, v = y
        return (v, -c * v - _eval_raw(f, u))

    hit_half = lambda s, y: y[0] - 0.5
    hit_half.terminal = True
    hit_half.direction = -1.0
    sol_b1 = solve_ivp(
        rhs, (s1, s1 + 400.0), [1.0 - p1, -q1],
        method="DOP853", rtol=1e-13, atol=1e-300, events=[hit_half],
        dense_output=True,
    )
    if not sol_b1.t_events[0].size:
        raise NotConvergedError(
            f"orbit from the saddle never crossed 1/2 (c={c:g}); "
            "monotone connection lost"
        )
    s_half = float(sol_b1.t_events[0][0])
    y_half = [float(v) for v in sol_b1.y_events[0][0]]

    # cover [s_half, s_half + half_width] unconditionally ...
    sol_b2 = solve_ivp(
        rhs, (s_half, s_half + half_width), y_half,
        method="DOP853", rtol=1e-13, atol=1e-300, dense_output=True,
    )
    s_end = s_half + half_width
    u_end = float(sol_b2.y[0, -1])

    pieces: List[Tuple[float, float, Callable]] = [
        (0.0, s1, lambda s: _dev_to_uv(sol_a.sol(s))),
        (s1, s_half, sol_b1.sol),
        (s_half, s_end, sol_b2.sol),
    ]

    # ... and extend until U reaches the tail target if it has not yet
    # (slowly decaying supercritical tails); lambda_c bounds the decay
    # rate from below so the span estimate is safe
    if u_end > _TAIL_TARGET:
        lam = dispersion(f, c=c).lambda_c
        span = math.log(u_end / _TAIL_TARGET) / lam * 1.5 + 40.0
        hit_tail = lambda s, y: y[0] - _TAIL_TARGET
        hit_tail.terminal = True
        hit_tail.direction = -1.0
        sol_b3 = solve_ivp(
            rhs, (s_end, s_end + span), [u_end, float(sol_b2.y[1, -1])],
            method="DOP853", rtol=1e-13, atol=1e-300, events=[hit_tail],
            dense_output=True,
        )
        if not sol_b3.t_events[0].size:
            raise NotConvergedError(
                f"tail never decayed to {_TAIL_TARGET:g} (c={c:g})"
            )
        new_end = float(sol_b3.t_events[0][0])
        pieces.append((s_end, new_end, sol_b3.sol))
        s_end = new_end

    def evaluate(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        U = np.empty_like(s)
        V = np.empty_like(s)
        left = s < 0.0
        if np.any(left):
            # linearized saddle ray, exact to O(seed^2) ~ 1e-16
            dev = _SEED_DEVIATION * np.exp(mu_plus * s[left])
            U[left] = 1.0 - dev
            V[left] = -mu_plus * dev
        for lo, hi, sol in pieces:
            m = (s >= lo) & (s <= hi)
            if np.any(m):
                U[m], V[m] = sol(s[m])
        beyond = s > s_end
        if np.any(beyond):
            # only reachable by sub-ulp overshoot of the last grid point
            U[beyond], V[beyond] = pieces[-1][2](s_end)
        return U, V

    return evaluate, s_half, s_end, mu_plus


def _dev_to_uv(y):
    return 1.0 - y[0], -y[1]


def solve_profile(
    f: KppNonlinearity,
    c: float,
    half_width: float = 40.0,
    tol: float = 1e-10,
) -> WaveProfile:
    """Compute the traveling wave U_c, anchored so that U(0) = 1/2.

    The grid spans at least [-half_width, half_width] and is widened
    automatically when the boundary invariants (U within 1e-4 of 1 on
    the left, below 1e-6 on the right) require more room, which happens
    for strongly supercritical speeds where the tail decays slowly.
    Spacing is chosen so the centered-difference residual stays below
    100 * tol, balancing truncation against the float64 rounding floor
    of second differences; for tol below ~1e-10 that floor becomes
    binding and the solver raises rather than silently under-deliver.

    Parameters
    ----------
    f : KppNonlinearity
    c : float
        Wave speed, at least the minimal speed 2 sqrt(f'(0)).
    half_width : float
        Minimum extent of the grid on each side of the anchor.
    tol : float
        Accuracy parameter in (1e-14, 1e-4); the residual promise is
        100 * tol.

    Returns
    -------
    WaveProfile
        With a tail fit on the default window attached and the measured
        ODE residual recorded.

    Raises
    ------
    SubcriticalSpeedError
        For c below the minimal speed.
    NotConvergedError
        If monotonicity is lost or the residual target is infeasible.
    """
    if not 1e-14 < tol < 1e-4:
        raise InvalidInputError(f"tol must lie in (1e-14, 1e-4), got {tol:g}")
    if not 1.0 < half_width <= 400.0:
        raise InvalidInputError("half_width must lie in (1, 400]")
    dispersion(f, c=c)  # validates c >= cstar
    evaluate, s_half, s_end, mu_plus = _integrate_connection(f, c, half_width)

    # derivative magnitudes of the exact orbit set the truncation
    # constant C in residual ~ C dx^2 + roundoff / dx^2
    ss = np.linspace(0.0, s_end, 4001)
    U, V = evaluate(ss)
    W = -c * V - _eval_raw(f, U)
    U3 = -c * W - d_nonlinearity(f, U) * V
    U4 = -c * U3 - d2_nonlinearity(f, U) * V * V - d_nonlinearity(f, U) * W
    trunc_c = float(np.max(np.abs(U4 / 12.0 + c * U3 / 6.0))) + 1e-6

    dx = math.sqrt(40.0 * tol / trunc_c)
    dx = max(dx, (_ROUNDOFF / trunc_c) ** 0.25)  # rounding-floor optimum
    floor = trunc_c * dx * dx + _ROUNDOFF / (dx * dx)
    if floor > 80.0 * tol:
        raise NotConvergedError(
            f"residual target {100.0 * tol:.1e} is below the float64 "
            f"centered-difference floor (~{floor:.1e}) for this profile; "
            "raise tol"
        )

    # left edge: far enough that 1 - U < _LEFT_TARGET
    x_left = min(-half_width,
                 math.log(_LEFT_TARGET / _SEED_DEVIATION) / mu_plus - s_half)
    x_right = s_end - s_half
    n = int(math.ceil((x_right - x_left) / dx)) + 1
    if n > _MAX_POINTS:
        raise InvalidInputError(
            f"grid of {n} points exceeds the {_MAX_POINTS} cap; "
            "loosen tol or shrink half_width"
        )
    dx = (x_right - x_left) / (n - 1)
    grid = Grid1D(x_left, dx, n)

    values, _ = evaluate(grid.x + s_half)
    resid = _centered_residual(f, c, values, dx)

    if not np.all(np.diff(values) < 0.0):
        j = int(np.argmax(np.diff(values) >= 0.0))
        raise NotConvergedError(
            f"profile not strictly decreasing near x = {grid.x[j]:.3f}"
        )
    if resid > 100.0 * tol:
        raise NotConvergedError(
            f"centered-difference residual {resid:.2e} exceeds "
            f"{100.0 * tol:.1e}"
        )

    profile = WaveProfile(
        speed=float(c),
        cstar=dispersion(f).cstar,
        grid=grid,
        values=values,
        anchor=0.0,
        tail=None,
        ode_residual=resid,
    )
    profile.tail = tail_fit(profile)
    return profile


def _centered_residual(f: KppNonlinearity, c: float, u: np.ndarray, dx: float) -> float:
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
    d1 = (u[2:] - u[:-2]) / (2.0 * dx)
    return float(np.max(np.abs(d2 + c * d1 + _eval_raw(f, u[1:-1]))))


# ===================================================================
# tail fit
# ===================================================================

def tail_fit(
    profile: WaveProfile,
    window: Optional[Tuple[float, float]] = None,
) -> TailFit:
    """Fit the far-tail form of a profile.

    For supercritical speed the model is k e^(-lambda x), fitted as a
    straight line in log space; at the minimal speed (decided by
    |c - c*| < 1e-9) the model carries the extra linear factor,
    (x + k) e^(-lambda x), fitted by nonlinear least squares on
    ln U + lambda x - ln(x + k).

    Parameters
    ----------
    profile : WaveProfile
    window : (float, float), optional
        x-interval to fit on; defaults to where U is in [1e-8, 1e-2],
        clipped to the grid.  Must lie inside the region U < 1e-2.

    Returns
    -------
    TailFit

    Raises
    ------
    NoDataError
        Fewer than 10 grid points fall inside the window.
    """
    x = profile.grid.x
    u = profile.values
    if window is None:
        usable = (u >= 1e-8) & (u <= 1e-2)
        if not np.any(usable):
            raise NoDataError("profile has no samples with U in [1e-8, 1e-2]")
        window = (float(x[usable][0]), float(x[usable][-1]))
    lo, hi = float(window[0]), float(window[1])
    mask = (x >= lo) & (x <= hi)
    if int(mask.sum()) < 10:
        raise NoDataError(
            f"tail window [{lo:g}, {hi:g}] holds {int(mask.sum())} points, need >= 10"
        )
    xw = x[mask]
    uw = u[mask]
    if np.any(uw >= 1e-2) or np.any(uw <= 0.0):
        raise InvalidInputError("tail window must lie in the region 0 < U < 1e-2")
    logu = np.log(uw)

    linear_factor = abs(profile.speed - profile.cstar) < 1e-9
    if not linear_factor:
        # straight line ln U = ln k - lambda x
        slope, intercept = np.polyfit(xw, logu, 1)
        fit = intercept + slope * xw
        resid = logu - fit
        # two-sigma slope band from ordinary least squares
        dof = max(len(xw) - 2, 1)
        s2 = float(np.sum(resid ** 2)) / dof
        sxx = float(np.sum((xw - xw.mean()) ** 2))
        band = 2.0 * math.sqrt(s2 / sxx)
        return TailFit(
            lambda_est=float(-slope),
            k_const=float(np.exp(intercept)),
            linear_factor=False,
            fit_residual=float(np.max(np.abs(resid))),
            lambda_band=band,
        )

    # Minimal speed: U = a (x + k) e^(-lambda x).  The amplitude a is not
    # free to normalize away because the anchor U(0) = 1/2 already fixed
    # the translation, so it is fitted and then folded back into the
    # reported offset: a (x + k) e^(-lambda x) = (y + K) e^(-lambda y)
    # under y = x - ln(a)/lambda with K = k + ln(a)/lambda.
    lam0 = profile.cstar / 2.0
    g = logu + lam0 * xw
    loga0 = float(g[len(g) // 2] - np.log(xw[len(xw) // 2] + 1.0))

    def model_resid(theta):
        lam, k, loga = theta
        arg = xw + k
        if np.any(arg <= 0.0):
            return np.full_like(xw, 1e6)
        return logu + lam * xw - loga - np.log(arg)

    def model_jac(theta):
        _, k, _ = theta
        arg = np.maximum(xw + k, 1e-300)
        return np.column_stack([xw, -1.0 / arg, -np.ones_like(xw)])

    out = least_squares(model_resid, [lam0, 1.0, loga0], method="lm",
                        jac=model_jac, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    lam, k, loga = out.x
    resid = model_resid(out.x)
    # crude covariance from the Jacobian at the optimum
    try:
        jtj_inv = np.linalg.inv(out.jac.T @ out.jac)
        dof = max(len(xw) - 3, 1)
        s2 = float(np.sum(resid ** 2)) / dof
        band = 2.0 * math.sqrt(max(s2 * jtj_inv[0, 0], 0.0))
    except np.linalg.LinAlgError:
        band = float("nan")
    return TailFit(
        lambda_est=float(lam),
        k_const=float(k + loga / lam),
        linear_factor=True,
        fit_residual=float(np.max(np.abs(resid))),
        lambda_band=band,
    )


# ===================================================================
# alignment
# ===================================================================

def shift_align(
    x: np.ndarray,
    u: np.ndarray,
    profile: WaveProfile,
) -> Tuple[float, float]:
    """Best translation of a field onto a profile, and the residual gap.

    Finds the shift s minimizing ``sup |field(x + s) - profile(x)|``
    over the window where the profile lies in [0.01, 0.99], by
    golden-section search.  A positive shift means the field sits that
    far to the right of the profile: field(x) ~ U(x - s).

    Parameters
    ----------
    x, u : ndarray
        Sample positions and values of one solution component; must
        cross 1/2 and span at least [0.05, 0.95].
    profile : WaveProfile

    Returns
    -------
    (shift, sup_distance) : (float, float)

    Raises
    ------
    NoFrontError
        The field never crosses 1/2.
    InvalidInputError
        The field does not span [0.05, 0.95].
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape or x.ndim != 1:
        raise InvalidInputError("field positions and values must be matching 1-D arrays")
    above = u > 0.5
    if not (np.any(above) and np.any(~above)):
        raise NoFrontError("field never crosses the level 1/2")
    if u.min() > 0.05 or u.max() < 0.95:
        raise InvalidInputError(
            f"field spans [{u.min():.3f}, {u.max():.3f}], need at least [0.05, 0.95]"
        )

    win = (profile.values >= 0.01) & (profile.values <= 0.99)
    xp = profile.grid.x[win]
    up = profile.values[win]

    # initial guess from the half-level crossings
    s0 = _half_crossing(x, u) - _half_crossing(profile.grid.x, profile.values)

    def gap(s: float) -> float:
        return float(np.max(np.abs(np.interp(xp + s, x, u, left=u[0], right=u[-1]) - up)))

    a, b_ = s0 - 1.0, s0 + 1.0
    for _ in range(60):  # widen until the bracket contains the minimum
        if gap(s0) <= min(gap(a), gap(b_)):
            break
        a, b_ = s0 - 2.0 * (s0 - a), s0 + 2.0 * (b_ - s0)
    shift = _golden(gap, a, b_, tol=1e-12)
    return shift, gap(shift)


def _half_crossing(x: np.ndarray, u: np.ndarray) -> float:
    """Leftmost downward crossing of 1/2, by linear interpolation."""
    below = u < 0.5
    idx = np.nonzero(below[1:] & ~below[:-1])[0]
    if idx.size == 0:
        raise NoFrontError("no downward crossing of 1/2")
    j = int(idx[0])
    t = (0.5 - u[j]) / (u[j + 1] - u[j])
    return float(x[j] + t * (x[j + 1] - x[j]))


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(fun, a: float, b: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Plain golden-section minimizer on [a, b]."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return (a + b) / 2.0
