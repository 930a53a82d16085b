"""Self-similar spectral tools and half-line heat benchmarks.

In the variables tau = ln(t+t0) - ln t0 and eta = x/sqrt(t+t0), the
linearized Dirichlet cascade symmetrizes to

    w_tau + M w + (k-i) w = perturbation + coupling,
    M w = -w'' + (eta^2/16 - 3/4) w,

whose ground state e0 = eta exp(-eta^2/8)/(2 sqrt(pi))^(1/2) carries the
whole large-time limit: the projections q^i = <e0, w^i> converge to
multiples of q^k(0) while everything orthogonal to e0 decays.  This
module discretizes M on a truncated half line, evolves the coupled
w-system, splits fields into q e0 plus remainder, and fits the
remainder decay.

The second half is independent of the spectral machinery: Dirichlet
heat flow on the half line via the image kernel, plus the forced
variant obtained from it by Duhamel quadrature.  These provide the
dipole-decay and order-one-at-sqrt(t) benchmarks that the front-wedge
heuristics rest on.

Everything here integrates with the plain trapezoid rule; grids start
at eta = 0 and carry a zero Dirichlet value at both ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import Grid1D
from .errors import (
    InvalidInputError,
    NoDataError,
    NotConvergedError,
    NumericalError,
)

__all__ = [
    "SelfSimilarState",
    "SpectralDecomposition",
    "WSeries",
    "principal_eigenfunction",
    "excited_eigenfunction",
    "apply_M",
    "MResult",
    "quadratic_form_Q",
    "split_on_e0",
    "decompose",
    "evolve_w_system",
    "remainder_decay",
    "to_self_similar",
    "halfline_heat",
    "forced_halfline_heat",
]

_COARSE_SPACING = 0.2
_NORM_BLOWUP = 1e6
_DEGENERATE_REMAINDER = 1e-13
_DIRICHLET_TOL = 1e-10


def _require_halfline(grid: Grid1D, min_radius: float = 10.0):
    if grid.x0 != 0.0:
        raise InvalidInputError("eta grid must start at 0")
    if grid.x_last < min_radius:
        raise InvalidInputError(
            f"eta grid must reach at least {min_radius:g}, got {grid.x_last:g}"
        )


def _potential(eta: np.ndarray) -> np.ndarray:
    return eta * eta / 16.0 - 0.75


def principal_eigenfunction(eta_grid: Grid1D) -> np.ndarray:
    """Ground state eta exp(-eta^2/8)/(2 sqrt(pi))^(1/2) sampled on the grid.

    Unit norm under the trapezoid rule to well below 1e-6 once the grid
    reaches eta = 10 or so, which _require_halfline enforces.
    """
    _require_halfline(eta_grid)
    eta = eta_grid.x
    return eta * np.exp(-eta * eta / 8.0) / np.sqrt(2.0 * np.sqrt(np.pi))


@dataclass(frozen=True)
class MResult:
    """Discrete application of M, with an accuracy note for coarse grids."""

    values: np.ndarray
    warning: Optional[str] = None


def apply_M(w: np.ndarray, eta_grid: Grid1D) -> MResult:
    """Apply M = -d^2/d eta^2 + (eta^2/16 - 3/4) by centered differences.

    The field must vanish at eta = 0; the far endpoint closes with a
    ghost zero, consistent with truncating the half line by a Dirichlet
    condition.  Row 0 of the result is reported as zero since the
    boundary value is pinned there.
    """
    _require_halfline(eta_grid)
    w = np.asarray(w, dtype=float)
    if w.shape != (eta_grid.n,):
        raise InvalidInputError("field length does not match the eta grid")
    if abs(w[0]) > _DIRICHLET_TOL:
        raise InvalidInputError("field must vanish at eta = 0")
    d = eta_grid.dx
    warning = None
    if d > _COARSE_SPACING:
        warning = (
            f"grid spacing {d:g} exceeds {_COARSE_SPACING:g}; "
            "second differences are inaccurate"
        )
    out = np.empty_like(w)
    out[0] = 0.0
    out[1:-1] = -(w[2:] - 2.0 * w[1:-1] + w[:-2]) / (d * d)
    out[-1] = -(0.0 - 2.0 * w[-1] + w[-2]) / (d * d)
    out[1:] += _potential(eta_grid.x[1:]) * w[1:]
    return MResult(out, warning)


def quadratic_form_Q(w: np.ndarray, eta_grid: Grid1D) -> float:
    """Energy integral int w'^2 + (eta^2/16 - 3/4) w^2 d eta."""
    _require_halfline(eta_grid)
    w = np.asarray(w, dtype=float)
    grad = np.gradient(w, eta_grid.dx)
    density = grad * grad + _potential(eta_grid.x) * w * w
    return float(np.trapezoid(density, dx=eta_grid.dx))


def _norm(w: np.ndarray, d: float) -> float:
    return float(np.sqrt(np.trapezoid(w * w, dx=d)))


def split_on_e0(
    w: np.ndarray, eta_grid: Grid1D
) -> Tuple[np.ndarray, np.ndarray]:
    """Project onto the ground state: w = q e0 + remainder, rowwise."""
    e0 = principal_eigenfunction(eta_grid)
    rows = np.atleast_2d(np.asarray(w, dtype=float))
    q = np.trapezoid(rows * e0, dx=eta_grid.dx, axis=1)
    return q, rows - q[:, None] * e0


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ground-state coordinates and remainder norms, one entry per component."""

    q: np.ndarray
    remainder_norm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(
            self,
            "remainder_norm",
            np.atleast_1d(np.asarray(self.remainder_norm, dtype=float)),
        )
        if self.q.shape != self.remainder_norm.shape:
            raise InvalidInputError("q and remainder_norm must align")
        if np.any(self.remainder_norm < 0.0):
            raise InvalidInputError("remainder norms cannot be negative")


def decompose(w: np.ndarray, eta_grid: Grid1D) -> SpectralDecomposition:
    q, what = split_on_e0(w, eta_grid)
    norms = np.sqrt(np.trapezoid(what * what, dx=eta_grid.dx, axis=1))
    return SpectralDecomposition(q, norms)


def excited_eigenfunction(
    eta_grid: Grid1D, max_iter: int = 200, tol: float = 1e-12
) -> Tuple[np.ndarray, float]:
    """First excited state of the discretized M by deflated inverse iteration.

    The discrete ground state is computed first (plain inverse iteration
    with a small negative shift); iterating (M - 0.5 I)^{-1} on the
    complement of that vector then converges to the eigenvalue-one state.
    Returns the normalized eigenfunction and its Rayleigh quotient.
    """
    _require_halfline(eta_grid)
    d = eta_grid.dx
    n = eta_grid.n
    interior = np.arange(1, n - 1)
    main = 2.0 / (d * d) + _potential(eta_grid.x[interior])
    off = np.full(interior.size - 1, -1.0 / (d * d))
    matrix = sp.diags([off, main, off], offsets=(-1, 0, 1), format="csc")

    def iterate(shift: float, deflate: Optional[np.ndarray]) -> Tuple[np.ndarray, float]:
        lu = splu((matrix - shift * sp.identity(interior.size, format="csc")).tocsc())
        rng = np.random.default_rng(7)
        v = rng.standard_normal(interior.size)
        value = np.inf
        for _ in range(max_iter):
            if deflate is not None:
                v -= (v @ deflate) * deflate
            v = lu.solve(v)
            if deflate is not None:
                v -= (v @ deflate) * deflate
            v /= np.linalg.norm(v)
            new_value = float(v @ (matrix @ v))
            if abs(new_value - value) < tol:
                value = new_value
                break
            value = new_value
        return v, value

    ground, _ = iterate(-0.1, None)
    excited, rayleigh = iterate(0.5, ground)
    full = np.zeros(n)
    full[interior] = excited
    full /= _norm(full, d)
    if full[np.argmax(np.abs(full))] < 0.0:
        full = -full
    return full, rayleigh


@dataclass(frozen=True)
class SelfSimilarState:
    """One time slice of the cascade in symmetrized self-similar variables.

    ``p`` carries the raw self-similar fields and ``w`` their
    symmetrized version w = p exp(eta^2/8) exp(-tau/2); ``delta_tau`` is
    the inter-component shift, tied to tau through epsilon and
    lambda_star, which the constructor verifies.
    """

    tau: float
    eta_grid: Grid1D
    p: np.ndarray
    w: np.ndarray
    epsilon: float
    delta_tau: float
    lambda_star: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", np.atleast_2d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "w", np.atleast_2d(np.asarray(self.w, dtype=float)))
        if self.tau < 0.0:
            raise InvalidInputError("tau must be nonnegative")
        if self.p.shape != self.w.shape or self.p.shape[1] != self.eta_grid.n:
            raise InvalidInputError("field shapes do not match the eta grid")
        if np.abs(self.w[:, 0]).max() > _DIRICHLET_TOL:
            raise InvalidInputError("w must vanish at eta = 0")
        if not (np.isfinite(self.epsilon) and 0.0 < self.epsilon):
            raise InvalidInputError("epsilon must be positive")
        t0 = 1.0 / (self.lambda_star * self.epsilon) ** 2
        expected = self.epsilon * (self.tau + np.log(t0)) * np.exp(-self.tau / 2.0)
        if abs(self.delta_tau - expected) > 1e-9 * (1.0 + abs(expected)):
            raise InvalidInputError(
                f"delta_tau = {self.delta_tau:g} inconsistent with tau and epsilon "
                f"(expected {expected:g})"
            )

    @property
    def k(self) -> int:
        return self.p.shape[0]


def _delta_shift(tau: float, epsilon: float, lambda_star: float) -> float:
    t0 = 1.0 / (lambda_star * epsilon) ** 2
    return epsilon * (tau + np.log(t0)) * np.exp(-tau / 2.0)


def to_self_similar(
    trajectory, eta_grid: Grid1D, component: int = 1, lambda_star: float = 1.0
) -> List[SelfSimilarState]:
    """Map linearized-Dirichlet snapshots into symmetrized variables.

    Each snapshot V(t, x) becomes w(tau, eta) = V e^{lambda x} e^{eta^2/8}
    e^{-tau/2} with x = eta sqrt(t+t0), resampled on ``eta_grid``.  The
    trajectory must come from the Dirichlet solver so that its frames
    carry t0 and its fields vanish left of the wall.
    """
    if trajectory.kind != "linear_dirichlet":
        raise InvalidInputError("self-similar mapping expects a linear Dirichlet run")
    if trajectory.frames is None:
        raise InvalidInputError("trajectory carries no frames")
    _require_halfline(eta_grid)
    frame = trajectory.frames[component - 1]
    t0 = frame.t0
    epsilon = 1.0 / (lambda_star * np.sqrt(t0))
    states = []
    for snap, t in zip(trajectory.snapshots, trajectory.times):
        tau = float(np.log((t + t0) / t0))
        root = np.sqrt(t + t0)
        x_need = eta_grid.x * root
        if lambda_star * x_need[-1] > 700.0:
            raise InvalidInputError(
                "eta grid reaches x where exp(lambda x) overflows; shorten the run "
                "or the eta grid"
            )
        v = np.interp(x_need, snap.grid.x, snap.values[component - 1],
                      left=0.0, right=0.0)
        p = v * np.exp(lambda_star * x_need)
        w = p * np.exp(eta_grid.x ** 2 / 8.0) * np.exp(-tau / 2.0)
        w[0] = 0.0
        states.append(
            SelfSimilarState(
                tau=tau,
                eta_grid=eta_grid,
                p=p[None, :],
                w=w[None, :],
                epsilon=epsilon,
                delta_tau=_delta_shift(tau, epsilon, lambda_star),
                lambda_star=lambda_star,
            )
        )
    return states


@dataclass(frozen=True)
class WSeries:
    """Recorded q and remainder-norm histories of a w-system run."""

    taus: np.ndarray
    q: np.ndarray
    remainder_norms: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(
            self, "remainder_norms", np.asarray(self.remainder_norms, dtype=float)
        )
        if self.taus.ndim != 1 or self.q.shape != self.remainder_norms.shape:
            raise InvalidInputError("series arrays must align")
        if self.q.shape[0] != self.taus.size:
            raise InvalidInputError("one q row per recorded tau required")
        if np.any(np.diff(self.taus) <= 0.0):
            raise InvalidInputError("recorded taus must increase")

    @property
    def k(self) -> int:
        return self.q.shape[1]

    def at(self, index: int) -> SpectralDecomposition:
        return SpectralDecomposition(self.q[index], self.remainder_norms[index])


def evolve_w_system(
    k: int,
    alpha: float,
    epsilon: float,
    init_w: np.ndarray,
    tau_end: float,
    eta_grid: Grid1D,
    dtau: float = 1e-3,
    lambda_star: float = 1.0,
    record_every: int = 20,
) -> WSeries:
    """Integrate the coupled symmetrized system and record its projections.

    M plus the (k-i) relaxation is treated implicitly (one tridiagonal
    factorization per component), while the epsilon-weighted drift and
    the shifted coupling are explicit; dtau is then purely an accuracy
    knob.  Projections are recorded at tau = 0, every ``record_every``
    steps, and at tau_end.
    """
    if int(k) != k or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k}")
    if not (np.isfinite(alpha) and alpha >= 0.0):
        raise InvalidInputError(f"alpha must be nonnegative, got {alpha}")
    if not (np.isfinite(epsilon) and epsilon > 0.0):
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    t0 = 1.0 / (lambda_star * epsilon) ** 2
    if t0 < 1.0:
        raise InvalidInputError(
            f"epsilon = {epsilon:g} puts t0 below 1; the shift would turn negative"
        )
    if not (np.isfinite(tau_end) and tau_end > 0.0):
        raise InvalidInputError(f"tau_end must be positive, got {tau_end}")
    if dtau <= 0.0 or record_every < 1:
        raise InvalidInputError("dtau and record_every must be positive")
    _require_halfline(eta_grid)
    w = np.atleast_2d(np.asarray(init_w, dtype=float)).copy()
    if w.shape != (k, eta_grid.n):
        raise InvalidInputError(
            f"initial data must be {k} x {eta_grid.n}, got {w.shape}"
        )
    if np.abs(w[:, 0]).max() > _DIRICHLET_TOL:
        raise InvalidInputError("initial rows must vanish at eta = 0")
    w[:, 0] = 0.0
    w[:, -1] = 0.0

    d = eta_grid.dx
    eta = eta_grid.x
    n = eta_grid.n
    e0 = principal_eigenfunction(eta_grid)
    pot = _potential(eta)

    solvers = []
    for i in range(k):
        relax = float(k - (i + 1))
        main = np.full(n, 1.0)
        lower = np.zeros(n - 1)
        upper = np.zeros(n - 1)
        main[1:-1] += dtau * (2.0 / (d * d) + pot[1:-1] + relax)
        lower[:-1] = -dtau / (d * d)
        upper[1:] = -dtau / (d * d)
        solvers.append(
            splu(sp.diags([lower, main, upper], offsets=(-1, 0, 1), format="csc"))
        )

    n_steps = max(1, int(round(tau_end / dtau)))

    def record(tau_now: float, taus, qs, rems):
        dec = decompose(w, eta_grid)
        taus.append(tau_now)
        qs.append(dec.q)
        rems.append(dec.remainder_norm)

    taus: List[float] = []
    qs: List[np.ndarray] = []
    rems: List[np.ndarray] = []
    record(0.0, taus, qs, rems)

    for step in range(n_steps):
        tau = step * dtau
        decay = epsilon * np.exp(-tau / 2.0)
        delta = _delta_shift(tau, epsilon, lambda_star)
        damp = np.exp(-delta * delta / 8.0) * np.exp(-eta * delta / 4.0)
        rhs = w.copy()
        for i in range(k):
            coeff = -(1.5 + (i + 1) - k) * decay
            grad = np.gradient(w[i], d)
            rhs[i] += dtau * coeff * (grad - 0.25 * eta * w[i])
            if alpha > 0.0 and i + 1 < k:
                shifted = np.interp(eta + delta, eta, w[i + 1], left=0.0, right=0.0)
                rhs[i] += dtau * alpha * shifted * damp
        rhs[:, 0] = 0.0
        rhs[:, -1] = 0.0
        for i in range(k):
            w[i] = solvers[i].solve(rhs[i])
        w[:, 0] = 0.0
        w[:, -1] = 0.0
        if not np.all(np.isfinite(w)):
            raise NumericalError(f"non-finite field at tau = {tau + dtau:.6g}")
        worst = max(_norm(w[i], d) for i in range(k))
        if worst > _NORM_BLOWUP:
            raise NumericalError(
                f"norm {worst:.6g} exceeded {_NORM_BLOWUP:g} at tau = {tau + dtau:.6g}; "
                "the run is unstable"
            )
        if (step + 1) % record_every == 0 or step == n_steps - 1:
            record((step + 1) * dtau, taus, qs, rems)

    return WSeries(np.asarray(taus), np.vstack(qs), np.vstack(rems))


def remainder_decay(
    series: WSeries, tau_window: Optional[Tuple[float, float]] = None
) -> np.ndarray:
    """Fit ln ||remainder|| - ln(1+tau) against tau; one slope per component.

    Components whose remainder never rises above 1e-13 in the window are
    degenerate (pure ground-state data) and get a NaN slope; if every
    component is degenerate there is nothing to fit and NoDataError is
    raised.  The window must span at least 6 units of tau.
    """
    taus = series.taus
    if tau_window is not None:
        lo, hi = tau_window
        keep = (taus >= lo) & (taus <= hi)
        taus = taus[keep]
        rems = series.remainder_norms[keep]
    else:
        rems = series.remainder_norms
    if taus.size < 5 or taus[-1] - taus[0] < 6.0:
        raise InvalidInputError("need a tau range of at least 6 to fit a decay rate")
    slopes = np.full(series.k, np.nan)
    for i in range(series.k):
        r = rems[:, i]
        live = r > _DEGENERATE_REMAINDER
        if live.sum() < 5 or r.max() <= _DEGENERATE_REMAINDER:
            continue
        y = np.log(r[live]) - np.log1p(taus[live])
        design = np.column_stack([taus[live], np.ones(live.sum())])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        slopes[i] = coef[0]
    if np.all(np.isnan(slopes)):
        raise NoDataError(
            "all remainder norms sit below 1e-13; the data is pure ground state"
        )
    return slopes


def _image_kernel(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    """Dirichlet heat kernel on the half line, evaluated as a matrix."""
    xx = x[:, None]
    yy = y[None, :]
    norm = 1.0 / np.sqrt(4.0 * np.pi * t)
    return norm * (
        np.exp(-((xx - yy) ** 2) / (4.0 * t)) - np.exp(-((xx + yy) ** 2) / (4.0 * t))
    )


def halfline_heat(
    omega0: np.ndarray, source_grid: Grid1D, t: float, x_eval: np.ndarray
) -> np.ndarray:
    """Heat flow on x > 0 with absorption at 0, by the image method."""
    if not (np.isfinite(t) and t > 0.0):
        raise InvalidInputError(f"time must be positive, got {t}")
    if source_grid.x0 < 0.0:
        raise InvalidInputError("source data must live on x >= 0")
    omega0 = np.asarray(omega0, dtype=float)
    if omega0.shape != (source_grid.n,):
        raise InvalidInputError("initial data length does not match its grid")
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))
    weights = np.full(source_grid.n, source_grid.dx)
    weights[0] = weights[-1] = source_grid.dx / 2.0
    return _image_kernel(x_eval, source_grid.x, t) @ (omega0 * weights)


def forced_halfline_heat(
    omega0: np.ndarray,
    source_grid: Grid1D,
    alpha: float,
    t: float,
    x_eval: np.ndarray,
    rtol: float = 1e-4,
    max_refinements: int = 8,
) -> np.ndarray:
    """Duhamel solution of zeta_t = zeta_xx + alpha omega(t, x) on x > 0.

    omega is itself the half-line heat evolution of ``omega0``; the
    forcing integral over s in (0, t) runs on a nested trapezoid ladder
    that doubles its nodes until two levels agree to ``rtol`` in the sup
    norm, refining automatically near both endpoints where the kernel
    varies fastest.  Failure to converge raises NotConvergedError.
    """
    if not (np.isfinite(t) and t > 1.0):
        raise InvalidInputError(f"forced evolution needs t > 1, got {t}")
    if not np.isfinite(alpha):
        raise InvalidInputError("alpha must be finite")
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))
    if alpha == 0.0:
        return np.zeros(x_eval.shape)

    support = source_grid.x_last
    reach = support + 8.0 * np.sqrt(t)
    n_y = max(801, int(round(reach / 0.25)) + 1)
    y_grid = Grid1D(0.0, reach / (n_y - 1), n_y)
    y_weights = np.full(n_y, y_grid.dx)
    y_weights[0] = y_weights[-1] = y_grid.dx / 2.0

    # At s = 0 the outer kernel acts over the whole interval (t - s = t)
    # on the raw data; at s = t it degenerates to the identity on
    # omega(t, .).  The semigroup property collapses both to the same
    # one-kernel evaluation.
    endpoint = halfline_heat(omega0, source_grid, t, x_eval)

    def integrand(s: float) -> np.ndarray:
        if s <= 0.0 or s >= t:
            return endpoint
        field = halfline_heat(omega0, source_grid, s, y_grid.x)
        return _image_kernel(x_eval, y_grid.x, t - s) @ (field * y_weights)

    def level(m: int) -> np.ndarray:
        s_nodes = 0.5 * t * (1.0 - np.cos(np.linspace(0.0, np.pi, m)))
        values = np.stack([integrand(s) for s in s_nodes])
        return np.trapezoid(values, s_nodes, axis=0)

    m = 17
    prev = level(m)
    for _ in range(max_refinements):
        m = 2 * m - 1
        cur = level(m)
        scale = max(float(np.abs(cur).max()), 1e-300)
        if float(np.abs(cur - prev).max()) <= rtol * scale:
            return alpha * cur
        prev = cur
    raise NotConvergedError(
        f"forcing quadrature did not reach rtol = {rtol:g} within "
        f"{max_refinements} refinements"
    )
