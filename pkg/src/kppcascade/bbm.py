"""Event-driven cascading multitype branching Brownian motion.

One replica starts from a single type-1 particle at the origin.  A
type-i particle with i < k branches at rate ``binary_rate`` into two
type-i particles and at rate ``alpha`` into a type-i and a type-(i+1)
pair; type-k particles only branch binarily.  Between events every
particle diffuses with variance ``diffusion_variance`` per unit time.
The maximum particle position at the horizon has survival function
v^1(t, x) of the PDE cascade, which is what compare_bbm_pde checks.

Randomness is counter-based: every particle carries a 64-bit lineage
id, child ids are fixed hashes of the parent id, and the n-th draw of a
particle is a pure function of (lineage, n).  The lineage root encodes
(seed, replica_index), so any partition of replicas over workers, and
any traversal order inside the engine, yields bit-identical statistics.
Replica batches are simulated as flat arrays advanced one event
generation at a time; per-replica reductions (count sums, the running
maximum, the derivative-martingale sum) are either exactly
order-independent or accumulated in a replica-stable order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import ndimage

from .core import FieldStack
from .errors import InvalidInputError, NoDataError

__all__ = [
    "BbmConfig",
    "BbmReplica",
    "EmpiricalCdf",
    "MartingaleSeries",
    "ComparisonReport",
    "simulate_replica",
    "simulate_replicas",
    "empirical_max_cdf",
    "compare_bbm_pde",
    "derivative_martingale_series",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_CHILD_A = np.uint64(0x8172CFA9B3F287D1)
_CHILD_B = np.uint64(0x3C9D12E5A88B7F43)
_ROOT_SALT = np.uint64(0xD1B54A32D192ED03)

_CHUNK = 256
_BAND = 1e-3


def _scramble(z: np.ndarray) -> np.ndarray:
    """Finalizer of the splitmix64 generator, vectorized over uint64."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _word(lineage: np.ndarray, n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=np.uint64)
    return _scramble(lineage + n * _GOLDEN)


def _u01(word: np.ndarray) -> np.ndarray:
    """Map a 64-bit word to the open interval (0, 1)."""
    return ((word >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _normal(lineage: np.ndarray, n: np.ndarray) -> np.ndarray:
    """One standard normal per particle, consuming words n and n+1."""
    u1 = _u01(_word(lineage, n))
    u2 = _u01(_word(lineage, n + np.uint64(1)))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class BbmConfig:
    """Process parameters plus the simulation horizon and RNG seed."""

    k: int
    alpha: float
    t_max: float
    seed: int
    binary_rate: float = 1.0
    diffusion_variance: float = 2.0
    max_particles: int = 5_000_000

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0.0):
            raise InvalidInputError(f"alpha must be nonnegative, got {self.alpha}")
        if not (np.isfinite(self.t_max) and self.t_max > 0.0):
            raise InvalidInputError(f"t_max must be positive, got {self.t_max}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if not (np.isfinite(self.binary_rate) and self.binary_rate >= 0.0):
            raise InvalidInputError("binary_rate must be nonnegative")
        if not (np.isfinite(self.diffusion_variance) and self.diffusion_variance > 0.0):
            raise InvalidInputError("diffusion_variance must be positive")
        if int(self.max_particles) != self.max_particles or self.max_particles < 1:
            raise InvalidInputError("max_particles must be a positive integer")


@dataclass(frozen=True)
class BbmReplica:
    """Terminal statistics of one replica."""

    max_position: float
    particle_counts: Tuple[int, ...]
    derivative_martingale: float
    truncated: bool

    def __post_init__(self):
        counts = tuple(int(c) for c in self.particle_counts)
        if any(c < 0 for c in counts):
            raise InvalidInputError("particle counts must be nonnegative")
        object.__setattr__(self, "particle_counts", counts)


def _root_lineages(seed: int, indices: np.ndarray) -> np.ndarray:
    base = _scramble(np.uint64(seed) ^ _ROOT_SALT)
    return _scramble(base + indices.astype(np.uint64) * _GOLDEN)


def _run_batch(config: BbmConfig, indices: np.ndarray, start_type: int):
    """Advance a batch of replicas event generation by event generation.

    Returns (max_position, counts, martingale, truncated) arrays over
    the batch.  All per-replica aggregation here is replica-stable:
    leaves of one replica always arrive in the same relative order no
    matter which other replicas share the batch.
    """
    nrep = indices.size
    k = config.k
    var = config.diffusion_variance
    tmax = config.t_max
    max_pos = np.full(nrep, -np.inf)
    counts = np.zeros((nrep, k), dtype=np.int64)
    mart = np.zeros(nrep)
    born = np.ones(nrep, dtype=np.int64)
    truncated = np.zeros(nrep, dtype=bool)
    all_reps = np.arange(nrep)

    t = np.zeros(nrep)
    x = np.zeros(nrep)
    typ = np.full(nrep, start_type, dtype=np.int64)
    lin = _root_lineages(config.seed, indices)
    ctr = np.zeros(nrep, dtype=np.uint64)
    rep = all_reps.copy()

    one = np.uint64(1)
    while t.size:
        rate = np.where(typ < k, config.binary_rate + config.alpha, config.binary_rate)
        with np.errstate(divide="ignore"):
            dt = -np.log(_u01(_word(lin, ctr + one))) / rate
        t_event = t + dt
        fin = t_event >= tmax

        if fin.any():
            z = _normal(lin[fin], ctr[fin] + np.uint64(2))
            xf = x[fin] + z * np.sqrt(var * (tmax - t[fin]))
            rf = rep[fin]
            present = np.bincount(rf, minlength=nrep) > 0
            grouped = ndimage.maximum(xf, labels=rf, index=all_reps)
            max_pos = np.where(present, np.maximum(max_pos, grouped), max_pos)
            counts += np.bincount(
                rf * k + typ[fin] - 1, minlength=nrep * k
            ).reshape(nrep, k)
            mart += np.bincount(
                rf, weights=(2.0 * tmax - xf) * np.exp(xf - 2.0 * tmax), minlength=nrep
            )

        sv = ~fin
        if not sv.any():
            break
        lin_s = lin[sv]
        ctr_s = ctr[sv]
        typ_s = typ[sv]
        rate_s = rate[sv]
        z = _normal(lin_s, ctr_s + np.uint64(2))
        x_new = x[sv] + z * np.sqrt(var * dt[sv])
        t_new = t_event[sv]
        rep_s = rep[sv]

        mut_u = _u01(_word(lin_s, ctr_s + np.uint64(4)))
        mut = (typ_s < k) & (mut_u * rate_s < config.alpha)
        typ_other = typ_s + mut

        born += np.bincount(rep_s, minlength=nrep)
        newly = born > config.max_particles
        truncated |= newly

        t = np.concatenate([t_new, t_new])
        x = np.concatenate([x_new, x_new])
        typ = np.concatenate([typ_s, typ_other])
        lin = np.concatenate([_scramble(lin_s ^ _CHILD_A), _scramble(lin_s ^ _CHILD_B)])
        ctr = np.zeros(t.size, dtype=np.uint64)
        rep = np.concatenate([rep_s, rep_s])
        if truncated.any():
            keep = ~truncated[rep]
            if not keep.all():
                t, x, typ, lin, ctr, rep = (
                    a[keep] for a in (t, x, typ, lin, ctr, rep)
                )
    return max_pos, counts, mart, truncated


def _to_replicas(batch) -> List[BbmReplica]:
    max_pos, counts, mart, truncated = batch
    return [
        BbmReplica(
            max_position=float(max_pos[j]),
            particle_counts=tuple(int(c) for c in counts[j]),
            derivative_martingale=float(mart[j]),
            truncated=bool(truncated[j]),
        )
        for j in range(max_pos.size)
    ]


def simulate_replica(config: BbmConfig, replica_index: int) -> BbmReplica:
    """Simulate one replica; fully determined by (config, replica_index)."""
    if int(replica_index) != replica_index or replica_index < 0:
        raise InvalidInputError("replica_index must be a nonnegative integer")
    return _to_replicas(
        _run_batch(config, np.array([replica_index], dtype=np.int64), 1)
    )[0]


def simulate_replicas(
    config: BbmConfig, n_replicas: int, n_jobs: int = 1, start_index: int = 0
) -> List[BbmReplica]:
    """Simulate replicas start_index .. start_index + n_replicas - 1.

    Work is split into fixed-size chunks regardless of n_jobs, so the
    result is byte-identical for any worker count.
    """
    if int(n_replicas) != n_replicas or n_replicas < 1:
        raise InvalidInputError("n_replicas must be a positive integer")
    if int(n_jobs) != n_jobs or n_jobs < 1:
        raise InvalidInputError("n_jobs must be a positive integer")
    indices = np.arange(start_index, start_index + n_replicas, dtype=np.int64)
    chunks = [indices[i : i + _CHUNK] for i in range(0, n_replicas, _CHUNK)]
    if n_jobs == 1:
        batches = [_run_batch(config, c, 1) for c in chunks]
    else:
        batches = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_run_batch)(config, c, 1) for c in chunks
        )
    out: List[BbmReplica] = []
    for b in batches:
        out.extend(_to_replicas(b))
    return out


@dataclass(frozen=True)
class EmpiricalCdf:
    """Sorted maxima with survival-function queries.

    The PDE-side object v^1(t, x) is P(M_t >= x), so queries are
    survival fractions, not distribution-function values.
    """

    values: np.ndarray
    n: int
    truncated_excluded: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.n:
            raise InvalidInputError("n must equal the number of sample values")
        if np.any(np.diff(values) < 0.0):
            raise InvalidInputError("samples must be sorted ascending")
        object.__setattr__(self, "values", values)

    def survival(self, x) -> np.ndarray:
        """Fraction of maxima at or above x (vectorizes over x)."""
        x = np.asarray(x, dtype=float)
        return (self.n - np.searchsorted(self.values, x, side="left")) / self.n


def empirical_max_cdf(replicas: Sequence[BbmReplica]) -> EmpiricalCdf:
    """Survival statistics of the maxima; truncated replicas are dropped."""
    kept = [r.max_position for r in replicas if not r.truncated]
    dropped = len(replicas) - len(kept)
    if not kept:
        raise NoDataError("every replica overflowed the particle cap")
    if len(kept) < 100:
        raise InvalidInputError(
            f"need at least 100 usable replicas, got {len(kept)}"
        )
    return EmpiricalCdf(np.sort(np.asarray(kept)), len(kept), dropped)


@dataclass(frozen=True)
class ComparisonReport:
    """Where and how the particle maxima were compared with the PDE."""

    ks_distance: float
    x_lo: float
    x_hi: float
    n_points: int
    n_samples: int
    truncated_excluded: int


def compare_bbm_pde(
    cdf: EmpiricalCdf, stack: FieldStack, t_expected: Optional[float] = None
) -> Tuple[float, ComparisonReport]:
    """Sup distance between the empirical survival and component 1.

    The comparison is restricted to grid points where the PDE value
    lies in [1e-3, 1 - 1e-3]; outside that band both functions are
    pinned near 0 or 1 and the distance says nothing.
    """
    if t_expected is not None:
        if abs(stack.time - t_expected) > 1e-6 * max(1.0, abs(t_expected)):
            raise InvalidInputError(
                f"field is at t = {stack.time:g}, expected {t_expected:g}"
            )
    v1 = stack.component(1)
    mask = (v1 >= _BAND) & (v1 <= 1.0 - _BAND)
    if not mask.any():
        raise InvalidInputError(
            "component 1 never crosses the comparison band; wrong grid or time"
        )
    xs = stack.grid.x[mask]
    gap = np.abs(cdf.survival(xs) - v1[mask])
    distance = float(gap.max())
    report = ComparisonReport(
        ks_distance=distance,
        x_lo=float(xs[0]),
        x_hi=float(xs[-1]),
        n_points=int(mask.sum()),
        n_samples=cdf.n,
        truncated_excluded=cdf.truncated_excluded,
    )
    return distance, report


@dataclass(frozen=True)
class MartingaleSeries:
    """Monte Carlo summary of Z_t at each requested time."""

    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_used: np.ndarray

    def __post_init__(self):
        for name in ("times", "mean", "std"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "n_used", np.asarray(self.n_used, dtype=np.int64))


def derivative_martingale_series(
    config: BbmConfig, times: Sequence[float], n_replicas: int, n_jobs: int = 1
) -> MartingaleSeries:
    """Mean and spread of Z_t for the autonomous type-k process.

    Each requested time runs its own batch of replicas from a single
    type-k particle; type k only branches binarily, so this is the
    single-type process.  Truncated replicas are excluded from both
    moments.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise InvalidInputError("times must be a nonempty vector")
    if np.any(np.diff(times) <= 0.0):
        raise InvalidInputError("times must be strictly increasing")
    if times[0] < 0.0 or times[-1] > config.t_max:
        raise InvalidInputError("times must lie within [0, t_max]")
    if int(n_replicas) != n_replicas or n_replicas < 1:
        raise InvalidInputError("n_replicas must be a positive integer")
    indices = np.arange(n_replicas, dtype=np.int64)
    chunks = [indices[i : i + _CHUNK] for i in range(0, n_replicas, _CHUNK)]
    mean = np.empty(times.size)
    std = np.empty(times.size)
    n_used = np.empty(times.size, dtype=np.int64)
    for j, s in enumerate(times):
        if s == 0.0:
            # a single particle at the origin: (2*0 - 0) e^0 * ... = 0
            mean[j], std[j] = 0.0, 0.0
            n_used[j] = n_replicas
            continue
        cfg = replace(config, t_max=float(s))
        if n_jobs == 1:
            batches = [_run_batch(cfg, c, config.k) for c in chunks]
        else:
            batches = Parallel(n_jobs=n_jobs, prefer="threads")(
                delayed(_run_batch)(cfg, c, config.k) for c in chunks
            )
        z = np.concatenate([b[2] for b in batches])
        ok = ~np.concatenate([b[3] for b in batches])
        if not ok.any():
            raise NoDataError(f"every replica at t = {s:g} overflowed the cap")
        mean[j] = z[ok].mean()
        std[j] = z[ok].std(ddof=1) if ok.sum() > 1 else 0.0
        n_used[j] = int(ok.sum())
    return MartingaleSeries(times, mean, std, n_used)
