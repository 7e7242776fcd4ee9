"""Transfer-matrix evaluation of normalized point-to-point and point-to-line
partition functions.

A slice at time t stores the values Z(t, x) on the sites x = x_lo, x_lo + 2,
... (one parity class) as float mantissas times a per-row power of two. Rows
are independent environments or independent starting points sharing one
environment; every row is updated with the same elementwise operations, so a
row's result does not depend on which other rows share the batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._parallel import parallel_map
from .environment import DomainError, EnvironmentBatch, child_seeds, log_mgf, DisorderLaw

__all__ = [
    "PathConstraint",
    "Tube",
    "Window",
    "SiteMask",
    "Intersection",
    "Escape",
    "PartitionSlice",
    "FreeEnergyEstimate",
    "SuperadditivityReport",
    "evolve_slice",
    "run_slices",
    "partition_function",
    "point_to_point",
    "point_to_point_all",
    "sample_log_partition",
    "free_energy_estimate",
    "superadditivity_check",
    "enumerate_paths",
    "brute_force_partition",
]

_LN2 = math.log(2.0)
_RENORM_HI = 2.0 ** 16
_RENORM_LO = 2.0 ** -16


# -- path constraints -------------------------------------------------------

class PathConstraint:
    """Allowed space-time region for walk paths.

    ``interval(t)`` bounds the allowed sites at absolute time t (used to clip
    slices); ``allows(t, xs)`` is the exact membership mask. Constraints
    compose with ``&``.
    """

    def interval(self, t: int) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def allows(self, t: int, xs: np.ndarray) -> np.ndarray:
        lo, hi = self.interval(t)
        return (xs >= lo) & (xs <= hi)

    def indicator(self, paths: np.ndarray, t0: int = 0) -> np.ndarray:
        """True for each path (row of positions at times t0, t0+1, ...) that
        stays in the allowed region."""
        paths = np.atleast_2d(paths)
        ok = np.ones(len(paths), dtype=bool)
        for i in range(paths.shape[1]):
            ok &= self.allows(t0 + i, paths[:, i])
        return ok

    def __and__(self, other: "PathConstraint | None") -> "PathConstraint":
        if other is None:
            return self
        return Intersection((self, other))


@dataclass(frozen=True)
class Tube(PathConstraint):
    """|x - center| <= half_width for t_start < t <= t_end."""

    center: float
    half_width: float
    t_start: float = -math.inf
    t_end: float = math.inf

    def interval(self, t):
        if self.t_start < t <= self.t_end:
            return (self.center - self.half_width, self.center + self.half_width)
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class Window(PathConstraint):
    """lo <= x <= hi at the single time ``time`` (endpoint sets)."""

    time: int
    lo: float
    hi: float

    def interval(self, t):
        return (self.lo, self.hi) if t == self.time else (-math.inf, math.inf)


@dataclass(frozen=True)
class SiteMask(PathConstraint):
    """Arbitrary predicate ``fn(t, xs) -> bool array``."""

    fn: Callable[[int, np.ndarray], np.ndarray]

    def allows(self, t, xs):
        return np.asarray(self.fn(t, np.asarray(xs)), dtype=bool)


@dataclass(frozen=True)
class Intersection(PathConstraint):
    parts: tuple

    def interval(self, t):
        lo, hi = -math.inf, math.inf
        for p in self.parts:
            a, b = p.interval(t)
            lo, hi = max(lo, a), min(hi, b)
        return (lo, hi)

    def allows(self, t, xs):
        ok = np.ones(np.shape(xs), dtype=bool)
        for p in self.parts:
            ok &= p.allows(t, xs)
        return ok

    def __and__(self, other):
        if other is None:
            return self
        return Intersection(self.parts + (other,))


@dataclass(frozen=True)
class Escape:
    """Complement event: the path leaves ``inner`` at some time.

    Not a region constraint, so it is only usable where events are evaluated
    path by path (enumeration and chaos expansion).
    """

    inner: PathConstraint

    def indicator(self, paths, t0=0):
        return ~self.inner.indicator(paths, t0)


# -- slices -----------------------------------------------------------------

@dataclass
class PartitionSlice:
    """Z(time, x_lo + 2j) = values[b, j] * 2**scale[b] for each row b."""

    time: int
    x_lo: int
    values: np.ndarray
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.scale is None:
            self.scale = np.zeros(len(self.values), dtype=np.int64)

    @classmethod
    def point(cls, x: int, time: int = 0, rows: int = 1) -> "PartitionSlice":
        return cls(time, int(x), np.ones((rows, 1)))

    @classmethod
    def from_starts(cls, starts: Sequence[int], time: int = 0) -> "PartitionSlice":
        """One row per start site, all started at ``time``."""
        starts = np.asarray(starts, dtype=np.int64)
        if len(starts) == 0:
            raise DomainError("no starting sites")
        if np.any((starts - starts[0]) % 2):
            raise DomainError("starting sites must share parity")
        lo = int(starts.min())
        width = int(starts.max() - lo) // 2 + 1
        vals = np.zeros((len(starts), width))
        vals[np.arange(len(starts)), (starts - lo) // 2] = 1.0
        return cls(time, lo, vals)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def sites(self) -> np.ndarray:
        return self.x_lo + 2 * np.arange(self.width)

    @property
    def log_offset(self) -> np.ndarray:
        off = self.scale * _LN2
        return np.where(self.empty, -math.inf, off)

    @property
    def empty(self) -> np.ndarray:
        """Rows annihilated by the constraint (represented value -inf in log)."""
        if self.width == 0:
            return np.ones(self.rows, dtype=bool)
        return ~np.any(self.values > 0, axis=1)

    def log_total(self) -> np.ndarray:
        """log of the sum over sites, per row (-inf for empty rows)."""
        out = np.full(self.rows, -math.inf)
        for b in range(self.rows):
            s = math.fsum(self.values[b]) if self.width else 0.0
            if s > 0:
                out[b] = math.log(s) + self.scale[b] * _LN2
        return out

    def log_value(self, y: int) -> np.ndarray:
        """log Z(time, y) per row."""
        j, r = divmod(y - self.x_lo, 2)
        if r:
            raise DomainError(f"site {y} has the wrong parity for time {self.time}")
        out = np.full(self.rows, -math.inf)
        if 0 <= j < self.width:
            v = self.values[:, j]
            pos = v > 0
            out[pos] = np.log(v[pos]) + self.scale[pos] * _LN2
        return out

    def represented(self) -> np.ndarray:
        """Values in linear scale (may overflow/underflow; for small tests)."""
        return self.values * np.exp2(self.scale.astype(float))[:, None]


def _renormalize(sl: PartitionSlice) -> None:
    if sl.width == 0:
        return
    peak = sl.values.max(axis=1)
    out = (peak > _RENORM_HI) | ((peak < _RENORM_LO) & (peak > 0))
    if np.any(out):
        _, e = np.frexp(peak[out])
        sl.values[out] = np.ldexp(sl.values[out], -e[:, None])
        sl.scale[out] += e


def _zeta_rows(env, beta: float, lam: float, t: int, xs: np.ndarray) -> np.ndarray:
    if beta == 0.0:
        return np.ones((1, len(xs)))
    return np.exp(beta * env.eta_rows(t, xs) - lam)


def evolve_slice(sl: PartitionSlice, env, beta: float, constraint: PathConstraint | None = None,
                 lam: float | None = None) -> PartitionSlice:
    """One step Z(t+1, x) = (Z(t, x-1) + Z(t, x+1)) / 2 * zeta(t+1, x), masked."""
    if lam is None:
        lam = log_mgf(env.law, beta)
    t = sl.time + 1
    m = sl.width
    new = np.zeros((sl.rows, m + 1))
    new[:, :m] = sl.values
    new[:, 1:] += sl.values
    new *= 0.5
    x_lo = sl.x_lo - 1
    if constraint is not None:
        lo, hi = constraint.interval(t)
        j_lo = 0 if lo == -math.inf else max(0, math.ceil((lo - x_lo) / 2))
        j_hi = m if hi == math.inf else min(m, math.floor((hi - x_lo) / 2))
        if j_hi < j_lo:
            return PartitionSlice(t, x_lo, np.zeros((sl.rows, 0)), sl.scale.copy())
        new = new[:, j_lo:j_hi + 1]
        x_lo += 2 * j_lo
    xs = x_lo + 2 * np.arange(new.shape[1])
    if constraint is not None:
        new[:, ~constraint.allows(t, xs)] = 0.0
    if new.shape[1]:
        new *= _zeta_rows(env, beta, lam, t, xs)
    out = PartitionSlice(t, x_lo, new, sl.scale.copy())
    _renormalize(out)
    return out


def run_slices(env, beta: float, N: int, start: PartitionSlice,
               constraint: PathConstraint | None = None) -> PartitionSlice:
    """Evolve ``start`` for N steps; the start itself is masked first."""
    if N < 0:
        raise DomainError("N must be >= 0")
    lam = log_mgf(env.law, beta)
    sl = PartitionSlice(start.time, start.x_lo, start.values.copy(), start.scale.copy())
    if constraint is not None:
        sl.values[:, ~constraint.allows(sl.time, sl.sites)] = 0.0
    for _ in range(N):
        sl = evolve_slice(sl, env, beta, constraint, lam)
    return sl


def _initial(env, start_x: int, t0: int) -> PartitionSlice:
    return PartitionSlice.point(start_x, t0, rows=env.batch_size)


def partition_function(env, beta: float, N: int, start_x: int = 0,
                       constraint: PathConstraint | None = None, t0: int = 0):
    """log W_{beta,N}(A) for the walk started at (t0, start_x).

    The environment is read at times t0+1, ..., t0+N, so ``t0`` realizes the
    time shift theta_{t0}. Returns a float for a single field, an array for a
    batch; annihilated constraints give -inf.
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    out = run_slices(env, beta, N, _initial(env, start_x, t0), constraint).log_total()
    return float(out[0]) if not isinstance(env, EnvironmentBatch) else out


def point_to_point(env, beta: float, N: int, start_x: int, end_y: int, t0: int = 0):
    """log of W restricted to {S_N = end_y}."""
    if (N + end_y - start_x) % 2:
        raise DomainError("endpoint parity incompatible with N")
    if abs(end_y - start_x) > N:
        raise DomainError("endpoint unreachable in N steps")
    out = run_slices(env, beta, N, _initial(env, start_x, t0)).log_value(end_y)
    return float(out[0]) if not isinstance(env, EnvironmentBatch) else out


def point_to_point_all(env, beta: float, N: int, start_x: int = 0, t0: int = 0):
    """(sites, log Z(N, sites)) for the first row."""
    sl = run_slices(env, beta, N, _initial(env, start_x, t0))
    with np.errstate(divide="ignore"):
        return sl.sites, np.log(sl.values[0]) + sl.scale[0] * _LN2


# -- brute force ------------------------------------------------------------

def enumerate_paths(N: int, start_x: int = 0) -> np.ndarray:
    """All 2**N walk paths as an array (2**N, N+1) of positions."""
    if N > 20:
        raise DomainError("refusing to enumerate more than 2**20 paths")
    codes = np.arange(2 ** N, dtype=np.int64)
    steps = 2 * ((codes[:, None] >> np.arange(N)) & 1) - 1
    paths = np.zeros((2 ** N, N + 1), dtype=np.int64)
    paths[:, 0] = start_x
    paths[:, 1:] = start_x + np.cumsum(steps, axis=1)
    return paths


def brute_force_partition(field, beta: float, N: int, start_x: int = 0, event=None,
                          t0: int = 0) -> float:
    """W by direct summation of prod zeta over all 2**N paths (linear scale)."""
    paths = enumerate_paths(N, start_x)
    lam = log_mgf(field.law, beta)
    logw = np.zeros(len(paths))
    for i in range(1, N + 1):
        logw += beta * np.asarray(field.eta(t0 + i, paths[:, i])) - lam
    weights = np.exp(logw)
    if event is not None:
        weights = weights * event.indicator(paths, t0)
    return math.fsum(weights) / 2 ** N


# -- free energy ------------------------------------------------------------

@dataclass(frozen=True)
class FreeEnergyEstimate:
    law: str
    beta: float
    N: int
    sample_count: int
    mean: float
    stderr: float

    @property
    def ratio(self) -> float:
        """mean / beta**4."""
        return self.mean / self.beta ** 4


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), math.nan
    return float(math.fsum(x) / len(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


CHUNK = 16


def sample_log_partition(law, beta: float, N: int, samples: int, seed: int, *,
                         start_x: int = 0, constraint: PathConstraint | None = None,
                         t0: int = 0, threads: int = 1, offset: int = 0) -> np.ndarray:
    """log W for environments child_seed(seed, i), i = offset .. offset+samples-1.

    Work is split into fixed chunks of CHUNK samples, so the output is
    bit-identical for every ``threads`` value.
    """
    law = DisorderLaw.parse(law)
    bounds = [(a, min(a + CHUNK, samples)) for a in range(0, samples, CHUNK)]

    def work(b):
        env = EnvironmentBatch(child_seeds(seed, np.arange(offset + b[0], offset + b[1])), law)
        return partition_function(env, beta, N, start_x, constraint, t0)

    parts = parallel_map(work, bounds, threads)
    return np.concatenate(parts) if parts else np.zeros(0)


def free_energy_estimate(law, beta: float, N: int, samples: int, seed: int,
                         threads: int = 1) -> FreeEnergyEstimate:
    """Mean and standard error of (1/N) log W_{beta,N} over ``samples`` environments."""
    if samples < 2:
        raise DomainError("need at least 2 samples")
    law = DisorderLaw.parse(law)
    if beta == 0.0:
        return FreeEnergyEstimate(law.value, 0.0, N, samples, 0.0, 0.0)
    logw = sample_log_partition(law, beta, N, samples, seed, threads=threads) / N
    mean, se = _mean_stderr(logw)
    return FreeEnergyEstimate(law.value, beta, N, samples, mean, se)


@dataclass(frozen=True)
class SuperadditivityReport:
    N: int
    M: int
    mean_N: float
    mean_M: float
    mean_NM: float
    gap: float
    gap_stderr: float
    holds: bool


def superadditivity_check(law, beta: float, N: int, M: int, samples: int, seed: int,
                          threads: int = 1, sigmas: float = 3.0) -> SuperadditivityReport:
    """Check Q[log W_{N+M}] >= Q[log W_N] + Q[log W_M] - sigmas * stderr.

    All three partition functions are evaluated on the same environments, and
    the standard error is that of the per-environment gap
    log W_{N+M} - log W_N - log W_M.
    """
    if N < 1 or M < 1:
        raise DomainError("N and M must be >= 1")
    a = sample_log_partition(law, beta, N, samples, seed, threads=threads)
    b = sample_log_partition(law, beta, M, samples, seed, threads=threads)
    c = sample_log_partition(law, beta, N + M, samples, seed, threads=threads)
    gap, se = _mean_stderr(c - a - b)
    if beta == 0.0:
        se = 0.0
    return SuperadditivityReport(N, M, float(a.mean()), float(b.mean()), float(c.mean()),
                                 gap, se, bool(gap >= -sigmas * se))
