"""Coarse-grained lattice, tube-restricted bond partition functions, the
epsilon-good bond predicate, and oriented bond percolation on the CG lattice.

Block length ``Tn`` is rounded down to an even integer, so every CG level sits
at an even time and admissible segment points are the even integers.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from ._parallel import parallel_map
from .environment import DisorderLaw, DomainError, EnvironmentField, child_seeds
from .polymer import PartitionSlice, Tube, Window, partition_function, run_slices

__all__ = [
    "CONTINUUM_FREE_ENERGY",
    "CGGeometry",
    "Segment",
    "BondRecord",
    "segment_points",
    "bond_constraint",
    "bond_partition",
    "bond_partitions",
    "bond_record",
    "is_good",
    "good_density_estimate",
    "chain_factorization_check",
    "lss_threshold",
    "BondStates",
    "oriented_percolation_survive",
    "survives",
    "exists_open_path_enumerated",
    "good_bond_states",
    "dependence_structure_check",
    "translation_invariance_check",
]

# free energy of the continuum polymer at noise strength sqrt(2)
CONTINUUM_FREE_ENERGY = -1.0 / 6.0

_EPS = 1e-9


def _floor_inverse_fourth(beta: float) -> int:
    x = beta ** -4.0
    n = math.floor(x)
    # beta = 1/3 gives 80.99999999999999; snap to the intended integer
    if math.isclose(x, n + 1, rel_tol=1e-12):
        n += 1
    return int(n)


@dataclass(frozen=True)
class CGGeometry:
    beta: float
    T: float
    delta: float
    L: float

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise DomainError("beta must lie in (0, 1]")
        if self.T < 1:
            raise DomainError("T must be >= 1")
        if not 0 < self.delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        if not self.L > 2 * self.delta + 1:
            raise DomainError("L must exceed 2 delta + 1")
        if self.block < 2:
            raise DomainError("block length T n rounds below 2")

    @property
    def n(self) -> int:
        return _floor_inverse_fourth(self.beta)

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n)

    @property
    def block(self) -> int:
        """T n rounded down to an even integer."""
        return 2 * int(math.floor(self.T * self.n / 2 + _EPS))

    @property
    def spacing(self) -> float:
        """delta T sqrt(n): distance between neighbouring segment centres."""
        return self.delta * self.T * self.sqrt_n

    @property
    def half_width(self) -> float:
        """L T sqrt(n): tube half-width."""
        return self.L * self.T * self.sqrt_n

    @property
    def threshold(self) -> float:
        return self.T * CONTINUUM_FREE_ENERGY

    def segment_bounds(self, j: int) -> tuple[int, int]:
        """Integer endpoints of B_j, rounded inward."""
        lo = math.ceil((j * self.delta * self.T - 1) * self.sqrt_n - _EPS)
        hi = math.floor((j * self.delta * self.T + 1) * self.sqrt_n + _EPS)
        return lo, hi

    def tube(self, I: int, X: int) -> Tube:
        return Tube(X * self.spacing, self.half_width, I * self.block, (I + 1) * self.block)

    def tube_box(self, I: int, X: int) -> tuple[int, int, int, int]:
        """Integer bounding box (t_lo, t_hi, x_lo, x_hi) of the tube, times t_lo < t <= t_hi."""
        c, h = X * self.spacing, self.half_width
        return (I * self.block, (I + 1) * self.block,
                math.ceil(c - h - _EPS), math.floor(c + h + _EPS))

    @staticmethod
    def is_site(I: int, X: int) -> bool:
        return I >= 0 and abs(X) <= I and (I - abs(X)) % 2 == 0

    @classmethod
    def is_bond(cls, I: int, X: int, Y: int) -> bool:
        return cls.is_site(I, X) and abs(X - Y) == 1


@dataclass(frozen=True)
class Segment:
    j: int
    lo: int
    hi: int
    points: tuple[int, ...]

    @property
    def empty(self) -> bool:
        return not self.points


def segment_points(geom: CGGeometry, j: int, time_anchor: int = 0) -> Segment:
    """Integers x in B_j with x - time_anchor * block even."""
    lo, hi = geom.segment_bounds(j)
    parity = (time_anchor * geom.block) % 2
    pts = tuple(x for x in range(lo, hi + 1) if (x - parity) % 2 == 0)
    return Segment(j, lo, hi, pts)


def bond_constraint(geom: CGGeometry, I: int, X: int, Y: int, tube: bool = True):
    """Tube of (I, X) for the block, and endpoint in B_Y at time (I+1) block."""
    lo, hi = geom.segment_bounds(Y)
    window = Window((I + 1) * geom.block, lo, hi)
    return geom.tube(I, X) & window if tube else window


def _check_bond(I, X, Y):
    if not CGGeometry.is_bond(I, X, Y):
        raise DomainError(f"<({I},{X}),({I + 1},{Y})> is not a CG bond")


def bond_partition(env, geom: CGGeometry, bond: tuple[int, int, int], start_x: int) -> float:
    """log theta_{I block} W^x_{beta, block}(tube of (I,X), end in B_Y)."""
    I, X, Y = bond
    _check_bond(I, X, Y)
    seg = segment_points(geom, X, I)
    if start_x not in seg.points:
        raise DomainError(f"start {start_x} is not an admissible point of B_{X}")
    return partition_function(env, geom.beta, geom.block, start_x,
                              bond_constraint(geom, I, X, Y), t0=I * geom.block)


def bond_partitions(env, geom: CGGeometry, bond: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    """(starts, log bond partitions) for every admissible start, in one sweep."""
    I, X, Y = bond
    _check_bond(I, X, Y)
    seg = segment_points(geom, X, I)
    if seg.empty:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    start = PartitionSlice.from_starts(seg.points, I * geom.block)
    sl = run_slices(env, geom.beta, geom.block, start, bond_constraint(geom, I, X, Y))
    return np.asarray(seg.points), sl.log_total()


@dataclass(frozen=True)
class BondRecord:
    I: int
    X: int
    Y: int
    log_w_min: float
    threshold: float
    good: bool

    CSV_HEADER = "I,X,Y,log_w_min,threshold,good"

    def csv_row(self) -> str:
        return f"{self.I},{self.X},{self.Y},{self.log_w_min!r},{self.threshold!r},{int(self.good)}"


def bond_record(env, geom: CGGeometry, bond, eps: float) -> BondRecord:
    if eps <= 0:
        raise DomainError("eps must be > 0")
    I, X, Y = bond
    _, logw = bond_partitions(env, geom, bond)
    thr = geom.T * (CONTINUUM_FREE_ENERGY - eps)
    if len(logw) == 0:
        # empty segment: nothing to minimize over, reported as bad
        return BondRecord(I, X, Y, -math.inf, thr, False)
    m = float(np.min(logw))
    return BondRecord(I, X, Y, m, thr, bool(m >= thr))


def is_good(env, geom: CGGeometry, bond, eps: float) -> bool:
    """min over admissible starts of the bond partition >= T (-1/6 - eps)."""
    return bond_record(env, geom, bond, eps).good


def good_density_estimate(law, geom: CGGeometry, eps: float, samples: int, seed: int,
                          threads: int = 1) -> tuple[float, float]:
    """Fraction of environments in which <(0,0),(1,1)> is eps-good, with stderr."""
    if samples < 2:
        raise DomainError("need at least 2 samples")
    law = DisorderLaw.parse(law)
    seeds = child_seeds(seed, np.arange(samples))
    flags = parallel_map(lambda s: is_good(EnvironmentField(int(s), law), geom, (0, 0, 1), eps),
                         seeds, threads)
    u = np.array(flags, dtype=float)
    return float(u.mean()), float(u.std(ddof=1) / math.sqrt(samples))


def chain_factorization_check(env, geom: CGGeometry, path: Sequence[int], rtol: float = 1e-10) -> dict:
    """W_{beta, I block}(all bond events along the CG path) >= prod_J inf_x bond partitions."""
    path = list(path)
    if not path or path[0] != 0:
        raise DomainError("CG path must start at X = 0")
    if any(abs(b - a) != 1 for a, b in zip(path, path[1:])):
        raise DomainError("CG path must be nearest-neighbour")
    I = len(path) - 1
    constraint = None
    rhs_terms = []
    for J in range(I):
        c = bond_constraint(geom, J, path[J], path[J + 1])
        constraint = c if constraint is None else constraint & c
        _, logw = bond_partitions(env, geom, (J, path[J], path[J + 1]))
        rhs_terms.append(float(np.min(logw)) if len(logw) else -math.inf)
    lhs = partition_function(env, geom.beta, I * geom.block, 0, constraint)
    rhs = math.fsum(rhs_terms) if all(map(math.isfinite, rhs_terms)) else -math.inf
    holds = lhs >= rhs - rtol * max(1.0, abs(rhs)) if math.isfinite(rhs) else True
    return {"I": I, "path": path, "log_lhs": lhs, "log_rhs": rhs, "terms": rhs_terms, "holds": bool(holds)}


def lss_threshold(k: int) -> float:
    """1 - k^k / (k+1)^(k+1)."""
    if k < 1:
        raise DomainError("k must be >= 1")
    if k <= 300:
        return float(1 - Fraction(k ** k, (k + 1) ** (k + 1)))
    return -math.expm1(k * math.log(k) - (k + 1) * math.log(k + 1))


# -- oriented bond percolation ----------------------------------------------

@dataclass
class BondStates:
    """Open/closed states of CG bonds below ``horizon``.

    ``up[I][..., j]`` is the bond from (I, X) to (I+1, X+1) and ``down[I][..., j]``
    the bond to (I+1, X-1), with j = (X + I) / 2. Leading axes index trials.
    """

    up: list
    down: list

    @property
    def horizon(self) -> int:
        return len(self.up)

    @classmethod
    def constant(cls, horizon: int, value: bool = True) -> "BondStates":
        return cls([np.full(I + 1, value) for I in range(horizon)],
                   [np.full(I + 1, value) for I in range(horizon)])

    @classmethod
    def bernoulli(cls, p: float, horizon: int, rng: np.random.Generator, trials: int | None = None):
        shape = () if trials is None else (trials,)
        return cls([rng.random(shape + (I + 1,)) < p for I in range(horizon)],
                   [rng.random(shape + (I + 1,)) < p for I in range(horizon)])

    @classmethod
    def from_mapping(cls, mapping: Mapping[tuple[int, int, int], int], horizon: int) -> "BondStates":
        """Bonds keyed by (I, X, Y); missing bonds are closed."""
        st = cls.constant(horizon, False)
        for (I, X, Y), v in mapping.items():
            if I >= horizon or not CGGeometry.is_bond(I, X, Y):
                continue
            j = (X + I) // 2
            (st.up if Y == X + 1 else st.down)[I][j] = bool(v)
        return st

    def is_open(self, I: int, X: int, Y: int) -> bool:
        j = (X + I) // 2
        return bool((self.up if Y == X + 1 else self.down)[I][j])


def _alive(states: BondStates, horizon: int) -> list:
    """alive[I][..., j]: an open path from (I, X) reaches level ``horizon``."""
    if horizon > states.horizon:
        raise DomainError("bond states do not cover the horizon")
    batch = np.shape(states.up[0])[:-1] if horizon else ()
    alive = [None] * (horizon + 1)
    alive[horizon] = np.ones(batch + (horizon + 1,), dtype=bool)
    for I in range(horizon - 1, -1, -1):
        nxt = alive[I + 1]
        alive[I] = (states.up[I] & nxt[..., 1:]) | (states.down[I] & nxt[..., :-1])
    return alive


def survives(states: BondStates, horizon: int) -> np.ndarray:
    """Whether an open path from (0, 0) reaches ``horizon``, per trial."""
    return _alive(states, horizon)[0][..., 0]


def oriented_percolation_survive(states: BondStates, horizon: int) -> list[int] | None:
    """Leftmost open path from (0, 0) to level ``horizon`` as X_0..X_horizon, or None."""
    alive = _alive(states, horizon)
    if not alive[0][0]:
        return None
    X, path = 0, [0]
    for I in range(horizon):
        j = (X + I) // 2
        if states.down[I][j] and alive[I + 1][j]:
            X -= 1
        else:
            X += 1
        path.append(X)
    return path


def exists_open_path_enumerated(states: BondStates, horizon: int) -> np.ndarray:
    """Same answer as ``survives`` by listing all 2**horizon CG paths."""
    batch = np.shape(states.up[0])[:-1]
    found = np.zeros(batch, dtype=bool)
    for steps in itertools.product((-1, 1), repeat=horizon):
        ok = np.ones(batch, dtype=bool)
        X = 0
        for I, s in enumerate(steps):
            j = (X + I) // 2
            ok &= (states.up if s == 1 else states.down)[I][..., j]
            X += s
        found |= ok
    return found


def good_bond_states(env, geom: CGGeometry, eps: float, horizon: int,
                     records: list | None = None) -> BondStates:
    """eps-good states for bonds leaving sites reachable by open paths from the origin.

    Bonds from unreachable sites cannot lie on an open path from (0, 0) and are
    left closed without being evaluated.
    """
    st = BondStates.constant(horizon, False)
    reach = np.zeros(1, dtype=bool)
    reach[0] = True
    for I in range(horizon):
        nxt = np.zeros(I + 2, dtype=bool)
        for j in np.flatnonzero(reach):
            X = 2 * int(j) - I
            for Y, arr, k in ((X + 1, st.up, j + 1), (X - 1, st.down, j)):
                rec = bond_record(env, geom, (I, X, Y), eps)
                if records is not None:
                    records.append(rec)
                arr[I][j] = rec.good
                nxt[k] |= rec.good
        reach = nxt
        if not reach.any():
            break
    return st


# -- dependence and invariance diagnostics ------------------------------------

def _boxes_disjoint(a, b) -> bool:
    ta0, ta1, xa0, xa1 = a
    tb0, tb1, xb0, xb1 = b
    times_disjoint = ta1 <= tb0 or tb1 <= ta0
    space_disjoint = xa1 < xb0 or xb1 < xa0
    return times_disjoint or space_disjoint


def _corr(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    if u.std() == 0 or v.std() == 0:
        return math.nan, 1.0 / math.sqrt(len(u))
    return float(np.corrcoef(u, v)[0, 1]), 1.0 / math.sqrt(len(u))


def dependence_structure_check(law, geom: CGGeometry, eps: float, samples: int, seed: int,
                               threads: int = 1) -> dict:
    """Geometric disjointness of tubes and empirical correlations of U.

    Compares bond <(I,0),(I+1,1)> with a bond at the same level whose site is
    more than 2L/delta away, with a bond one level up, and (report only) with
    the adjacent bond <(I,0),(I+1,-1)> sharing its tube.
    """
    law = DisorderLaw.parse(law)
    # smallest even X strictly beyond 2L/delta
    far = 2 * (math.floor(geom.L / geom.delta) + 1)
    I = far
    base = (I, 0, 1)
    same_level = (I, far, far + 1)
    next_level = (I + 1, 1, 2)
    adjacent = (I, 0, -1)
    geometry = {
        "same_level_space_disjoint": _boxes_disjoint(geom.tube_box(I, 0), geom.tube_box(I, far)),
        "different_level_time_disjoint": _boxes_disjoint(geom.tube_box(I, 0), geom.tube_box(I + 1, 1)),
        "far_exceeds_2L_over_delta": far > 2 * geom.L / geom.delta,
    }
    seeds = child_seeds(seed, np.arange(samples))

    def one(s):
        f = EnvironmentField(int(s), law)
        return [bond_record(f, geom, b, eps).good for b in (base, same_level, next_level, adjacent)]

    u = np.array(parallel_map(one, seeds, threads), dtype=float)
    out = {"far_X": far, "level": I, "geometry": geometry, "density": u.mean(axis=0).tolist()}
    for name, col in (("same_level_far", 1), ("next_level", 2), ("adjacent", 3)):
        r, se = _corr(u[:, 0], u[:, col])
        out[name] = {"corr": r, "stderr": se,
                     "within_3se": True if math.isnan(r) else abs(r) <= 3 * se}
    out["independent_pairs_ok"] = bool(all(geometry.values())
                                       and out["same_level_far"]["within_3se"]
                                       and out["next_level"]["within_3se"])
    return out


def translation_invariance_check(law, geom: CGGeometry, bond: tuple[int, int, int], samples: int,
                                 seed: int, start_offset: int | None = None) -> dict:
    """Two-sample KS of the bond partition from the segment centre for ``bond``
    against <(0,0),(1,1)> from 0, on independent environments.

    Meaningful when the segment spacing is an even integer, so the shifted
    geometry is an exact translate.
    """
    law = DisorderLaw.parse(law)
    I, X, Y = bond
    shift = X * geom.spacing
    if start_offset is None:
        if not math.isclose(shift, round(shift)) or round(shift) % 2:
            raise DomainError("segment spacing must be an even integer for an exact translate")
        start_offset = int(round(shift))
    a_seeds = child_seeds(seed, np.arange(samples))
    b_seeds = child_seeds(seed, np.arange(samples, 2 * samples))
    a = np.array([bond_partition(EnvironmentField(int(s), law), geom, (0, 0, 1), 0) for s in a_seeds])
    b = np.array([bond_partition(EnvironmentField(int(s), law), geom, bond, start_offset) for s in b_seeds])
    res = stats.ks_2samp(a, b)
    crit = 1.628 * math.sqrt(2.0 / samples)
    return {"statistic": float(res.statistic), "pvalue": float(res.pvalue), "critical_1pct": crit,
            "passes": bool(res.statistic < crit)}
