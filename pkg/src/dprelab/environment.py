"""Normalized i.i.d. disorder fields addressed by (seed, n, x).

Every value eta(n, x) is produced by hashing the triple (seed, n, x) with a
SplitMix64-style finalizer, so a site's value does not depend on which other
sites were evaluated before it, on the order of evaluation, or on threading.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special

__all__ = [
    "DisorderLaw",
    "DomainError",
    "EnvironmentField",
    "EnvironmentBatch",
    "TabulatedField",
    "log_mgf",
    "eta",
    "zeta",
    "child_seed",
    "child_seeds",
    "hash_uniform",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_TIME_KEY = np.uint64(0xD6E8FEB86659FD93)
_SITE_KEY = np.uint64(0xA0761D6478BD642F)
_CHILD_KEY = np.uint64(0xE7037ED1A0B428DB)
_SQRT3 = math.sqrt(3.0)


class DomainError(ValueError):
    """Argument outside the domain where a quantity is defined."""


class DisorderLaw(str, enum.Enum):
    """Mean-zero, unit-variance laws for the environment."""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    SHIFTED_EXPONENTIAL = "shifted_exponential"
    CENTERED_UNIFORM = "centered_uniform"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: "str | DisorderLaw") -> "DisorderLaw":
        if isinstance(name, DisorderLaw):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown disorder law {name!r}") from None

    @property
    def beta_max(self) -> float:
        """Supremum of the beta values with a finite log-MGF."""
        return 1.0 if self is DisorderLaw.SHIFTED_EXPONENTIAL else math.inf

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on (0, 1) to samples of this law."""
        if self is DisorderLaw.GAUSSIAN:
            return special.ndtri(u)
        if self is DisorderLaw.RADEMACHER:
            return np.where(u < 0.5, -1.0, 1.0)
        if self is DisorderLaw.SHIFTED_EXPONENTIAL:
            return -np.log1p(-u) - 1.0
        return _SQRT3 * (2.0 * u - 1.0)

    def density(self, t):
        """Lebesgue density (None for the two-point law)."""
        if self is DisorderLaw.GAUSSIAN:
            return np.exp(-0.5 * np.square(t)) / math.sqrt(2 * math.pi)
        if self is DisorderLaw.SHIFTED_EXPONENTIAL:
            t = np.asarray(t, dtype=float)
            return np.where(t >= -1.0, np.exp(-(t + 1.0)), 0.0)
        if self is DisorderLaw.CENTERED_UNIFORM:
            t = np.asarray(t, dtype=float)
            return np.where(np.abs(t) <= _SQRT3, 1.0 / (2 * _SQRT3), 0.0)
        return None

    @property
    def support(self) -> tuple[float, float]:
        if self is DisorderLaw.SHIFTED_EXPONENTIAL:
            return (-1.0, math.inf)
        if self is DisorderLaw.CENTERED_UNIFORM:
            return (-_SQRT3, _SQRT3)
        if self is DisorderLaw.RADEMACHER:
            return (-1.0, 1.0)
        return (-math.inf, math.inf)


def _log_cosh(b: float) -> float:
    a = abs(b)
    return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)


def _log_sinhc(b: float) -> float:
    # log(sinh(b)/b), stable at both ends
    a = abs(b)
    if a < 1e-4:
        return a * a / 6.0 - a ** 4 / 180.0
    if a > 20.0:
        return a - math.log(2.0 * a) + math.log1p(-math.exp(-2.0 * a))
    return math.log(math.sinh(a) / a)


def log_mgf(law: "DisorderLaw | str", beta: float) -> float:
    """lambda(beta) = log Q[exp(beta * eta)] in closed form."""
    law = DisorderLaw.parse(law)
    beta = float(beta)
    if law is DisorderLaw.GAUSSIAN:
        return 0.5 * beta * beta
    if law is DisorderLaw.RADEMACHER:
        return _log_cosh(beta)
    if law is DisorderLaw.SHIFTED_EXPONENTIAL:
        if beta >= 1.0:
            raise DomainError(f"shifted_exponential log-MGF is infinite for beta={beta} >= 1")
        return -beta - math.log1p(-beta)
    return _log_sinhc(_SQRT3 * beta)


# -- hashing ----------------------------------------------------------------

def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


def _as_u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return arr
    return np.asarray(arr, dtype=np.int64).view(np.uint64)


def _site_hash(seeds: np.ndarray, n: int, xs: np.ndarray) -> np.ndarray:
    """64-bit hash of (seed, n, x); seeds shape (B,), xs shape (m,) -> (B, m)."""
    with np.errstate(over="ignore"):
        s = _mix(_as_u64(seeds).reshape(-1, 1) + _GOLDEN)
        t = _mix(np.atleast_1d(_as_u64(n)) * _TIME_KEY + _GOLDEN)
        h = _mix(s ^ t)
        return _mix(h + _as_u64(xs).reshape(1, -1) * _SITE_KEY)


def hash_uniform(seeds, n: int, xs) -> np.ndarray:
    """Uniforms in (0, 1) from the top 53 bits of the site hash."""
    bits = _site_hash(np.atleast_1d(seeds), n, np.atleast_1d(xs)) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * (2.0 ** -53)


def child_seed(master_seed: int, index: int) -> int:
    """Seed of sample ``index`` derived from ``master_seed``.

    child = mix(mix(master + golden) ^ mix(index * key + golden)), i.e. the
    same finalizer used for sites. Sample sets are therefore reproducible and
    can be extended without changing existing members.
    """
    return int(child_seeds(master_seed, [index])[0])


def child_seeds(master_seed: int, indices) -> np.ndarray:
    idx = _as_u64(np.asarray(indices, dtype=np.int64))
    with np.errstate(over="ignore"):
        m = _mix(np.array([int(master_seed) & _MASK64], dtype=np.uint64) + _GOLDEN)
        return _mix(m ^ _mix(idx * _CHILD_KEY + _GOLDEN))


# -- fields -----------------------------------------------------------------

@dataclass(frozen=True)
class EnvironmentField:
    """A single realization of the disorder, keyed by a 64-bit seed."""

    seed: int
    law: DisorderLaw = DisorderLaw.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "law", DisorderLaw.parse(self.law))
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    @property
    def seeds(self) -> np.ndarray:
        return np.array([self.seed], dtype=np.uint64)

    @property
    def batch_size(self) -> int:
        return 1

    def eta(self, n: int, x):
        """eta(n, x); scalar in, scalar out, arrays broadcast."""
        xs = np.asarray(x)
        vals = self.eta_rows(n, xs.ravel())[0]
        return float(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)

    def eta_rows(self, n: int, xs: np.ndarray) -> np.ndarray:
        if n < 1:
            raise DomainError(f"time index must be >= 1, got {n}")
        return self.law.from_uniform(hash_uniform(self.seeds, n, xs))


@dataclass(frozen=True)
class EnvironmentBatch:
    """Independent realizations sharing a law; row b uses ``seeds[b]``."""

    seeds: np.ndarray
    law: DisorderLaw = DisorderLaw.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "law", DisorderLaw.parse(self.law))
        object.__setattr__(self, "seeds", _as_u64(np.atleast_1d(self.seeds)).copy())

    @classmethod
    def from_master(cls, law, master_seed: int, start: int, stop: int) -> "EnvironmentBatch":
        return cls(child_seeds(master_seed, np.arange(start, stop)), law)

    @property
    def batch_size(self) -> int:
        return len(self.seeds)

    def field(self, b: int) -> EnvironmentField:
        return EnvironmentField(int(self.seeds[b]), self.law)

    def eta_rows(self, n: int, xs: np.ndarray) -> np.ndarray:
        if n < 1:
            raise DomainError(f"time index must be >= 1, got {n}")
        return self.law.from_uniform(hash_uniform(self.seeds, n, xs))


@dataclass(frozen=True)
class TabulatedField:
    """Explicit environment: listed (n, x) -> eta values, ``default`` elsewhere.

    Used for hand-checked examples and for exact enumeration over the
    two-point law.
    """

    values: Mapping[tuple[int, int], float] = field(default_factory=dict)
    law: DisorderLaw = DisorderLaw.RADEMACHER
    default: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "law", DisorderLaw.parse(self.law))

    @property
    def batch_size(self) -> int:
        return 1

    def eta(self, n: int, x):
        xs = np.asarray(x)
        vals = self.eta_rows(n, xs.ravel())[0]
        return float(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)

    def eta_rows(self, n: int, xs: np.ndarray) -> np.ndarray:
        if n < 1:
            raise DomainError(f"time index must be >= 1, got {n}")
        xs = np.atleast_1d(xs)
        out = np.array([self.values.get((n, int(x)), self.default) for x in xs], dtype=float)
        return out.reshape(1, -1)


def eta(field: EnvironmentField, n: int, x):
    return field.eta(n, x)


def zeta(field, beta: float, n: int, x):
    """zeta = exp(beta * eta(n, x) - lambda(beta)); Q-mean one."""
    lam = log_mgf(field.law, beta)
    return np.exp(beta * np.asarray(field.eta(n, x)) - lam)
