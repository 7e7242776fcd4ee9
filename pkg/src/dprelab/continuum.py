"""Intermediate-disorder runs: beta_n = n**(-1/4), time horizon T n.

The continuum partition function is only ever represented through this
discrete approximant. Continuum start x and windows [a, b] map to the lattice
as floor(x sqrt(n)) (shifted to even) and [a sqrt(n), b sqrt(n)].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._parallel import parallel_map
from .environment import DisorderLaw, DomainError, EnvironmentField, child_seeds
from .polymer import PartitionSlice, Window, _mean_stderr, run_slices, sample_log_partition

__all__ = [
    "IntermediateDisorderRun",
    "ContinuumConstantEstimate",
    "beta_for_scale",
    "scale_for_beta",
    "intermediate_partition",
    "continuum_constant_estimate",
    "universality_distribution_check",
    "infimum_field_estimate",
    "infimum_over_starts",
]


def beta_for_scale(n: int) -> float:
    """beta_n = n**(-1/4)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return float(n) ** -0.25


def scale_for_beta(beta: float) -> int:
    """Inverse convention: n = floor(beta**-4) (as used by the CG lattice)."""
    from .coarse_grain import _floor_inverse_fourth

    return _floor_inverse_fourth(beta)


@dataclass(frozen=True)
class IntermediateDisorderRun:
    n: int
    T: float
    law: DisorderLaw = DisorderLaw.GAUSSIAN
    x: float = 0.0
    window: tuple[float, float] | None = None  # continuum units; None = whole line

    def __post_init__(self):
        object.__setattr__(self, "law", DisorderLaw.parse(self.law))
        if self.steps < 2:
            raise DomainError("T n must be >= 2")

    @property
    def beta(self) -> float:
        return beta_for_scale(self.n)

    @property
    def steps(self) -> int:
        return int(round(self.T * self.n))

    @property
    def start(self) -> int:
        s = math.floor(self.x * math.sqrt(self.n))
        return s - (s % 2)

    def constraint(self):
        if self.window is None:
            return None
        a, b = self.window
        r = math.sqrt(self.n)
        return Window(self.steps, a * r, b * r)


def intermediate_partition(run: IntermediateDisorderRun, env) -> float | np.ndarray:
    """log W^{start}_{beta_n, T n}(endpoint window)."""
    from .polymer import partition_function

    return partition_function(env, run.beta, run.steps, run.start, run.constraint())


@dataclass(frozen=True)
class ContinuumConstantEstimate:
    n: int
    law: str
    samples: int
    T: tuple[float, ...]
    mean: tuple[float, ...]
    stderr: tuple[float, ...]
    log_w: dict = field(default_factory=dict, repr=False, compare=False)

    CSV_HEADER = "n,T,law,samples,mean,stderr"

    def csv_rows(self) -> list[str]:
        return [f"{self.n},{T!r},{self.law},{self.samples},{m!r},{s!r}"
                for T, m, s in zip(self.T, self.mean, self.stderr)]


def continuum_constant_estimate(n: int, T_list, samples: int, law="gaussian", seed: int = 0,
                                threads: int = 1) -> ContinuumConstantEstimate:
    """(1/T) mean log W_{beta_n, T n} per T, in increasing T."""
    if samples < 2:
        raise DomainError("need at least 2 samples")
    law = DisorderLaw.parse(law)
    Ts = tuple(sorted(float(t) for t in T_list))
    means, errs, raw = [], [], {}
    for T in Ts:
        run = IntermediateDisorderRun(n, T, law)
        logw = sample_log_partition(law, run.beta, run.steps, samples, seed, threads=threads)
        raw[T] = logw
        m, s = _mean_stderr(logw / T)
        means.append(m)
        errs.append(s)
    return ContinuumConstantEstimate(n, law.value, samples, Ts, tuple(means), tuple(errs), raw)


def universality_distribution_check(n: int, T: float, laws, samples: int, seed: int = 0,
                                    threads: int = 1, alpha: float = 1e-3) -> dict:
    """Two-sample KS test of log W samples under two disorder laws.

    Both laws use the same seeds, so a law compared with itself gives
    identical samples.
    """
    law_a, law_b = (DisorderLaw.parse(l) for l in laws)
    run = IntermediateDisorderRun(n, T, law_a)
    a = sample_log_partition(law_a, run.beta, run.steps, samples, seed, threads=threads)
    b = sample_log_partition(law_b, run.beta, run.steps, samples, seed, threads=threads)
    res = stats.ks_2samp(a, b)
    return {"n": n, "T": T, "laws": [law_a.value, law_b.value], "samples": samples,
            "statistic": float(res.statistic), "pvalue": float(res.pvalue),
            "rejected": bool(res.pvalue < alpha), "alpha": alpha}


def _window_slice(n: int, T: float, delta: float):
    r = math.sqrt(n)
    lo0, hi0 = math.ceil(-r - 1e-9), math.floor(r + 1e-9)
    starts = [x for x in range(lo0, hi0 + 1) if x % 2 == 0]
    if not starts:
        raise DomainError("no admissible start in B_0")
    steps = int(round(T * n))
    c = delta * T
    window = Window(steps, (c - 1) * r, (c + 1) * r)
    return starts, steps, window


def infimum_over_starts(env, n: int, T: float, delta: float, starts=None) -> tuple[np.ndarray, np.ndarray]:
    """(starts, log W^x_{beta_n, Tn}(S_{Tn} in B_1)) for x in ``starts`` (default: even points of B_0)."""
    default, steps, window = _window_slice(n, T, delta)
    starts = default if starts is None else list(starts)
    sl = run_slices(env, beta_for_scale(n), steps, PartitionSlice.from_starts(starts), window)
    return np.asarray(starts), sl.log_total()


def infimum_field_estimate(n: int, T: float, delta: float, samples: int, eps: float = 0.5,
                           law="gaussian", seed: int = 0, threads: int = 1) -> dict:
    """Distribution of min over x in B_0 of the windowed partition function."""
    law = DisorderLaw.parse(law)
    seeds = child_seeds(seed, np.arange(samples))
    mins = np.array(parallel_map(
        lambda s: float(np.min(infimum_over_starts(EnvironmentField(int(s), law), n, T, delta)[1])),
        seeds, threads))
    level = T * (-1.0 / 6.0 - eps / 2.0)
    frac = float(np.mean(mins >= level))
    return {"n": n, "T": T, "delta": delta, "eps": eps, "samples": samples, "log_inf": mins,
            "exceed_level": level, "exceedance": frac,
            "exceedance_stderr": math.sqrt(frac * (1 - frac) / samples)}
