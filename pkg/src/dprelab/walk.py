"""Exact simple-random-walk computations: pmfs, local-limit envelope, exit
probabilities, reflection coupling, meeting times, and a numerical
Garsia-Rodemich-Rumsey check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .environment import DomainError
from .polymer import enumerate_paths

__all__ = [
    "srw_pmf",
    "srw_pmf_row",
    "llt_envelope_check",
    "exit_probability_exact",
    "exit_probability_enumerated",
    "exit_rate_estimate",
    "CoupledWalkPair",
    "reflection_coupling_sample",
    "reflect_paths",
    "coupling_marginal_exact",
    "coupling_marginal_chi2",
    "meeting_time_tail",
    "meeting_time_window",
    "meeting_time_identity_check",
    "PiecewiseLinear",
    "random_piecewise_linear",
    "grr_integral",
    "grr_bound",
    "grr_bound_check",
]

DP_CELL_LIMIT = 10 ** 8


def srw_pmf(i: int, d: int) -> float:
    """P(S_i = d) for the walk from 0, correctly rounded from exact integers."""
    if i < 0:
        raise DomainError("i must be >= 0")
    if abs(d) > i or (i + d) % 2:
        return 0.0
    return math.comb(i, (i + d) // 2) / (1 << i)


def srw_pmf_row(i: int) -> tuple[np.ndarray, np.ndarray]:
    """(d, P(S_i = d)) over reachable displacements, via log-gamma."""
    d = np.arange(-i, i + 1, 2)
    k = (i + d) // 2
    logp = special.gammaln(i + 1) - special.gammaln(k + 1) - special.gammaln(i - k + 1) - i * math.log(2)
    return d, np.exp(logp)


def llt_envelope_check(i_max: int) -> dict:
    """Smallest c with max_d P(S_i = d) <= c / sqrt(i) for 2 <= i <= i_max."""
    if i_max < 2:
        raise DomainError("i_max must be >= 2")
    scaled = []
    for i in range(2, i_max + 1):
        # the mode is at d = 0 or d = 1 depending on parity
        scaled.append(srw_pmf(i, i % 2) * math.sqrt(i))
    scaled = np.array(scaled)
    c = float(scaled.max())
    return {
        "i_max": i_max,
        "c": c,
        "argmax_i": int(np.argmax(scaled)) + 2,
        "plateau": float(scaled[-1]),
        "reference": math.sqrt(2 / math.pi),
        "c_below_one": c < 1.0,
    }


def _check_dp_size(N: int, a: int) -> None:
    if N * (2 * a + 1) > DP_CELL_LIMIT:
        raise DomainError(f"exit DP with N={N}, a={a} exceeds {DP_CELL_LIMIT} cells")


def exit_probability_exact(N: int, a: int) -> float:
    """P(max_{i <= N} |S_i| >= a) by a forward DP on |x| <= a - 1.

    Mass stepping onto +-a is accumulated directly, so tiny probabilities are
    not lost to cancellation in 1 - P(stay).
    """
    if a <= 0:
        return 1.0
    if a > N:
        return 0.0
    _check_dp_size(N, a)
    width = 2 * a - 1
    p = np.zeros(width)
    p[a - 1] = 1.0
    absorbed = []
    for _ in range(N):
        absorbed.append(0.5 * (p[0] + p[-1]))
        q = np.zeros(width)
        q[1:] += 0.5 * p[:-1]
        q[:-1] += 0.5 * p[1:]
        p = q
    return min(1.0, math.fsum(absorbed))


def exit_probability_enumerated(N: int, a: int) -> float:
    """Same quantity by listing all 2**N paths (N <= 20)."""
    paths = enumerate_paths(N)
    hit = np.any(np.abs(paths) >= a, axis=1)
    return int(hit.sum()) / 2 ** N


def exit_rate_estimate(T: float, n: int, L: float) -> dict:
    """I_hat = -(1/T) log P(exit) with N = round(T n) and a = floor(L T sqrt(n))."""
    N = int(round(T * n))
    a = int(math.floor(L * T * math.sqrt(n) + 1e-9))
    p = exit_probability_exact(N, a)
    rate = math.inf if p == 0.0 else -math.log(p) / T
    return {"T": T, "n": n, "L": L, "N": N, "a": a, "probability": p, "rate": rate}


# -- reflection coupling ----------------------------------------------------

@dataclass
class CoupledWalkPair:
    start_x: int
    start_y: int
    S: np.ndarray
    S_tilde: np.ndarray
    tau: int | None = field(default=None)

    def satisfies_reflection(self) -> bool:
        tau = len(self.S) if self.tau is None else self.tau
        before = np.all(self.S_tilde[: tau + 1] == self.start_x + self.start_y - self.S[: tau + 1])
        after = np.all(self.S_tilde[tau:] == self.S[tau:])
        return bool(before and after)


def _check_parity(x: int, y: int) -> None:
    if (x - y) % 2:
        raise DomainError("reflection coupling needs x and y of equal parity")


def reflect_paths(paths: np.ndarray, x: int, y: int) -> tuple[np.ndarray, np.ndarray]:
    """Mirror paths of S (from x) about (x+y)/2 until they hit it.

    Returns (S_tilde, tau) with tau = -1 where the midpoint is never reached.
    """
    mid = (x + y) // 2
    hit = paths == mid
    reached = hit.any(axis=1)
    tau = np.where(reached, hit.argmax(axis=1), -1)
    times = np.arange(paths.shape[1])
    before = (times[None, :] <= tau[:, None]) | (~reached)[:, None]
    s_tilde = np.where(before, x + y - paths, paths)
    return s_tilde, tau


def reflection_coupling_sample(x: int, y: int, N: int, rng: np.random.Generator) -> CoupledWalkPair:
    _check_parity(x, y)
    steps = rng.choice(np.array([-1, 1]), size=N)
    S = np.concatenate([[x], x + np.cumsum(steps)])
    s_tilde, tau = reflect_paths(S[None, :], x, y)
    return CoupledWalkPair(x, y, S, s_tilde[0], None if tau[0] < 0 else int(tau[0]))


def coupling_marginal_exact(x: int, y: int, N: int) -> dict:
    """Total variation between the law of S_tilde and the walk from y, by
    enumerating all 2**N paths of S (N <= 14)."""
    _check_parity(x, y)
    if N > 14:
        raise DomainError("exact coupling check is limited to N <= 14")
    paths = enumerate_paths(N, x)
    s_tilde, _ = reflect_paths(paths, x, y)
    # encode each S_tilde path by its step bits
    steps = (np.diff(s_tilde, axis=1) + 1) // 2
    if s_tilde.size and not np.all(s_tilde[:, 0] == y):
        return {"N": N, "tv": 1.0}
    codes = (steps << np.arange(N)).sum(axis=1) if N else np.zeros(len(paths), dtype=np.int64)
    counts = np.bincount(codes, minlength=2 ** N) / 2 ** N
    tv = 0.5 * float(np.abs(counts - 2.0 ** -N).sum())
    return {"N": N, "x": x, "y": y, "tv": tv}


def coupling_marginal_chi2(x: int, y: int, N: int, samples: int, seed: int) -> dict:
    """Chi-squared test of the endpoint law of S_tilde against the walk from y."""
    _check_parity(x, y)
    rng = np.random.default_rng(seed)
    steps = rng.integers(0, 2, size=(samples, N), dtype=np.int8) * 2 - 1
    paths = np.empty((samples, N + 1), dtype=np.int64)
    paths[:, 0] = x
    paths[:, 1:] = x + np.cumsum(steps, axis=1)
    s_tilde, _ = reflect_paths(paths, x, y)
    end = s_tilde[:, -1] - y
    d, p = srw_pmf_row(N)
    observed = np.array([np.count_nonzero(end == v) for v in d], dtype=float)
    expected = p * samples
    # pool sparse tails so every cell expects at least 5
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] < 5:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    exp *= obs.sum() / exp.sum()
    res = stats.chisquare(obs, exp)
    return {"N": N, "samples": samples, "statistic": float(res.statistic),
            "pvalue": float(res.pvalue), "cells": len(obs)}


# -- meeting time -----------------------------------------------------------

def meeting_time_tail(x: int, y: int, i: int) -> float:
    """P(tau_{x,y} > i), tau = first time the walk from x hits (x+y)/2.

    First-passage DP: mass is killed on reaching the midpoint.
    """
    _check_parity(x, y)
    d = abs(x - y) // 2
    if d == 0:
        return 0.0
    if i < d:
        return 1.0
    # walk from 0 towards the barrier at d on states lo..d-1; lo = -i - 1 is
    # out of reach, so nothing is lost at the bottom
    lo = -i - 1
    width = d - lo
    p = np.zeros(width)
    p[-lo] = 1.0
    for _ in range(i):
        q = np.zeros(width)
        q[1:] += 0.5 * p[:-1]
        q[:-1] += 0.5 * p[1:]
        p = q
    return math.fsum(p)


def meeting_time_window(x: int, y: int, i: int) -> float:
    """P_0(-d < S_i <= d) with d = |x - y| / 2, summed from exact pmfs."""
    _check_parity(x, y)
    d = abs(x - y) // 2
    return math.fsum(srw_pmf(i, k) for k in range(-d + 1, d + 1))


def meeting_time_identity_check(i_max: int = 1000, dist_max: int = 40) -> dict:
    """Compare tail and window for all i <= i_max and even |x - y| <= dist_max.

    One first-passage DP per distance runs alongside exact pmf rows. Also
    reports the fitted constant in P(tau > i) <= C |x - y| / sqrt(i).
    """
    dists = np.arange(2, dist_max + 1, 2)
    half = dists // 2
    lo = -i_max - 1
    hi = int(half.max()) - 1
    width = hi - lo + 1
    p = np.zeros((len(dists), width))
    p[:, -lo] = 1.0
    # barrier column per distance; everything above it stays zero
    barrier = half - lo
    above = np.arange(width)[None, :] >= barrier[:, None]
    worst, c_fit, monotone = 0.0, 0.0, True
    prev = np.ones(len(dists))
    for i in range(i_max + 1):
        if i > 0:
            q = np.zeros_like(p)
            q[:, 1:] += 0.5 * p[:, :-1]
            q[:, :-1] += 0.5 * p[:, 1:]
            q[above] = 0.0
            p = q
        tail = p.sum(axis=1)
        pmf = {k: srw_pmf(i, k) for k in range(-int(half.max()) + 1, int(half.max()) + 1)}
        window = np.array([math.fsum(pmf[k] for k in range(-d + 1, d + 1)) for d in half])
        worst = max(worst, float(np.max(np.abs(tail - window))))
        monotone &= bool(np.all(tail <= prev + 1e-15))
        prev = tail
        if i > 0:
            c_fit = max(c_fit, float(np.max(tail * math.sqrt(i) / dists)))
    return {"i_max": i_max, "dist_max": dist_max, "max_abs_diff": worst,
            "monotone": bool(monotone), "C4_fit": c_fit}


# -- Garsia-Rodemich-Rumsey -------------------------------------------------

@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function on [-1, 1] through (knots, values)."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.knots, self.values)


def random_piecewise_linear(rng: np.random.Generator, max_knots: int = 8, scale: float = 1.0) -> PiecewiseLinear:
    k = int(rng.integers(0, max_knots - 1))
    inner = np.sort(rng.uniform(-1, 1, size=k))
    knots = np.concatenate([[-1.0], inner, [1.0]])
    values = scale * rng.standard_normal(len(knots))
    return PiecewiseLinear(knots, values)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def grr_integral(f: PiecewiseLinear, p: float, q: float) -> float:
    """int_{[-1,1]^2} (|f(t) - f(s)| / |t - s|^q)^p ds dt.

    Diagonal cells are integrated in closed form (f is linear there);
    off-diagonal cell pairs by tensor Gauss-Legendre.
    """
    kn = np.asarray(f.knots, dtype=float)
    slopes = np.diff(f.values) / np.diff(kn)
    r = p * (1.0 - q)
    if r <= -1:
        return math.inf
    total = 0.0
    nodes = []
    for a, b in zip(kn[:-1], kn[1:]):
        h = b - a
        nodes.append((a + 0.5 * h * (_GL_X + 1), 0.5 * h * _GL_W))
    for i, (a, b) in enumerate(zip(kn[:-1], kn[1:])):
        h = b - a
        total += abs(slopes[i]) ** p * 2.0 * h ** (r + 2) / ((r + 1) * (r + 2))
        for j in range(i + 1, len(nodes)):
            t, wt = nodes[i]
            s, ws = nodes[j]
            diff = np.abs(f(t)[:, None] - f(s)[None, :])
            dist = np.abs(t[:, None] - s[None, :])
            integrand = (diff / dist ** q) ** p
            total += 2.0 * float(wt @ integrand @ ws)
    return total


def grr_bound(integral: float, dist: float, p: float, q: float, lam: float = 1.0) -> float:
    """Right-hand side of the |x|^p, u^q specialization of the GRR lemma."""
    if p * q <= 2:
        raise DomainError("need p*q > 2")
    expo = q - 2.0 / p
    const = 2.0 ** (2.0 / p + q + 3.0) / (lam ** (1.0 / p) * expo)
    return const * dist ** expo * integral ** (1.0 / p)


def grr_bound_check(functions, p: float, q: float, pairs: int = 1000, seed: int = 0,
                    lam: float = 1.0) -> dict:
    """Check |f(x) - f(y)| <= GRR bound at random pairs for each function."""
    if p < 1 or q <= 0 or p * q <= 2:
        raise DomainError("need p >= 1, q > 0, p*q > 2")
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    skipped = 0
    for f in functions:
        gamma = grr_integral(f, p, q)
        if not math.isfinite(gamma):
            skipped += 1
            continue
        x = rng.uniform(-1, 1, size=pairs)
        y = rng.uniform(-1, 1, size=pairs)
        lhs = np.abs(f(x) - f(y))
        rhs = np.array([grr_bound(gamma, abs(a - b), p, q, lam) for a, b in zip(x, y)])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        violations += int(np.count_nonzero(lhs > rhs * (1 + 1e-12)))
        worst = max(worst, float(ratio.max()))
    return {"p": p, "q": q, "functions": len(functions), "violations": violations,
            "worst_ratio": worst, "skipped": skipped, "lambda": lam}
