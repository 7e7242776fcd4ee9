"""Chaos decomposition of restricted partition functions on small instances.

Expanding prod_k (1 + (zeta_k - 1)) path by path gives
W(E) = sum_k Theta^(k), where Theta^(k) collects the degree-k products of the
centered weights zeta - 1. For the two-point law, Q-expectations are finite
sums over all sign configurations of the sites involved, which makes the
orthogonality, second-moment and hypercontractive-moment statements exactly
checkable.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .environment import DisorderLaw, DomainError, log_mgf
from .polymer import Escape, PathConstraint, enumerate_paths, partition_function

__all__ = [
    "MAX_EXPANSION_N",
    "MAX_ENUMERATION_SITES",
    "ChaosDecomposition",
    "SecondMomentDecomposition",
    "chaos_expand",
    "event_partition",
    "centered_moment",
    "centered_moment_quad",
    "second_moment_weight",
    "kappa_p",
    "kappa_p_sup",
    "orthogonality_exact",
    "second_moment_decompose",
    "moment_bound_check",
]

MAX_EXPANSION_N = 8
MAX_ENUMERATION_SITES = 24
_CONFIG_CHUNK = 1 << 13


@dataclass(frozen=True)
class ChaosDecomposition:
    N: int
    start: int
    components: np.ndarray  # Theta^(0..N)

    @property
    def total(self) -> float:
        return math.fsum(self.components)


@dataclass(frozen=True)
class SecondMomentDecomposition:
    N: int
    x: int
    y: int
    terms: np.ndarray  # Lambda^(0..N)
    direct: float  # Q[|W^x(E) - W^y(E)|^2] by enumeration

    @property
    def total(self) -> float:
        return math.fsum(self.terms)

    @property
    def relative_error(self) -> float:
        if self.direct == 0.0:
            return abs(self.total)
        return abs(self.total - self.direct) / abs(self.direct)

    def decay_ratios(self) -> np.ndarray:
        """k * Lambda^(k) / Lambda^(k-1) for k >= 2 (report only)."""
        lam = self.terms
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.arange(2, len(lam))
            return k * lam[2:] / lam[1:-1]


def _indicator(event, paths, t0):
    if event is None:
        return np.ones(len(paths), dtype=bool)
    return np.asarray(event.indicator(paths, t0), dtype=bool)


def _elementary_symmetric(a: np.ndarray) -> np.ndarray:
    """e_0..e_N of the last axis of ``a``; output has a new last axis N+1."""
    N = a.shape[-1]
    e = np.zeros(a.shape[:-1] + (N + 1,))
    e[..., 0] = 1.0
    for i in range(N):
        ai = a[..., i, None]
        e[..., 1:] = e[..., 1:] + e[..., :-1] * ai
    return e


def chaos_expand(env, beta: float, N: int, start: int = 0, event=None, t0: int = 0) -> ChaosDecomposition:
    """Theta^(0..N) for one environment by expanding over all 2**N paths."""
    if N > MAX_EXPANSION_N:
        raise DomainError(f"chaos expansion refused for N={N} > {MAX_EXPANSION_N}")
    if N < 1:
        raise DomainError("N must be >= 1")
    paths = enumerate_paths(N, start)
    lam = log_mgf(env.law, beta)
    centered = np.empty((len(paths), N))
    for i in range(1, N + 1):
        centered[:, i - 1] = np.exp(beta * np.asarray(env.eta(t0 + i, paths[:, i])) - lam) - 1.0
    ind = _indicator(event, paths, t0)
    e = _elementary_symmetric(centered)
    theta = np.array([math.fsum(col) for col in (e[ind] / 2 ** N).T]) if ind.any() else np.zeros(N + 1)
    return ChaosDecomposition(N, start, theta)


def event_partition(env, beta: float, N: int, start: int = 0, event=None, t0: int = 0) -> float:
    """W(E) from the transfer matrix (linear scale)."""
    if event is None:
        return math.exp(partition_function(env, beta, N, start, None, t0))
    if isinstance(event, Escape):
        full = math.exp(partition_function(env, beta, N, start, None, t0))
        stay = math.exp(partition_function(env, beta, N, start, event.inner, t0))
        return full - stay
    if isinstance(event, PathConstraint):
        return math.exp(partition_function(env, beta, N, start, event, t0))
    raise TypeError(f"unsupported event {event!r}")


# -- moments of the centered weight ---------------------------------------

def second_moment_weight(law, beta: float) -> float:
    """Q[(zeta - 1)^2] = exp(lambda(2 beta) - 2 lambda(beta)) - 1."""
    return math.expm1(log_mgf(law, 2 * beta) - 2 * log_mgf(law, beta))


def centered_moment_quad(law, beta: float, p: float) -> float:
    """Q[|zeta - 1|^p] by adaptive quadrature against the density of eta."""
    law = DisorderLaw.parse(law)
    if law is DisorderLaw.RADEMACHER:
        raise DomainError("rademacher has no density; use centered_moment")
    lam = log_mgf(law, beta)
    lo, hi = law.support
    # zeta = 1 at eta = lam / beta: split there so the kink is a node
    kink = lam / beta if beta else 0.0

    def g(t):
        dens = float(law.density(t))
        if dens == 0.0:
            return 0.0
        z = beta * t - lam
        if z == 0.0:
            return 0.0
        log_abs = z + math.log1p(-math.exp(-z)) if z > 30 else math.log(abs(math.expm1(z)))
        return math.exp(p * log_abs + math.log(dens))

    pieces = [(lo, kink), (kink, hi)] if lo < kink < hi else [(lo, hi)]
    total = 0.0
    for a, b in pieces:
        val, _ = integrate.quad(g, a, b, limit=200, epsabs=0.0, epsrel=1e-12)
        total += val
    return total


def centered_moment(law, beta: float, p: float) -> float:
    """Q[|zeta - 1|^p]: closed form where available, quadrature otherwise."""
    law = DisorderLaw.parse(law)
    lam = log_mgf(law, beta)
    if law is DisorderLaw.SHIFTED_EXPONENTIAL and p * beta >= 1.0:
        raise DomainError(f"Q[|zeta - 1|^{p}] is infinite for shifted_exponential at beta={beta}")
    if law is DisorderLaw.RADEMACHER:
        up, down = math.expm1(beta - lam), math.expm1(-beta - lam)
        return 0.5 * abs(up) ** p + 0.5 * abs(down) ** p
    if float(p).is_integer() and int(p) % 2 == 0:
        # E[(zeta - 1)^p] = sum_j C(p, j) (-1)^(p-j) E[zeta^j], E[zeta^j] = exp(lambda(j beta) - j lambda(beta))
        q = int(p)
        terms = [math.comb(q, j) * (-1) ** (q - j) * math.exp(log_mgf(law, j * beta) - j * lam)
                 for j in range(q + 1)]
        return math.fsum(terms)
    return centered_moment_quad(law, beta, p)


def kappa_p(law, beta: float, p: float) -> float:
    """2 sqrt(p-1) * ||zeta - 1||_p / ||zeta - 1||_2 at fixed beta."""
    if p < 2:
        raise DomainError("p must be >= 2")
    if beta == 0.0:
        raise DomainError("kappa_p undefined at beta = 0: zeta - 1 vanishes identically (0/0)")
    ratio = centered_moment(law, beta, p) ** (1.0 / p) / centered_moment(law, beta, 2) ** 0.5
    return 2.0 * math.sqrt(p - 1.0) * ratio


def kappa_p_sup(law, p: float, n_max: int = 10_000) -> dict:
    """sup over n <= n_max of kappa_p at beta_n = n**(-1/4)."""
    law = DisorderLaw.parse(law)
    best, arg = -math.inf, None
    for n in range(1, n_max + 1):
        try:
            k = kappa_p(law, n ** -0.25, p)
        except DomainError:
            continue
        if k > best:
            best, arg = k, n
    return {"law": law.value, "p": p, "n_max": n_max, "kappa": best, "argmax_n": arg}


# -- exact enumeration over the two-point law -------------------------------

def _disorder_sites(N: int, starts, t0: int):
    sites = []
    for t in range(1, N + 1):
        xs = set()
        for s in starts:
            xs.update(range(s - t, s + t + 1, 2))
        sites.extend((t0 + t, x) for x in sorted(xs))
    return {site: j for j, site in enumerate(sites)}


def _prepare(law, beta, N, starts, event, t0):
    law = DisorderLaw.parse(law)
    if law is not DisorderLaw.RADEMACHER:
        raise DomainError("exact enumeration requires the rademacher law")
    if N > MAX_EXPANSION_N:
        raise DomainError(f"N={N} exceeds the expansion cap {MAX_EXPANSION_N}")
    index = _disorder_sites(N, starts, t0)
    m = len(index)
    if m > MAX_ENUMERATION_SITES:
        raise DomainError(f"{m} disorder sites exceed the enumeration cap {MAX_ENUMERATION_SITES}")
    per_start = []
    for s in starts:
        paths = enumerate_paths(N, s)
        idx = np.array([[index[(t0 + i, p[i])] for i in range(1, N + 1)] for p in paths], dtype=np.int64)
        per_start.append((idx, _indicator(event, paths, t0)))
    lam = log_mgf(law, beta)
    return m, per_start, (math.expm1(-beta - lam), math.expm1(beta - lam))


def _enumerate(law, beta, N, starts, event, t0):
    """Yield (weight, [Theta(start) arrays of shape (C, N+1)]) per chunk."""
    m, per_start, (a_minus, a_plus) = _prepare(law, beta, N, starts, event, t0)
    total = 1 << m
    bits = np.arange(m, dtype=np.int64)
    for c0 in range(0, total, _CONFIG_CHUNK):
        codes = np.arange(c0, min(total, c0 + _CONFIG_CHUNK), dtype=np.int64)
        signs = (codes[:, None] >> bits) & 1
        centered = np.where(signs == 1, a_plus, a_minus)
        thetas = []
        for idx, ind in per_start:
            if not ind.any():
                thetas.append(np.zeros((len(codes), N + 1)))
                continue
            a = centered[:, idx[ind]]  # (C, P_E, N)
            thetas.append(_elementary_symmetric(a).sum(axis=1) / 2 ** N)
        yield 1.0 / total, thetas


def orthogonality_exact(beta: float, N: int, x: int, y: int, event=None, t0: int = 0,
                        law="rademacher") -> dict:
    """Exact Q[Theta^(k)(x) Theta^(l)(y)] and Q[Theta^(k)(x)] by enumeration."""
    if N > 4:
        raise DomainError("exact orthogonality is limited to N <= 4")
    cross = np.zeros((N + 1, N + 1))
    mean_x = np.zeros(N + 1)
    mean_y = np.zeros(N + 1)
    for w, (tx, ty) in _enumerate(law, beta, N, (x, y), event, t0):
        cross += w * (tx.T @ ty)
        mean_x += w * tx.sum(axis=0)
        mean_y += w * ty.sum(axis=0)
    off = cross[~np.eye(N + 1, dtype=bool)]
    return {
        "cross": cross,
        "mean_x": mean_x,
        "mean_y": mean_y,
        "max_offdiag": float(np.max(np.abs(off))) if off.size else 0.0,
        "max_mean_k_ge_1": float(np.max(np.abs(np.concatenate([mean_x[1:], mean_y[1:]])))),
        "diag_nonnegative": bool(np.all(np.diag(cross) >= -1e-15)) if x == y else None,
    }


def _lambda_terms(law, beta, N, x, y, event, t0) -> np.ndarray:
    """Lambda^(k): sum over k-subsets of times and site tuples of
    Q[(zeta-1)^2]^k (P^x(S_A = sites, E) - P^y(S_A = sites, E))^2."""
    v = second_moment_weight(law, beta)
    probs = []
    for s in (x, y):
        paths = enumerate_paths(N, s)
        ind = _indicator(event, paths, t0)
        probs.append(paths[ind][:, 1:])
    terms = np.zeros(N + 1)
    w = 1.0 / 2 ** N
    for k in range(N + 1):
        acc = []
        for A in itertools.combinations(range(N), k):
            cols = list(A)
            table: dict[tuple, list[float]] = {}
            for side, px in enumerate(probs):
                for row in map(tuple, px[:, cols]):
                    table.setdefault(row, [0.0, 0.0])[side] += w
            acc.extend((a - b) ** 2 for a, b in table.values())
        terms[k] = v ** k * math.fsum(acc)
    return terms


def _difference_moments(law, beta, N, x, y, event, t0, powers):
    out = dict.fromkeys(powers, 0.0)
    parts = {q: [] for q in powers}
    for w, (tx, ty) in _enumerate(law, beta, N, (x, y), event, t0):
        diff = np.abs(tx.sum(axis=1) - ty.sum(axis=1))
        for q in powers:
            parts[q].append(w * math.fsum(diff ** q))
    for q in powers:
        out[q] = math.fsum(parts[q])
    return out


def second_moment_decompose(beta: float, N: int, x: int, y: int, event=None, t0: int = 0,
                            law="rademacher") -> SecondMomentDecomposition:
    """Lambda^(0..N)(x, y) and the enumerated Q[|W^x(E) - W^y(E)|^2]."""
    terms = _lambda_terms(law, beta, N, x, y, event, t0)
    direct = _difference_moments(law, beta, N, x, y, event, t0, (2,))[2]
    return SecondMomentDecomposition(N, x, y, terms, direct)


def moment_bound_check(beta: float, N: int, x: int, y: int, p: float, event=None, t0: int = 0,
                       law="rademacher") -> dict:
    """Q[|W^x(E) - W^y(E)|^p] <= (sum_k kappa_p^k sqrt(Lambda^(k)))^p, exactly."""
    dec = second_moment_decompose(beta, N, x, y, event, t0, law)
    lhs = _difference_moments(law, beta, N, x, y, event, t0, (p,))[p]
    kap = kappa_p(law, beta, p) if beta != 0.0 else 0.0
    rhs = math.fsum(kap ** k * math.sqrt(max(t, 0.0)) for k, t in enumerate(dec.terms)) ** p
    return {"N": N, "x": x, "y": y, "p": p, "beta": beta, "kappa_p": kap,
            "lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs * (1 + 1e-12) + 1e-300)}
