"""Experiment drivers: configuration, cost guard, CSV output and manifest.

Configuration is a JSON object. Top-level scalars:

    experiment   one of beta4-scan, good-bonds, percolation, continuum-constant, verify
    law          disorder law name (default "gaussian")
    samples      environments per cell
    seed         master seed (u64)
    out          output directory
    threads      worker threads (does not change any output byte)
    max_cost     refusal ceiling on estimated slice-cell updates (default 1e10)

Nested sections:

    grid         beta, N, N_factor, T, delta, L, eps, n, horizon, p
                 (lists where a sweep makes sense; see each runner)
    percolation  mode ("bernoulli" | "good-bonds"), trials, bisect, target,
                 bisect_tol, bisect_lo, bisect_hi
    verify       checks (list of names, default all), timeout_s, fault

Every runner writes its CSV files with fixed column order plus
``manifest.json`` listing each file's sha256.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import stats

from . import chaos, coarse_grain as cg, continuum, polymer, walk
from ._parallel import parallel_map
from .environment import DisorderLaw, DomainError, EnvironmentField, child_seed, child_seeds, hash_uniform

__all__ = [
    "ConfigError",
    "CostRefusal",
    "ExperimentConfig",
    "ResultManifest",
    "DEFAULT_MAX_COST",
    "load_config",
    "estimate_cost",
    "run_beta4_scan",
    "run_good_bond_surface",
    "run_percolation_survival",
    "run_continuum_constant",
    "run_verification_suite",
    "wilson_interval",
    "RUNNERS",
]

DEFAULT_MAX_COST = 1e10
EXPERIMENTS = ("beta4-scan", "good-bonds", "percolation", "continuum-constant", "verify")


class ConfigError(ValueError):
    """Malformed or out-of-envelope configuration (exit status 2)."""


class CostRefusal(RuntimeError):
    """Estimated work exceeds the configured ceiling (exit status 2)."""

    def __init__(self, estimate: float, ceiling: float):
        super().__init__(f"estimated {estimate:.3e} slice-cell updates exceeds ceiling {ceiling:.3e}")
        self.estimate = estimate
        self.ceiling = ceiling


# -- configuration ------------------------------------------------------------

@dataclass
class Grid:
    beta: list = field(default_factory=lambda: [0.7, 0.55, 0.4])
    N: list | None = None  # explicit N per beta; default round(N_factor * beta**-4)
    N_factor: float = 50.0
    T: list = field(default_factory=lambda: [4.0, 8.0])
    delta: float = 0.2
    L: float = 4.0
    eps: list = field(default_factory=lambda: [0.5])
    n: int = 64
    horizon: int = 200
    p: list = field(default_factory=lambda: [0.3, 0.5, 0.65, 0.8, 1.0])


@dataclass
class PercolationSettings:
    mode: str = "bernoulli"
    trials: int = 1000
    bisect: bool = True
    target: float = 0.5
    bisect_tol: float = 1e-3
    bisect_lo: float = 0.5
    bisect_hi: float = 0.8


@dataclass
class VerifySettings:
    checks: list | None = None
    timeout_s: float = 300.0
    fault: str | None = None


@dataclass
class ExperimentConfig:
    experiment: str = "beta4-scan"
    law: str = "gaussian"
    samples: int = 200
    seed: int = 0
    out: str = "results"
    threads: int = 1
    max_cost: float = DEFAULT_MAX_COST
    grid: Grid = field(default_factory=Grid)
    percolation: PercolationSettings = field(default_factory=PercolationSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        try:
            self.law = DisorderLaw.parse(self.law).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if int(self.samples) < 2:
            raise ConfigError("samples must be >= 2")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        self.seed = int(self.seed) & (2 ** 64 - 1)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        sections = {"grid": Grid, "percolation": PercolationSettings, "verify": VerifySettings}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                sub_known = {f.name for f in dataclasses.fields(sections[key])}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
                kwargs[key] = sections[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def statistics_hash(self) -> str:
        """sha256 of the canonical config, ignoring fields that cannot change results."""
        d = self.to_dict()
        d.pop("threads")
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str | os.PathLike | None, experiment: str, overrides: dict | None = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if data.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {data['experiment']!r}, not {experiment!r}")
    data["experiment"] = experiment
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return ExperimentConfig.from_dict(data)


# -- manifest -------------------------------------------------------------------

def _version() -> str:
    try:
        return metadata.version("dprelab")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class ResultManifest:
    experiment: str
    config_hash: str
    version: str
    started: float
    finished: float = 0.0
    files: dict = field(default_factory=dict)
    status: str = "ok"
    config: dict = field(default_factory=dict)

    def add(self, path: Path) -> None:
        self.files[path.name] = _sha256(path)

    def verify(self, directory: Path) -> bool:
        return all((directory / name).is_file() and _sha256(directory / name) == digest
                   for name, digest in self.files.items())

    def write(self, directory: Path) -> Path:
        self.finished = time.time()
        body = {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "version": self.version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started_unix": self.started,
            "finished_unix": self.finished,
            "wall_clock_s": self.finished - self.started,
            "status": self.status,
            "files": dict(sorted(self.files.items())),
            "config": self.config,
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, directory: Path) -> "ResultManifest":
        d = json.loads((Path(directory) / "manifest.json").read_text())
        return cls(d["experiment"], d["config_hash"], d["version"], d["started_unix"],
                   d["finished_unix"], d["files"], d["status"], d.get("config", {}))


class _Output:
    def __init__(self, cfg: ExperimentConfig):
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = ResultManifest(cfg.experiment, cfg.statistics_hash(), _version(), time.time(),
                                       config=cfg.to_dict())

    def csv(self, name: str, header: str, rows: list[str]) -> Path:
        path = self.dir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(header + "\n")
            for r in rows:
                fh.write(r + "\n")
        self.manifest.add(path)
        return path

    def json(self, name: str, payload: Any) -> Path:
        path = self.dir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.manifest.add(path)
        return path

    def close(self, status: str = "ok") -> Path:
        self.manifest.status = status
        return self.manifest.write(self.dir)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


# -- cost model -------------------------------------------------------------------

def _beta4_cells(cfg: ExperimentConfig) -> list[tuple[float, int]]:
    g = cfg.grid
    betas = [float(b) for b in g.beta]
    for b in betas:
        if not 0.0 < b <= 0.7:
            raise ConfigError(f"beta {b} outside (0, 0.7]")
    if g.N is not None:
        if len(g.N) != len(betas):
            raise ConfigError("grid.N must list one N per beta")
        Ns = [int(n) for n in g.N]
    else:
        Ns = [int(round(g.N_factor * b ** -4)) for b in betas]
    for b, N in zip(betas, Ns):
        if N < 50 * b ** -4 - 0.5:
            raise ConfigError(f"N={N} below 50 * beta**-4 for beta={b}")
    return list(zip(betas, Ns))


def _bond_cost(geom: cg.CGGeometry) -> float:
    starts = len(cg.segment_points(geom, 0).points)
    return geom.block * (geom.half_width + 1) * max(starts, 1)


def estimate_cost(cfg: ExperimentConfig) -> float:
    """Estimated slice-cell updates (site x row x step) for the whole run."""
    g = cfg.grid
    s = cfg.samples
    if cfg.experiment == "beta4-scan":
        return float(sum(s * N * (N + 2) / 2 for _, N in _beta4_cells(cfg)))
    if cfg.experiment == "good-bonds":
        total = 0.0
        for b in g.beta:
            for T in g.T:
                geom = cg.CGGeometry(float(b), float(T), float(g.delta), float(g.L))
                total += s * _bond_cost(geom) * (len(g.eps) + 4)
        return total
    if cfg.experiment == "percolation":
        if cfg.percolation.mode == "bernoulli":
            return float(cfg.percolation.trials * g.horizon ** 2 * (len(g.p) + 40))
        total = 0.0
        for b in g.beta:
            for T in g.T:
                geom = cg.CGGeometry(float(b), float(T), float(g.delta), float(g.L))
                total += cfg.percolation.trials * len(g.eps) * _bond_cost(geom) * g.horizon * (g.horizon + 1)
        return total
    if cfg.experiment == "continuum-constant":
        return float(sum(2 * s * (T * g.n) ** 2 / 2 for T in g.T))
    return 0.0


def _guard(cfg: ExperimentConfig) -> None:
    est = estimate_cost(cfg)
    if est > cfg.max_cost:
        raise CostRefusal(est, cfg.max_cost)


# -- beta^4 scan --------------------------------------------------------------------

BETA4_HEADER = "beta,N,mean,stderr,ratio"


def run_beta4_scan(cfg: ExperimentConfig) -> dict:
    """F_N estimates and F_N / beta^4 over the beta grid.

    Every cell uses the master seed directly, so row i matches
    ``polymer.free_energy_estimate(law, beta_i, N_i, samples, seed)``.
    """
    cells = _beta4_cells(cfg)
    _guard(cfg)
    out = _Output(cfg)
    rows, results = [], []
    for beta, N in cells:
        est = polymer.free_energy_estimate(cfg.law, beta, N, cfg.samples, cfg.seed, threads=cfg.threads)
        rows.append(f"{beta!r},{N},{est.mean!r},{est.stderr!r},{est.ratio!r}")
        results.append({"beta": beta, "N": N, "mean": est.mean, "stderr": est.stderr, "ratio": est.ratio})
    path = out.csv("beta4_scan.csv", BETA4_HEADER, rows)
    out.close()
    return {"rows": results, "csv": str(path)}


# -- good bonds ----------------------------------------------------------------------

GOOD_BONDS_HEADER = "beta,T,eps,density,stderr"


def _good_bond_flags(law, geom: cg.CGGeometry, eps_list, samples: int, seed: int, threads: int) -> np.ndarray:
    """(samples, len(eps_list)) 0/1 goodness of <(0,0),(1,1)>; one transfer sweep per environment."""
    seeds = child_seeds(seed, np.arange(samples))
    thresholds = np.array([geom.T * (cg.CONTINUUM_FREE_ENERGY - e) for e in eps_list])

    def one(s):
        _, logw = cg.bond_partitions(EnvironmentField(int(s), law), geom, (0, 0, 1))
        m = float(np.min(logw)) if len(logw) else -math.inf
        return m >= thresholds

    return np.array(parallel_map(one, seeds, threads), dtype=float)


def run_good_bond_surface(cfg: ExperimentConfig) -> dict:
    g = cfg.grid
    for e in g.eps:
        if e <= 0:
            raise ConfigError("eps must be > 0")
    try:
        geoms = {(float(b), float(T)): cg.CGGeometry(float(b), float(T), float(g.delta), float(g.L))
                 for b in g.beta for T in g.T}
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    _guard(cfg)
    out = _Output(cfg)
    rows, cells = [], []
    for (beta, T), geom in geoms.items():
        flags = _good_bond_flags(cfg.law, geom, g.eps, cfg.samples, cfg.seed, cfg.threads)
        for k, eps in enumerate(g.eps):
            d = float(flags[:, k].mean())
            se = float(flags[:, k].std(ddof=1) / math.sqrt(cfg.samples))
            rows.append(f"{beta!r},{T!r},{float(eps)!r},{d!r},{se!r}")
            cells.append({"beta": beta, "T": T, "eps": float(eps), "density": d, "stderr": se})
    path = out.csv("good_bonds.csv", GOOD_BONDS_HEADER, rows)

    k = math.ceil(4 * g.L / g.delta)
    lss = cg.lss_threshold(k)
    lss_report = {"k": k, "threshold": lss, "delta": g.delta, "L": g.L,
                  "cells_above": [c for c in cells if c["density"] > lss]}
    b0, T0 = min(geoms, key=lambda bt: (bt[0], bt[1]))
    dep = cg.dependence_structure_check(cfg.law, geoms[(b0, T0)], float(g.eps[0]),
                                        cfg.samples, cfg.seed, cfg.threads)
    dep.update({"beta": b0, "T": T0, "eps": float(g.eps[0])})
    out.json("good_bonds_report.json", {"lss": lss_report, "dependence": dep,
                                         "monotone_in_beta": _monotone_report(cells)})
    out.close()
    return {"rows": cells, "csv": str(path), "lss": lss_report, "dependence": dep}


def _monotone_report(cells: list[dict], sigmas: float = 3.0) -> list[dict]:
    """Each (T, eps): consecutive beta pairs, larger beta first; smaller beta should not lose density."""
    out = []
    keys = sorted({(c["T"], c["eps"]) for c in cells})
    for T, eps in keys:
        col = sorted((c for c in cells if c["T"] == T and c["eps"] == eps), key=lambda c: -c["beta"])
        for hi, lo in zip(col, col[1:]):
            slack = sigmas * math.hypot(hi["stderr"], lo["stderr"])
            out.append({"T": T, "eps": eps, "beta_hi": hi["beta"], "beta_lo": lo["beta"],
                        "density_hi": hi["density"], "density_lo": lo["density"],
                        "slack": slack, "holds": lo["density"] >= hi["density"] - slack})
    return out


# -- percolation --------------------------------------------------------------------

PERCOLATION_HEADER = "mode,p,beta,T,delta,L,eps,horizon,trials,survival,ci_low,ci_high"


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


_PERC_CHUNK = 64


def bernoulli_survival(p: float, horizon: int, trials: int, seed: int, threads: int = 1) -> int:
    """Number of surviving trials. Bond uniforms depend only on (seed, trial),
    so different p reuse the same uniforms (monotone coupling in p)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    bounds = [(a, min(a + _PERC_CHUNK, trials)) for a in range(0, trials, _PERC_CHUNK)]

    def work(b):
        seeds = child_seeds(seed, np.arange(b[0], b[1]))
        up, down = [], []
        for I in range(horizon):
            xs = np.arange(I + 1)
            up.append(hash_uniform(seeds, 2 * I + 1, xs) < p)
            down.append(hash_uniform(seeds, 2 * I + 2, xs) < p)
        return int(cg.survives(cg.BondStates(up, down), horizon).sum())

    return sum(parallel_map(work, bounds, threads))


def bisect_survival(target: float, horizon: int, trials: int, seed: int, lo: float = 0.5,
                    hi: float = 0.8, tol: float = 1e-3, threads: int = 1) -> dict:
    """p at which the coupled survival frequency crosses ``target``."""
    f = lambda p: bernoulli_survival(p, horizon, trials, seed, threads) / trials
    flo, fhi = f(lo), f(hi)
    if not flo < target <= fhi:
        raise DomainError(f"target {target} not bracketed: f({lo})={flo}, f({hi})={fhi}")
    steps = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) >= target:
            hi = mid
        else:
            lo = mid
        steps += 1
    return {"target": target, "horizon": horizon, "trials": trials, "p_lo": lo, "p_hi": hi,
            "estimate": 0.5 * (lo + hi), "steps": steps}


def good_bond_survival(law, geom: cg.CGGeometry, eps: float, horizon: int, trials: int, seed: int,
                       threads: int = 1) -> int:
    seeds = child_seeds(seed, np.arange(trials))

    def one(s):
        st = cg.good_bond_states(EnvironmentField(int(s), law), geom, eps, horizon)
        return bool(cg.survives(st, horizon))

    return int(sum(parallel_map(one, seeds, threads)))


def run_percolation_survival(cfg: ExperimentConfig) -> dict:
    g, pc = cfg.grid, cfg.percolation
    if pc.mode not in ("bernoulli", "good-bonds"):
        raise ConfigError(f"unknown percolation mode {pc.mode!r}")
    if pc.trials < 1 or g.horizon < 1:
        raise ConfigError("trials and horizon must be >= 1")
    if pc.mode == "good-bonds" and g.horizon > 64:
        raise ConfigError("good-bond percolation requires horizon <= 64")
    _guard(cfg)
    out = _Output(cfg)
    rows, results = [], []
    report: dict = {}
    if pc.mode == "bernoulli":
        for i, p in enumerate(g.p):
            k = bernoulli_survival(float(p), g.horizon, pc.trials, cfg.seed, cfg.threads)
            lo, hi = wilson_interval(k, pc.trials)
            freq = k / pc.trials
            rows.append(f"bernoulli,{float(p)!r},,,,,,{g.horizon},{pc.trials},{freq!r},{lo!r},{hi!r}")
            results.append({"p": float(p), "survival": freq, "ci": (lo, hi)})
        if pc.bisect:
            report["bisection"] = bisect_survival(pc.target, g.horizon, pc.trials, cfg.seed,
                                                  pc.bisect_lo, pc.bisect_hi, pc.bisect_tol, cfg.threads)
    else:
        for b in g.beta:
            for T in g.T:
                geom = cg.CGGeometry(float(b), float(T), float(g.delta), float(g.L))
                for eps in g.eps:
                    k = good_bond_survival(cfg.law, geom, float(eps), g.horizon, pc.trials, cfg.seed, cfg.threads)
                    lo, hi = wilson_interval(k, pc.trials)
                    freq = k / pc.trials
                    rows.append(f"good-bonds,,{float(b)!r},{float(T)!r},{float(g.delta)!r},{float(g.L)!r},"
                                f"{float(eps)!r},{g.horizon},{pc.trials},{freq!r},{lo!r},{hi!r}")
                    results.append({"beta": float(b), "T": float(T), "eps": float(eps),
                                    "survival": freq, "ci": (lo, hi)})
    path = out.csv("percolation.csv", PERCOLATION_HEADER, rows)
    if report:
        out.json("percolation_report.json", report)
    out.close()
    return {"rows": results, "csv": str(path), **report}


# -- continuum constant ------------------------------------------------------------

def run_continuum_constant(cfg: ExperimentConfig) -> dict:
    g = cfg.grid
    if g.n < 1 or any(T * g.n < 2 for T in g.T):
        raise ConfigError("need n >= 1 and T n >= 2")
    _guard(cfg)
    out = _Output(cfg)
    est = continuum.continuum_constant_estimate(g.n, g.T, cfg.samples, cfg.law, cfg.seed, cfg.threads)
    path = out.csv("continuum_constant.csv", est.CSV_HEADER, est.csv_rows())
    out.close()
    return {"estimate": est, "csv": str(path)}


# -- verification suite --------------------------------------------------------------

@dataclass(frozen=True)
class _Check:
    name: str
    anchor: str
    fn: Callable[[dict], dict]


class _ImpureField(EnvironmentField):
    """Fault injection: every query returns fresh disorder, breaking the
    assumption that an environment is a fixed function of (n, x)."""

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "_calls", [0])

    def eta_rows(self, n, xs):
        self._calls[0] += 1
        seeds = np.array([child_seed(self.seed, self._calls[0])], dtype=np.uint64)
        return self.law.from_uniform(hash_uniform(seeds, n, xs))


def _env_factory(ctx):
    if ctx.get("fault") == "impure_environment":
        return _ImpureField
    return EnvironmentField


def _check_chaos_completeness(ctx):
    worst = 0.0
    make = _env_factory(ctx)
    for li, law in enumerate(DisorderLaw):
        seeds = child_seeds(ctx["seed"], np.arange(100 * li, 100 * li + 5))
        for N in range(1, 7):
            for s in seeds:
                env = make(int(s), law)
                dec = chaos.chaos_expand(env, 0.5, N)
                w = chaos.event_partition(env, 0.5, N)
                worst = max(worst, abs(dec.total - w) / w)
    return {"passed": worst < 1e-12, "max_relative_error": worst}


def _check_orthogonality(ctx):
    r = chaos.orthogonality_exact(0.5, 3, 0, 2)
    worst = max(r["max_offdiag"], r["max_mean_k_ge_1"])
    return {"passed": worst < 1e-12, "max_offdiag": r["max_offdiag"], "max_mean": r["max_mean_k_ge_1"]}


def _check_second_moment(ctx):
    worst = 0.0
    for N, x, y in ((1, 0, 2), (2, 0, 2), (3, 0, 2), (3, 0, 4)):
        worst = max(worst, chaos.second_moment_decompose(0.5, N, x, y).relative_error)
    return {"passed": worst < 1e-10, "max_relative_error": worst}


def _check_moment_bound(ctx):
    fails = []
    for p in (2, 4):
        for N, x, y in ((2, 0, 2), (3, 0, 2)):
            r = chaos.moment_bound_check(0.5, N, x, y, p)
            if not r["holds"]:
                fails.append({"p": p, "N": N, "x": x, "y": y})
    return {"passed": not fails, "failures": fails}


def _check_coupling(ctx):
    worst = max(walk.coupling_marginal_exact(x, y, 10)["tv"] for x, y in ((0, 2), (0, 4), (-2, 4)))
    return {"passed": worst < 1e-12, "max_tv": worst}


def _check_meeting_time(ctx):
    r = walk.meeting_time_identity_check(ctx.get("meeting_i_max", 300), 40)
    return {"passed": r["max_abs_diff"] < 1e-12, "max_abs_diff": r["max_abs_diff"]}


def _check_exit(ctx):
    worst = 0.0
    for N in range(1, 13):
        for a in range(1, N + 2):
            worst = max(worst, abs(walk.exit_probability_exact(N, a) - walk.exit_probability_enumerated(N, a)))
    return {"passed": worst < 1e-12, "max_abs_diff": worst}


def _check_grr(ctx):
    rng = np.random.default_rng(child_seed(ctx["seed"], 7))
    fns = [walk.random_piecewise_linear(rng) for _ in range(20)]
    viol = 0
    for p, q in ((4.0, 5.0 / 8.0), (3.0, 1.0)):
        viol += walk.grr_bound_check(fns, p, q, pairs=200, seed=ctx["seed"])["violations"]
    return {"passed": viol == 0, "violations": viol}


def _check_factorization(ctx):
    geom = cg.CGGeometry(0.5, 2.0, 0.5, 4.0)
    bad = []
    for i, s in enumerate(child_seeds(ctx["seed"], np.arange(3))):
        r = cg.chain_factorization_check(EnvironmentField(int(s), "gaussian"), geom, [0, 1, 0])
        if not r["holds"]:
            bad.append(i)
    return {"passed": not bad, "failing_environments": bad}


def _check_transfer_matrix(ctx):
    worst = 0.0
    for s in child_seeds(ctx["seed"], np.arange(3)):
        env = EnvironmentField(int(s), "gaussian")
        for N in (4, 8, 10):
            for c in (None, polymer.Tube(0.0, 2.5)):
                a = polymer.partition_function(env, 0.7, N, 0, c)
                b = math.log(polymer.brute_force_partition(env, 0.7, N, 0, c))
                worst = max(worst, abs(math.expm1(a - b)))
    return {"passed": worst < 1e-12, "max_relative_error": worst}


def _check_percolation(ctx):
    rng = np.random.default_rng(child_seed(ctx["seed"], 11))
    st = cg.BondStates.bernoulli(0.6, 4, rng, trials=500)
    agree = bool(np.array_equal(cg.survives(st, 4), cg.exists_open_path_enumerated(st, 4)))
    return {"passed": agree, "trials": 500}


def _check_lss(ctx):
    ok = cg.lss_threshold(1) == 0.75 and cg.lss_threshold(2) == 1 - 4 / 27
    return {"passed": ok, "k1": cg.lss_threshold(1)}


CHECKS = (
    _Check("chaos_completeness", "W = sum_k Theta^(k)", _check_chaos_completeness),
    _Check("chaos_orthogonality", "Q[Theta^(k) Theta^(l)] = 0 for k != l", _check_orthogonality),
    _Check("second_moment", "Q|W^x - W^y|^2 = sum_k Lambda^(k)", _check_second_moment),
    _Check("moment_bound", "Q|W^x - W^y|^p <= (sum_k kappa_p^(2k) Lambda^(k))^(p/2)", _check_moment_bound),
    _Check("reflection_coupling", "reflected walk is a simple random walk from y", _check_coupling),
    _Check("meeting_time", "P(tau > i) = P_0(-d < S_i <= d), d = |x-y|/2", _check_meeting_time),
    _Check("exit_probability", "P(max_{k<=N} |S_k| >= a) by absorbing DP", _check_exit),
    _Check("grr", "|f(x)-f(y)| <= C |x-y|^(q-2/p) Gamma^(1/p)", _check_grr),
    _Check("chain_factorization", "W(all bonds) >= prod_J inf_x W(bond J)", _check_factorization),
    _Check("transfer_matrix", "transfer matrix = sum over paths", _check_transfer_matrix),
    _Check("percolation_dp", "alive DP = exhaustive open-path search", _check_percolation),
    _Check("lss_threshold", "1 - k^k/(k+1)^(k+1), k=1 -> 3/4", _check_lss),
)


def run_verification_suite(cfg: ExperimentConfig) -> dict:
    """Run the exact checks; the report has ``passed`` false if any check fails.

    A check that raises, or runs longer than ``verify.timeout_s``, counts as
    failed. Timeouts are measured after the fact: checks are not interrupted.
    """
    vs = cfg.verify
    names = [c.name for c in CHECKS]
    selected = names if vs.checks is None else list(vs.checks)
    unknown = set(selected) - set(names)
    if unknown:
        raise ConfigError(f"unknown checks: {sorted(unknown)}")
    if vs.fault not in (None, "impure_environment"):
        raise ConfigError(f"unknown fault {vs.fault!r}")
    out = _Output(cfg)
    ctx = {"seed": cfg.seed, "fault": vs.fault}
    entries = []
    for check in CHECKS:
        if check.name not in selected:
            continue
        t0 = time.perf_counter()
        try:
            detail = check.fn(ctx)
            passed = bool(detail.pop("passed"))
            error = None
        except Exception as exc:  # reported, not raised
            detail, passed, error = {}, False, f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - t0
        timed_out = elapsed > vs.timeout_s
        entries.append({"name": check.name, "anchor": check.anchor, "passed": passed and not timed_out,
                        "timed_out": timed_out, "seconds": round(elapsed, 3), "error": error,
                        "detail": detail})
    report = {"passed": all(e["passed"] for e in entries), "fault": vs.fault, "checks": entries}
    out.json("verification.json", report)
    out.close("ok" if report["passed"] else "failed")
    return report


RUNNERS: dict[str, Callable[[ExperimentConfig], dict]] = {
    "beta4-scan": run_beta4_scan,
    "good-bonds": run_good_bond_surface,
    "percolation": run_percolation_survival,
    "continuum-constant": run_continuum_constant,
    "verify": run_verification_suite,
}
