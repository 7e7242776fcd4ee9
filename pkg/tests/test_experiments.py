import csv
import json
import math

import pytest

from dprelab import experiments as ex
from dprelab.experiments import (
    ConfigError,
    CostRefusal,
    ExperimentConfig,
    ResultManifest,
    estimate_cost,
    load_config,
    run_beta4_scan,
    run_continuum_constant,
    run_good_bond_surface,
    run_percolation_survival,
    run_verification_suite,
    wilson_interval,
)
from dprelab.polymer import free_energy_estimate


def cfg(tmp_path, experiment, **kw):
    data = {"experiment": experiment, "out": str(tmp_path / experiment)}
    data.update(kw)
    return ExperimentConfig.from_dict(data)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_round_trip_and_hash(tmp_path):
    c = cfg(tmp_path, "beta4-scan", samples=10, grid={"beta": [0.6]})
    again = ExperimentConfig.from_dict(json.loads(json.dumps(c.to_dict())))
    assert again == c
    assert again.statistics_hash() == c.statistics_hash()
    other = ExperimentConfig.from_dict({**c.to_dict(), "threads": 4, "out": "elsewhere"})
    assert other.statistics_hash() == c.statistics_hash()
    assert ExperimentConfig.from_dict({**c.to_dict(), "seed": 1}).statistics_hash() != c.statistics_hash()


@pytest.mark.parametrize("bad", [{"bogus": 1}, {"grid": {"nope": 1}}, {"law": "cauchy"}, {"samples": 1},
                                 {"threads": 0}, {"grid": 3}])
def test_config_rejects(tmp_path, bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "beta4-scan", **bad})


def test_load_config_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "samples": 7, "threads": 2}))
    c = load_config(p, "beta4-scan", {"seed": 9, "threads": None})
    assert c.seed == 9 and c.threads == 2 and c.samples == 7
    p.write_text(json.dumps({"experiment": "verify"}))
    with pytest.raises(ConfigError):
        load_config(p, "beta4-scan")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json", "verify")


def test_beta_zero_row_excluded(tmp_path):
    with pytest.raises(ConfigError):
        run_beta4_scan(cfg(tmp_path, "beta4-scan", grid={"beta": [0.0, 0.5]}))


def test_beta4_small_N_refused(tmp_path):
    with pytest.raises(ConfigError):
        run_beta4_scan(cfg(tmp_path, "beta4-scan", grid={"beta": [0.7], "N": [100]}))


def test_cost_guard(tmp_path):
    c = cfg(tmp_path, "beta4-scan", samples=2, grid={"beta": [0.1]})
    assert estimate_cost(c) > ex.DEFAULT_MAX_COST
    with pytest.raises(CostRefusal) as err:
        run_beta4_scan(c)
    assert err.value.estimate > err.value.ceiling
    assert not (tmp_path / "beta4-scan").exists()


def test_beta4_scan_rows_match_library(tmp_path):
    c = cfg(tmp_path, "beta4-scan", samples=8, seed=3, grid={"beta": [0.7, 0.6]})
    out = run_beta4_scan(c)
    rows = read_csv(out["csv"])
    assert list(rows[0]) == ["beta", "N", "mean", "stderr", "ratio"]
    for row in rows:
        beta, N = float(row["beta"]), int(row["N"])
        assert N == round(50 * beta ** -4)
        est = free_energy_estimate("gaussian", beta, N, 8, 3)
        assert float(row["mean"]) == est.mean and float(row["ratio"]) == est.ratio
        assert float(row["ratio"]) < 0


def test_manifest_lists_outputs_with_checksums(tmp_path):
    c = cfg(tmp_path, "beta4-scan", samples=4, grid={"beta": [0.7]})
    run_beta4_scan(c)
    d = tmp_path / "beta4-scan"
    m = ResultManifest.read(d)
    assert set(m.files) == {"beta4_scan.csv"}
    assert m.verify(d) and m.config_hash == c.statistics_hash()
    body = json.loads((d / "manifest.json").read_text())
    assert body["wall_clock_s"] >= 0 and body["version"]
    (d / "beta4_scan.csv").write_text("tampered\n")
    assert not m.verify(d)


def test_determinism_across_threads(tmp_path):
    a = cfg(tmp_path / "a", "beta4-scan", samples=40, grid={"beta": [0.7, 0.6]}, threads=1)
    b = cfg(tmp_path / "b", "beta4-scan", samples=40, grid={"beta": [0.7, 0.6]}, threads=4)
    pa, pb = run_beta4_scan(a)["csv"], run_beta4_scan(b)["csv"]
    assert open(pa, "rb").read() == open(pb, "rb").read()


def test_good_bond_surface_schema_and_huge_eps(tmp_path):
    c = cfg(tmp_path, "good-bonds", samples=10,
            grid={"beta": [0.7, 0.5], "T": [2.0], "eps": [0.5, 100.0], "delta": 0.5, "L": 3.0})
    out = run_good_bond_surface(c)
    rows = read_csv(out["csv"])
    assert list(rows[0]) == ["beta", "T", "eps", "density", "stderr"]
    assert len(rows) == 4
    assert all(float(r["density"]) == 1.0 for r in rows if float(r["eps"]) == 100.0)
    report = json.loads((tmp_path / "good-bonds" / "good_bonds_report.json").read_text())
    assert {"lss", "dependence", "monotone_in_beta"} <= set(report)
    assert report["lss"]["k"] == math.ceil(4 * 3.0 / 0.5)
    assert ResultManifest.read(tmp_path / "good-bonds").verify(tmp_path / "good-bonds")


def test_good_bond_density_matches_library(tmp_path):
    from dprelab.coarse_grain import CGGeometry, good_density_estimate

    c = cfg(tmp_path, "good-bonds", samples=12, seed=4, grid={"beta": [0.5], "T": [2.0], "eps": [0.3],
                                                             "delta": 0.5, "L": 3.0})
    row = run_good_bond_surface(c)["rows"][0]
    d, se = good_density_estimate("gaussian", CGGeometry(0.5, 2.0, 0.5, 3.0), 0.3, 12, 4)
    assert row["density"] == d and row["stderr"] == pytest.approx(se)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 1000)
    assert lo == 0.0 and 0 < hi < 0.005
    lo, hi = wilson_interval(500, 1000)
    assert lo < 0.5 < hi


def test_percolation_bernoulli_extremes(tmp_path):
    c = cfg(tmp_path, "percolation", grid={"p": [1.0, 0.3], "horizon": 100},
            percolation={"trials": 1000, "bisect": False})
    rows = run_percolation_survival(c)["rows"]
    assert rows[0]["survival"] == 1.0
    assert rows[1]["survival"] == 0.0
    hdr = open(tmp_path / "percolation" / "percolation.csv").readline().strip()
    assert hdr == ex.PERCOLATION_HEADER


def test_percolation_bisection(tmp_path):
    r = ex.bisect_survival(0.5, 200, 1000, seed=0)
    assert 0.62 <= r["estimate"] <= 0.67, r


def test_percolation_good_bond_mode(tmp_path):
    c = cfg(tmp_path, "percolation", grid={"beta": [0.7], "T": [2.0], "eps": [100.0], "delta": 0.2,
                                           "L": 2.0, "horizon": 3},
            percolation={"mode": "good-bonds", "trials": 3})
    rows = run_percolation_survival(c)["rows"]
    assert rows[0]["survival"] == 1.0


def test_percolation_good_bond_horizon_cap(tmp_path):
    c = cfg(tmp_path, "percolation", grid={"horizon": 65}, percolation={"mode": "good-bonds"})
    with pytest.raises(ConfigError):
        run_percolation_survival(c)


def test_continuum_constant_runner(tmp_path):
    c = cfg(tmp_path, "continuum-constant", samples=10, grid={"n": 16, "T": [1.0, 2.0]})
    out = run_continuum_constant(c)
    rows = read_csv(out["csv"])
    assert list(rows[0]) == ["n", "T", "law", "samples", "mean", "stderr"]
    assert [r["T"] for r in rows] == ["1.0", "2.0"]


def test_verification_suite_green(tmp_path):
    r = run_verification_suite(cfg(tmp_path, "verify"))
    assert r["passed"], [c for c in r["checks"] if not c["passed"]]
    names = {c["name"] for c in r["checks"]}
    assert {"chaos_completeness", "reflection_coupling", "meeting_time", "exit_probability", "grr",
            "chain_factorization"} <= names
    assert all(c["anchor"] for c in r["checks"])
    saved = json.loads((tmp_path / "verify" / "verification.json").read_text())
    assert saved["passed"]


def test_verification_fault_injection(tmp_path):
    r = run_verification_suite(cfg(tmp_path, "verify", verify={"fault": "impure_environment",
                                                                "checks": ["chaos_completeness", "lss_threshold"]}))
    assert not r["passed"]
    status = {c["name"]: c["passed"] for c in r["checks"]}
    assert status == {"chaos_completeness": False, "lss_threshold": True}


def test_verification_timeout_counts_as_failure(tmp_path):
    r = run_verification_suite(cfg(tmp_path, "verify", verify={"checks": ["meeting_time"], "timeout_s": 0.0}))
    assert not r["passed"] and r["checks"][0]["timed_out"]


def test_verification_unknown_check(tmp_path):
    with pytest.raises(ConfigError):
        run_verification_suite(cfg(tmp_path, "verify", verify={"checks": ["nope"]}))
