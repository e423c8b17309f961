"""Acceptance checks at full scale, one test per criterion.

Each test runs a shipped preset (results are cached per session) and checks
the numbers behind the verdict at the stated tolerances.  Run with
``pytest -m slow tests/test_acceptance.py``; all are marked slow.
"""

import json
import time

import pytest

from harrislab.experiments import load_spec, run
from harrislab.experiments.cli import main

pytestmark = pytest.mark.slow

_CACHE: dict = {}


def result(name: str, kind: str | None = None):
    if name not in _CACHE:
        start = time.perf_counter()
        res = run(load_spec(kind or name, preset_name=name))
        _CACHE[name] = (res, time.perf_counter() - start)
    return _CACHE[name]


def report(label: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def identities():
    res, secs = result("identities")
    spec = res.spec
    assert spec.replicas == 1000 and spec.lam == 2.0 and spec.R == 2 and spec.horizon == 10
    assert spec.opt("half_width", 0) == 30 and spec.opt("checkpoints", 0) == 10
    return res, secs


def test_c01_duality_under_a_minute():
    res, secs = identities()
    v = res.metrics["violations"]["duality"]
    report("duality", v == 0 and secs < 60, f"{v} violations, {secs:.1f}s")
    assert v == 0
    assert secs < 60


def test_c02_union_coupling():
    res, _ = identities()
    v = res.metrics["violations"]["union"]
    report("union coupling", v == 0, f"{v} violations over 1000 x 10 checkpoints")
    assert v == 0


def test_c03_attractive_and_additive():
    res, _ = identities()
    v = res.metrics["violations"]
    report("attractive/additive", v["attractive"] == v["additive"] == 0, str(v))
    assert v["attractive"] == 0 and v["additive"] == 0


def test_c04_priority_replay():
    res, _ = identities()
    v = res.metrics["violations"]["priority"]
    report("priority replay", v == 0, f"{v} unsound audits")
    assert v == 0


def test_c05_lemma1_bound():
    res, _ = result("lemma1")
    rows = res.table("cases").rows
    cases = {(r[0], r[1], r[2], r[3]) for r in rows}
    assert cases == {(2, 5, 1.5, 1), (3, 4, 1.0, 1)}
    ok = True
    for N, n, lam, R, reps, hits, est, sigma, bound, tainted, holds in rows:
        assert reps == 10000
        ok = ok and est <= bound + 3 * sigma
        report(f"lemma1 N={N} n={n}", est <= bound + 3 * sigma,
               f"{est:.4f} <= {bound:.4f} + 3*{sigma:.4f}")
    assert ok


def test_c06_percolation_sweep():
    res, _ = result("percolation")
    rows = res.table("sweep").rows
    assert res.spec.replicas == 10000
    assert {r[0] for r in rows} == {0.6, 0.8} and len(rows) == 2 * 6 * 4
    bad = [r for r in rows if abs(r[3] - r[4]) > 3 * r[5]]
    report("percolation", not bad, f"{len(rows) - len(bad)}/{len(rows)} within 3 sigma")
    assert not bad


def test_c07_interface_tails():
    r1, _ = result("tail")
    assert r1.spec.horizon == 50 and r1.spec.replicas == 10000 and r1.spec.lam == 2.0
    m = r1.metrics
    ok1 = m["slope"] < 0 and m["correlation"] <= -0.95
    report("tail r1 t=50", ok1, f"slope {m['slope']:.4f}, corr {m['correlation']:.4f}")
    # with R=1 the types stay ordered, so r1 - l2 <= -1 and the tail is read as l2 - r1
    nu, _ = result("tail-nu", "tail")
    assert nu.spec.horizon == 100 and nu.spec.replicas == 10000
    assert nu.metrics["statistic"] == "l2-r1"
    n = nu.metrics
    ok2 = n["slope"] < 0 and n["correlation"] <= -0.95
    report("tail l2-r1 t=100", ok2, f"slope {n['slope']:.4f}, corr {n['correlation']:.4f}")
    assert r1.metrics["censored"] <= 100 and nu.metrics["censored"] <= 100
    assert ok1 and ok2


def test_c08_symmetry():
    res, _ = result("symmetry")
    m = res.metrics
    assert m["replicas_each"] == 1000 and m["horizon"] == 50
    report("symmetry", m["pvalue"] >= 0.01, f"chi2 {m['chi2']:.2f} dof {m['dof']} "
                                            f"p {m['pvalue']:.3f}")
    assert m["pvalue"] >= 0.01


def test_c09_coalescence_curve():
    res, _ = result("coalesce")
    s = res.spec
    assert (s.lam, s.R, s.A, s.B, s.E) == (3.0, 1, "0", "1", (-2, -1, 0, 1, 2))
    curve = res.metrics["curve"]
    mono = all(a <= b for a, b in zip(curve, curve[1:]))
    report("coalescence", mono and curve[-1] >= 0.9,
           f"curve {[round(c, 3) for c in curve]} over {res.metrics['coexist']} coexisting")
    assert res.metrics["coexist"] > 0
    assert mono and curve[-1] >= 0.9


def test_c10_marginals_converge():
    res, _ = result("marginals")
    m = res.metrics
    assert len(m["E"]) == 3 and m["times"] == [25.0, 50.0, 100.0]
    assert len(m["tv_ci"]) == 2 and all(lo <= hi for lo, hi in m["tv_ci"])
    tv = m["tv"]
    ok = all(a > b for a, b in zip(tv, tv[1:]))
    report("marginals", ok, f"tv {tv} ci {m['tv_ci']}")
    assert ok


def test_c11_outcome_tables():
    res, _ = result("outcomes")
    m = res.metrics
    assert res.spec.replicas == 10000 and (res.spec.lam, res.spec.R) == (2.0, 1)
    assert m["partition_exact"] and m["censoring_exact"]
    assert m["bothdie_point_mass"]
    tests = m["tests"]
    assert set(tests) == {"Type1Only", "Type2Only", "Coexist"}
    for name, t in tests.items():
        report(f"outcome {name} vs {t['against']}", t["pvalue"] >= 0.01,
               f"p {t['pvalue']:.3f} (n={t['n']})")
    assert all(t["pvalue"] >= 0.01 for t in tests.values())


def test_c12_expanding_points():
    res, _ = result("expanding")
    m = res.metrics
    assert (res.spec.lam, res.spec.R) == (3.0, 2)
    ok_ci = m["ci"][0] > 0
    p = m["p_none"]
    ok_none = all(a > b for a, b in zip(p, p[1:]))
    report("expanding", ok_ci and ok_none, f"P {m['p_expanding']:.3f} ci {m['ci']}, "
                                           f"P(none) {p}")
    assert ok_ci and ok_none


def test_c13_closure_decreases():
    res, _ = result("renorm-closure")
    m = res.metrics
    d, ci = m["delta_hat"], m["ci"]
    assert m["grid"] == [4, 9]
    report("closure", d[1] < d[0] and ci[1][1] < ci[0][0], f"delta {d} ci {ci}")
    assert d[1] < d[0]
    assert ci[1][1] < ci[0][0]


@pytest.mark.parametrize("name", ["identities", "lemma1", "percolation", "symmetry"])
def test_c14_reproducible_bytes(name, tmp_path):
    for sub in ("a", "b"):
        assert main([name, "--out", str(tmp_path / sub)]) == 0
    a = {p.name: p.read_bytes() for p in sorted((tmp_path / "a").glob("*.csv"))}
    b = {p.name: p.read_bytes() for p in sorted((tmp_path / "b").glob("*.csv"))}
    assert a and a == b
    ra = json.loads((tmp_path / "a" / f"{name}.report.json").read_text())
    rb = json.loads((tmp_path / "b" / f"{name}.report.json").read_text())
    assert ra.pop("timestamp") and rb.pop("timestamp")
    assert ra == rb
    report(f"reproducible {name}", True, f"{len(a)} csv files identical")


def test_reports_embed_seed_and_version(tmp_path):
    assert main(["lemma1", "--seed", "5", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "lemma1.report.json").read_text())
    assert rep["seed"] == 5 and rep["spec"]["seed"] == 5 and rep["version"]
    assert rep["exit_code"] == 0 and rep["verdict"] == "pass"
