"""One runner per experiment kind.  Each takes an ``ExperimentSpec`` and
returns an ``ExperimentResult`` with a verdict, scalar metrics and tables.

Replicas are folded in index order; replica i of stream s uses the seed
``derive_seed(master, s, i)``.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .. import _kernels as K
from ..contact import (Configuration, WindowPolicy, dual, edge_stats, evolve, lemma1_monte_carlo,
                       trajectory)
from ..errors import EstimationImpossibleError, InvalidArgumentError, UndecidableError
from ..harris import ModelParams, SpaceTimeWindow, derive_seed, generate
from ..opercolation import (EvenLattice, PercEventSpec, detect_batch, estimate_closure,
                            exact_event_probability, relevant_points, sample_uniforms)
from ..renorm import RenormSetup, compute_phi_psi, is_expanding
from ..twotype import (TwoTypeConfiguration, audit_priority, interface_from_rows, run_series)
from .config import parse_sites
from .stats import bootstrap_tv, clopper_pearson, fit_tail, total_variation, two_sample_chi2
from .types import ExperimentResult, ExperimentSpec, MarginalTable, Outcome, OutcomeLabel, Table

__all__ = ["RUNNERS", "run", "run_speed", "run_tail", "run_coalesce", "run_outcomes",
           "run_marginals", "run_symmetry", "run_lemma1", "run_percolation",
           "run_renorm_closure", "run_expanding", "run_identities"]

# stream codes for derive_seed; fixed forever so old reports stay reproducible
S_SPEED, S_TAIL, S_SYM_L, S_SYM_R, S_COAL, S_OUT, S_MU1, S_MU2, S_NU = range(1, 10)
S_MARG, S_LEMMA, S_PERC, S_RENORM, S_EXPAND, S_IDENT, S_BOOT = range(10, 17)


def _seed(spec: ExperimentSpec, stream: int, i: int, *more: int) -> int:
    return derive_seed(spec.seed, stream, i, *more)


def _half_line_window(spec: ExperimentSpec, horizon: float) -> SpaceTimeWindow:
    """Window [-W+1, W] for two-type runs that start from the two half-lines."""
    W = int(spec.opt("half_width", 40))
    if W < spec.R + 1:
        raise InvalidArgumentError("half_width too small for the range")
    return SpaceTimeWindow(-W + 1, W, float(horizon))


def _policy(spec: ExperimentSpec) -> WindowPolicy:
    return WindowPolicy(spec.kappa, spec.margin)


def _finite_window(spec: ExperimentSpec, horizon: float, pts) -> SpaceTimeWindow:
    W = _policy(spec).half_width(spec.params, horizon)
    W = max([W, spec.R + 1] + [abs(x) + spec.R + 1 for x in pts])
    return SpaceTimeWindow(-W + 1, W, float(horizon))


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


# ---------------------------------------------------------------------------
# speed
# ---------------------------------------------------------------------------


def run_speed(spec: ExperimentSpec) -> ExperimentResult:
    T = spec.horizon
    st = edge_stats(spec.params, _policy(spec), [T], spec.replicas,
                    derive_seed(spec.seed, S_SPEED))
    rT = st.r[:, -1]
    bad = st.tainted[:, -1]
    use = ~bad & np.isfinite(rT)
    rows = [(i, int(st.seeds[i]), float(rT[i]), bool(bad[i])) for i in range(spec.replicas)]
    table = Table("replicas", ("replica", "seed", "r_T", "tainted"), rows)
    n = int(use.sum())
    metrics = {"horizon": T, "used": n, "tainted": int(bad.sum()),
               "empty": int((~np.isfinite(rT) & ~bad).sum())}
    max_taint = spec.opt("max_taint", 0.01)
    if n < 2 or bad.mean() > max_taint:
        metrics["reason"] = "too many tainted or empty replicas"
        return ExperimentResult("speed", "undecidable", metrics, [table], spec)
    v = rT[use] / T
    mean, se = float(v.mean()), float(v.std(ddof=1) / math.sqrt(n))
    metrics.update(alpha=mean, stderr=se, ci=[mean - 1.96 * se, mean + 1.96 * se])
    return ExperimentResult("speed", _verdict(mean - 1.96 * se > 0), metrics, [table], spec,
                            ["verdict: the edge moves right (CI above 0)"])


# ---------------------------------------------------------------------------
# interface samples
# ---------------------------------------------------------------------------


def _interface_samples(spec: ExperimentSpec, t: float, stream: int, replicas: int | None = None):
    """(r1, l2, certified) per replica of zeta^{1,2}_t."""
    w = _half_line_window(spec, t)
    zeta = TwoTypeConfiguration.initial()
    n = spec.replicas if replicas is None else replicas
    out = []
    for i in range(n):
        h = generate(spec.params, w, _seed(spec, stream, i))
        r = run_series(h, zeta, [t])
        r1, l2, ok1, ok2 = interface_from_rows(r.states[0], r.contaminated[0], r.possible[0], r.lo)
        out.append((r1, l2, ok1, ok2))
    return out


def run_tail(spec: ExperimentSpec) -> ExperimentResult:
    t = spec.horizon
    stat = spec.opt("statistic", "r1")
    if stat not in ("r1", "r1-l2", "l2-r1"):
        raise InvalidArgumentError("statistic must be r1, r1-l2 or l2-r1")
    samples = _interface_samples(spec, t, S_TAIL)
    vals, rows, censored = [], [], 0
    for i, (r1, l2, ok1, ok2) in enumerate(samples):
        ok = ok1 if stat == "r1" else (ok1 and ok2)
        v = {"r1": r1, "r1-l2": r1 - l2, "l2-r1": l2 - r1}[stat]
        rows.append((i, r1, l2, ok))
        if ok:
            vals.append(v)
        else:
            censored += 1
    x_start = spec.opt("x_start", 0 if stat == "r1-l2" else 1)
    fit = fit_tail(vals, x_start=x_start, min_count=spec.opt("min_count", 20),
                   statistic=stat, horizon=t, censored=censored)
    thresholds = Table("survival", ("x", "count", "survival", "used"),
                       [(x, c, s, x in fit.used) for x, c, s in
                        zip(fit.thresholds, fit.counts, fit.survival)])
    reps = Table("replicas", ("replica", "r1", "l2", "certified"), rows)
    metrics = {"statistic": stat, "horizon": t, "replicas": spec.replicas, "censored": censored,
               "used_thresholds": list(fit.used), "slope": fit.slope,
               "intercept": fit.intercept, "correlation": fit.correlation}
    if censored > spec.opt("max_taint", 0.01) * spec.replicas:
        metrics["reason"] = "too many replicas touched by the window edge"
        return ExperimentResult("tail", "undecidable", metrics, [thresholds, reps], spec)
    if not fit.usable:
        metrics["reason"] = "fewer than 3 usable thresholds"
        if stat == "r1-l2" and spec.R == 1:
            # nearest-neighbour types never cross, so r1 - l2 <= -1 surely
            metrics["reason"] += "; with R=1 the upper tail of r1-l2 is empty, use l2-r1"
        return ExperimentResult("tail", "undecidable", metrics, [thresholds, reps], spec)
    ok = fit.slope < 0 and fit.correlation <= spec.opt("max_correlation", -0.95)
    return ExperimentResult("tail", _verdict(ok), metrics, [thresholds, reps], spec,
                            ["verdict: slope < 0 and correlation <= -0.95"])


def run_symmetry(spec: ExperimentSpec) -> ExperimentResult:
    t = spec.horizon
    left = _interface_samples(spec, t, S_SYM_L)
    right = _interface_samples(spec, t, S_SYM_R)
    l2 = [int(s[1]) for s in left if s[3] and math.isfinite(s[1])]
    mr = [int(-s[0] + 1) for s in right if s[2] and math.isfinite(s[0])]
    censored = (len(left) - len(l2)) + (len(right) - len(mr))
    c1: dict = {}
    c2: dict = {}
    for v in l2:
        c1[v] = c1.get(v, 0) + 1
    for v in mr:
        c2[v] = c2.get(v, 0) + 1
    metrics = {"horizon": t, "replicas_each": spec.replicas, "censored": censored}
    rows = [(v, c1.get(v, 0), c2.get(v, 0)) for v in sorted(set(c1) | set(c2))]
    table = Table("laws", ("value", "l2", "one_minus_r1"), rows)
    if censored > spec.opt("max_taint", 0.01) * 2 * spec.replicas:
        metrics["reason"] = "too many replicas touched by the window edge"
        return ExperimentResult("symmetry", "undecidable", metrics, [table], spec)
    test = two_sample_chi2(c1, c2, ordered=True)
    level = spec.opt("level", 0.01)
    metrics.update(chi2=test.statistic, dof=test.dof, pvalue=test.pvalue,
                   pooled_cells=list(test.cells), level=level)
    return ExperimentResult("symmetry", _verdict(not test.rejected(level)), metrics, [table], spec,
                            ["verdict: two-sample chi-square not rejected"])


# ---------------------------------------------------------------------------
# coalescence
# ---------------------------------------------------------------------------


def _on(row: np.ndarray, lo: int, E) -> tuple[int, ...]:
    return tuple(int(row[x - lo]) for x in E)


def _clean(crow: np.ndarray, lo: int, E) -> bool:
    return not any(crow[x - lo] for x in E)


def run_coalesce(spec: ExperimentSpec) -> ExperimentResult:
    A, B = parse_sites(spec.A), parse_sites(spec.B)
    if not (A.finite and B.finite):
        raise InvalidArgumentError("coalesce needs finite A and B")
    zeta = TwoTypeConfiguration(A, B)
    ref = TwoTypeConfiguration.initial()
    checks = list(spec.times)
    H = spec.horizon
    dt = spec.opt("dt", 1.0)
    grid = sorted(set(checks) | set(np.arange(checks[0], H + 1e-9, dt).round(9).tolist()))
    E = spec.E
    pts = list(A.support) + list(B.support) + list(E)
    w = _finite_window(spec, H, pts)
    co = 0
    tainted = 0
    agree = np.zeros(len(checks), np.int64)
    labels: dict[str, int] = {}
    for i in range(spec.replicas):
        h = generate(spec.params, w, _seed(spec, S_COAL, i))
        a = run_series(h, zeta, grid)
        b = run_series(h, ref, grid)
        lab = OutcomeLabel.of(*_types(a.states[-1], a.lo))
        if a.outside.any() or a.contaminated[-1].any():
            # the finite run saw the window edge: survival flags are not exact
            tainted += 1
            continue
        labels[lab.outcome.value] = labels.get(lab.outcome.value, 0) + 1
        if lab.outcome is not Outcome.COEXIST:
            continue
        if not all(_clean(b.contaminated[g], b.lo, E) and _clean(a.contaminated[g], a.lo, E)
                   for g in range(len(grid))):
            tainted += 1
            labels[lab.outcome.value] -= 1
            continue
        co += 1
        eq = [_on(a.states[g], a.lo, E) == _on(b.states[g], b.lo, E) for g in range(len(grid))]
        suffix = np.logical_and.accumulate(np.array(eq[::-1]))[::-1]
        for c, t in enumerate(checks):
            agree[c] += bool(suffix[grid.index(t)])
    metrics = {"coexist": co, "tainted": tainted, "outcomes": labels, "grid_step": dt}
    rows = []
    curve = []
    for c, t in enumerate(checks):
        if co:
            f = agree[c] / co
            lo, hi = clopper_pearson(int(agree[c]), co)
        else:
            f, lo, hi = math.nan, math.nan, math.nan
        curve.append(f)
        rows.append((t, co, int(agree[c]), f, lo, hi))
    table = Table("curve", ("t", "coexist", "agree", "fraction", "ci_lo", "ci_hi"), rows)
    metrics["curve"] = curve
    if co == 0:
        metrics["reason"] = "no Coexist replicas: agreement undefined"
        return ExperimentResult("coalesce", "undecidable", metrics, [table], spec)
    mono = all(curve[j] <= curve[j + 1] for j in range(len(curve) - 1))
    target = spec.opt("target", 0.9)
    metrics.update(nondecreasing=mono, final=curve[-1], target=target)
    return ExperimentResult("coalesce", _verdict(mono and curve[-1] >= target), metrics, [table],
                            spec, ["verdict: curve nondecreasing and final value >= target"])


def _types(row: np.ndarray, lo: int):
    ones = (np.flatnonzero(row == 1) + lo).tolist()
    twos = (np.flatnonzero(row == 2) + lo).tolist()
    return ones, twos


# ---------------------------------------------------------------------------
# outcomes and marginals
# ---------------------------------------------------------------------------


def _baseline_classic(spec, stream, value, n, t, E) -> tuple[MarginalTable, int]:
    """Table of xi^Z_t on E with occupied sites labelled ``value``."""
    w = _half_line_window(spec, t)
    Z = Configuration(frozenset(), 0, 1)
    tab = MarginalTable(E, time=t)
    tainted = 0
    for i in range(n):
        h = generate(spec.params, w, _seed(spec, stream, i))
        tr = trajectory(h, Z, [t])
        if any(x in tr.contaminated[0] for x in E):
            tainted += 1
            continue
        occ = tr.states[0].support
        tab.add([value if x in occ else 0 for x in E])
    return tab, tainted


def _baseline_two_type(spec, stream, n, times, E, E2=None, sub=None):
    """Tables of zeta^{1,2} on E (and optionally E2) at each time, plus the
    per-replica cell codes on E and the number of tainted replicas.

    ``sub`` selects a separate family of seeds within ``stream``."""
    w = _half_line_window(spec, times[-1])
    ref = TwoTypeConfiguration.initial()
    tabs = [MarginalTable(E, time=t) for t in times]
    tabs2 = [MarginalTable(E2, time=t) for t in times] if E2 is not None else None
    codes: list[list[int]] = [[] for _ in times]
    watch = list(E) + list(E2 or ())
    tainted = 0
    for i in range(n):
        seed = _seed(spec, stream, i) if sub is None else _seed(spec, stream, i, sub)
        h = generate(spec.params, w, seed)
        r = run_series(h, ref, list(times))
        if any(not _clean(r.contaminated[c], r.lo, watch) for c in range(len(times))):
            tainted += 1
            continue
        for c in range(len(times)):
            code = tabs[c].code(_on(r.states[c], r.lo, E))
            tabs[c].add_code(code)
            codes[c].append(code)
            if tabs2 is not None:
                tabs2[c].add(_on(r.states[c], r.lo, E2))
    return tabs, codes, tainted, tabs2


def _table_rows(name: str, tab: MarginalTable):
    return [(name, tab.time, cell, n) for cell, n in tab.cells()]


def run_outcomes(spec: ExperimentSpec) -> ExperimentResult:
    A, B = parse_sites(spec.A), parse_sites(spec.B)
    if not (A.finite and B.finite):
        raise InvalidArgumentError("outcomes needs finite A and B")
    zeta = TwoTypeConfiguration(A, B)
    t = spec.horizon
    E = spec.E
    w = _finite_window(spec, t, list(A.support) + list(B.support) + list(E))
    cond = {o: MarginalTable(E, time=t) for o in Outcome}
    uncond = MarginalTable(E, time=t)
    tainted = survived = extinct = 0
    for i in range(spec.replicas):
        h = generate(spec.params, w, _seed(spec, S_OUT, i))
        r = run_series(h, zeta, [t])
        if r.outside.any() or r.contaminated[0].any():
            tainted += 1
            continue
        lab = OutcomeLabel.of(*_types(r.states[0], r.lo))
        cell = _on(r.states[0], r.lo, E)
        cond[lab.outcome].add(cell)
        uncond.add(cell)
        if lab.alive1 or lab.alive2:
            survived += 1
        else:
            extinct += 1
    nb = int(spec.opt("baseline_replicas", spec.replicas))
    mu1, t1 = _baseline_classic(spec, S_MU1, 1, nb, t, E)
    mu2, t2 = _baseline_classic(spec, S_MU2, 2, nb, t, E)
    (nu,), _, t3, _ = _baseline_two_type(spec, S_NU, nb, [t], E)
    rows = []
    for o in Outcome:
        rows += _table_rows(o.value, cond[o])
    rows += _table_rows("all", uncond) + _table_rows("mu1", mu1) + _table_rows("mu2", mu2)
    rows += _table_rows("nu", nu)
    tables = [Table("tables", ("table", "time", "cell", "count"), rows)]
    summed = sum((cond[o] for o in Outcome), MarginalTable(E, time=t))
    metrics = {
        "horizon": t, "E": list(E), "replicas": spec.replicas, "tainted": tainted,
        "survived": survived, "extinct": extinct,
        "counts": {o.value: cond[o].replicas for o in Outcome},
        "baseline_tainted": {"mu1": t1, "mu2": t2, "nu": t3},
        "partition_exact": summed == uncond,
        "censoring_exact": survived + extinct + tainted == spec.replicas,
        "crossing_flags": "i.o.-proxy (presence at the horizon)",
    }
    both = cond[Outcome.BOTH_DIE]
    metrics["bothdie_point_mass"] = bool(both.counts[1:].sum() == 0)
    level = spec.opt("level", 0.01)
    tests = {}
    rows_t = []
    undecided = []
    for o, base, name in ((Outcome.TYPE1_ONLY, mu1, "mu1"), (Outcome.TYPE2_ONLY, mu2, "mu2"),
                          (Outcome.COEXIST, nu, "nu")):
        try:
            res = two_sample_chi2(cond[o].as_dict(), base.as_dict())
        except EstimationImpossibleError:
            undecided.append(o.value)
            continue
        tests[o.value] = {"against": name, "chi2": res.statistic, "dof": res.dof,
                          "pvalue": res.pvalue, "n": res.n1, "n_baseline": res.n2,
                          "cells": list(res.cells)}
        rows_t.append((o.value, name, res.n1, res.n2, res.statistic, res.dof, res.pvalue,
                       not res.rejected(level)))
    tables.append(Table("tests", ("outcome", "baseline", "n", "n_baseline", "chi2", "dof",
                                  "pvalue", "accepted"), rows_t))
    metrics["tests"] = tests
    metrics["level"] = level
    if undecided:
        metrics["reason"] = f"no replicas for {', '.join(undecided)}"
        return ExperimentResult("outcomes", "undecidable", metrics, tables, spec)
    ok = metrics["bothdie_point_mass"] and all(v["pvalue"] >= level for v in tests.values())
    return ExperimentResult("outcomes", _verdict(ok), metrics, tables, spec,
                            ["verdict: three chi-square tests accepted and BothDie empty"])


def run_marginals(spec: ExperimentSpec) -> ExperimentResult:
    """TV between consecutive checkpoint tables of zeta^{1,2} on E.

    With ``design=independent`` (default) each checkpoint gets its own
    replicas, so every TV carries the same sampling noise; ``paired`` reuses
    one set of realizations across checkpoints."""
    times = list(spec.times)
    E = spec.E
    mE = tuple(sorted(1 - x for x in E))
    design = spec.opt("design", "independent")
    if design == "paired":
        tabs, codes, tainted, mtabs = _baseline_two_type(spec, S_MARG, spec.replicas, times, E,
                                                         mE)
    elif design == "independent":
        tabs, codes, mtabs, tainted = [], [], [], 0
        for c, t in enumerate(times):
            (tab,), (cc,), tc, (mtab,) = _baseline_two_type(spec, S_MARG, spec.replicas, [t], E,
                                                            mE, sub=c)
            tabs.append(tab)
            codes.append(cc)
            mtabs.append(mtab)
            tainted += tc
    else:
        raise InvalidArgumentError(f"design must be independent or paired, not {design!r}")
    rows = []
    for tab in tabs:
        rows += _table_rows("zeta12", tab)
    for tab in mtabs:
        rows += _table_rows("zeta12_mirror_E", tab)
    tv_rows = []
    tvs = []
    nb = int(spec.opt("bootstrap", 1000))
    ncell = 3 ** len(E)
    for c in range(len(times) - 1):
        tv, ci = bootstrap_tv(np.array(codes[c]), np.array(codes[c + 1]), ncell, nb,
                              _seed(spec, S_BOOT, c), paired=design == "paired")
        tvs.append(tv)
        tv_rows.append((times[c], times[c + 1], tv, ci[0], ci[1]))
    metrics = {"times": times, "E": list(E), "replicas": spec.replicas, "tainted": tainted,
               "design": design, "tv": tvs, "tv_ci": [[r[3], r[4]] for r in tv_rows],
               "mirror_tv": [total_variation(tabs[c].mirrored().counts.astype(float),
                                             mtabs[c].counts.astype(float))
                             for c in range(len(times)) if tabs[c].replicas]}
    tables = [Table("tables", ("table", "time", "cell", "count"), rows),
              Table("tv", ("t1", "t2", "tv", "ci_lo", "ci_hi"), tv_rows)]
    if tainted > spec.opt("max_taint", 0.01) * spec.replicas * (len(times) if design ==
                                                                 "independent" else 1):
        metrics["reason"] = "too many replicas touched by the window edge"
        return ExperimentResult("marginals", "undecidable", metrics, tables, spec)
    if len(tvs) < 2:
        metrics["reason"] = "need at least three checkpoints for a trend"
        return ExperimentResult("marginals", "undecidable", metrics, tables, spec)
    ok = all(tvs[j] > tvs[j + 1] for j in range(len(tvs) - 1))
    return ExperimentResult("marginals", _verdict(ok), metrics, tables, spec,
                            ["verdict: TV between consecutive checkpoints decreases"])


# ---------------------------------------------------------------------------
# block bound, percolation, renormalization
# ---------------------------------------------------------------------------


def _cases(spec: ExperimentSpec):
    out = []
    for tok in spec.opt("cases", ()):
        parts = str(tok).split(":")
        if len(parts) != 4:
            raise InvalidArgumentError(f"lemma1 case {tok!r} must be N:n:lam:R")
        out.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
    if not out:
        raise InvalidArgumentError("lemma1 needs at least one case")
    return out


def run_lemma1(spec: ExperimentSpec) -> ExperimentResult:
    rows = []
    ok = True
    for j, (N, n, lam, R) in enumerate(_cases(spec)):
        chk = lemma1_monte_carlo(N, n, ModelParams(lam, R), spec.replicas,
                                 derive_seed(spec.seed, S_LEMMA, j))
        rows.append((N, n, lam, R, chk.replicas, chk.hits, chk.estimate, chk.sigma, chk.bound,
                     chk.tainted, chk.holds))
        ok = ok and chk.holds
    table = Table("cases", ("N", "n", "lam", "R", "replicas", "hits", "estimate", "sigma",
                            "bound", "tainted", "holds"), rows)
    return ExperimentResult("lemma1", _verdict(ok), {"cases": len(rows), "all_hold": ok},
                            [table], spec, ["verdict: estimate <= bound + 3 sigma in every case"])


def run_percolation(spec: ExperimentSpec) -> ExperimentResult:
    ps = [float(p) for p in spec.opt("ps", (0.6, 0.8))]
    ns = [int(n) for n in spec.opt("ns", (1, 2, 3))]
    Ns = [int(N) for N in spec.opt("Ns", (1, 2))]
    events = [PercEventSpec.C(n, N) for n in ns for N in Ns]
    m_lo = min(m for e in events for ms in relevant_points(e).values() for m in ms)
    m_hi = max(m for e in events for ms in relevant_points(e).values() for m in ms)
    lat = EvenLattice(m_lo, m_hi, 0, max(ns))
    seed = derive_seed(spec.seed, S_PERC)
    U = np.stack([sample_uniforms(lat, derive_seed(seed, i)) for i in range(spec.replicas)])
    rows = []
    ok = True
    for p in ps:
        vals = (U < p).astype(np.uint8)
        for e in events:
            exact = exact_event_probability(p, e)
            hits = int(detect_batch(vals, lat, e).sum())
            est = hits / spec.replicas
            sigma = math.sqrt(exact * (1 - exact) / spec.replicas)
            within = abs(est - exact) <= 3 * sigma
            ok = ok and within
            rows.append((p, e.label(), f"n={e.n};N={e.N}", est, exact, sigma, hits, within))
    table = Table("sweep", ("p", "event", "params", "estimate", "exact", "sigma", "hits",
                            "within_3sigma"), rows)
    bad = [r[1] + f"@p={r[0]}" for r in rows if not r[-1]]
    return ExperimentResult("percolation", _verdict(ok),
                            {"comparisons": len(rows), "outside_3sigma": bad}, [table], spec,
                            ["verdict: every estimate within 3 sigma of the exact value"])


def _renorm_window(setup: RenormSetup, region: EvenLattice, margin: int) -> SpaceTimeWindow:
    e = 2 * setup.alpha * setup.slab
    reach = max(abs(region.m_lo), abs(region.m_hi)) + region.n_hi
    W = int(math.ceil(reach * setup.Nhat / 2 + e)) + setup.params.range + margin
    return SpaceTimeWindow(-W, W, float(setup.slab * (region.n_hi + 1)))


def _setup(spec: ExperimentSpec, Nhat: int) -> RenormSetup:
    return RenormSetup(spec.params, int(Nhat), int(spec.opt("Khat", 1)),
                       float(spec.opt("alpha", 1.0)), k=spec.options.get("k"),
                       alpha_source=str(spec.opt("alpha_source", "supplied")))


def run_renorm_closure(spec: ExperimentSpec) -> ExperimentResult:
    grid = [int(v) for v in spec.opt("Nhat", (4, 9))]
    if len(grid) < 2 or grid != sorted(grid) or len(set(grid)) != len(grid):
        raise InvalidArgumentError("Nhat must list at least two increasing values")
    levels = int(spec.opt("levels", 4))
    cols = int(spec.opt("columns", 10))
    rs = tuple(int(r) for r in spec.opt("rs", (1,)))
    region = EvenLattice(-cols, cols, 0, levels)
    rows, ests = [], []
    metrics: dict = {"grid": grid, "rs": list(rs), "protocol":
                     "worst conditional frequency of Psi=0 given the two boxes below, "
                     "over past patterns seen at least min_count times"}
    for j, N in enumerate(grid):
        setup = _setup(spec, N)
        w = _renorm_window(setup, region, spec.margin)
        fields, undecided = [], 0
        phi_counts = {0: 0, 1: 0, 2: 0}
        for i in range(spec.replicas):
            h = generate(spec.params, w, _seed(spec, S_RENORM, j, i))
            f = compute_phi_psi(h, setup, region)
            if not f.complete:
                undecided += 1
                continue
            on = region.parity_mask()
            for v in (0, 1, 2):
                phi_counts[v] += int((f.phi[on] == v).sum())
            fields.append(f.psi())
        try:
            est = estimate_closure(fields, setup.k, rs=rs,
                                   min_count=int(spec.opt("min_count", 30)))
        except EstimationImpossibleError as exc:
            metrics["reason"] = f"Nhat={N}: {exc}"
            return ExperimentResult("renorm-closure", "undecidable", metrics,
                                    [Table("closure", _CLOSURE_COLS, rows)], spec)
        ests.append(est)
        for row in est.rows:
            rows.append((N, setup.Khat, setup.alpha, row.r, row.delta_hat, row.ci[0], row.ci[1],
                         row.pooled, row.pooled_ci[0], row.pooled_ci[1], len(fields), undecided,
                         "".join(map(str, row.worst_pattern)), row.worst_count))
        metrics[f"N{N}"] = {"samples": len(fields), "undecided": undecided,
                            "phi_counts": {str(k): v for k, v in phi_counts.items()},
                            "setup": setup.as_dict()}
    table = Table("closure", _CLOSURE_COLS, rows)
    r0 = rs[0]
    d = [e.row(r0) for e in ests]
    ok = all(d[j + 1].ci[1] < d[j].ci[0] for j in range(len(d) - 1))
    metrics.update(delta_hat=[x.delta_hat for x in d], ci=[list(x.ci) for x in d])
    return ExperimentResult("renorm-closure", _verdict(ok), metrics, [table], spec,
                            ["verdict: the closure interval at each larger Nhat lies "
                             "entirely below the one before it"])


_CLOSURE_COLS = ("Nhat", "Khat", "alpha", "r", "delta_hat", "ci_lo", "ci_hi", "pooled",
                 "pooled_lo", "pooled_hi", "samples", "undecided", "worst_pattern",
                 "worst_count")


def run_expanding(spec: ExperimentSpec) -> ExperimentResult:
    setup = _setup(spec, int(spec.opt("Nhat", 4)))
    H = int(spec.opt("levels", 6))
    sizes = [int(s) for s in spec.opt("sizes", (1, 5, 25))]
    if sizes != sorted(sizes):
        raise InvalidArgumentError("sizes must be ascending")
    sets = {s: list(range(-(s // 2), s - s // 2)) for s in sizes}
    xmax = max(abs(x) for A in sets.values() for x in A)
    imax = math.ceil(2 * xmax / setup.Nhat) + 2
    top = H + 1
    region = EvenLattice(-(imax + H + 3), imax + H + 3, 0, top)
    w = _renorm_window(setup, region, spec.margin)
    origin = 0
    none = {s: 0 for s in sizes}
    reach = right = 0
    undecided = 0
    verify_n = int(spec.opt("verify_replicas", 5))
    rows = []
    for i in range(spec.replicas):
        h = generate(spec.params, w, _seed(spec, S_EXPAND, i))
        f = compute_phi_psi(h, setup, region)
        try:
            v0 = is_expanding(h, f, (0, 0.0), "right", H, verify=i < verify_n)
            per_x = {x: is_expanding(h, f, (x, 0.0), "right", H).value
                     for x in sets[sizes[-1]]}
        except UndecidableError:
            undecided += 1
            continue
        origin += v0.value
        reach += v0.reach
        right += bool(v0.right)
        flags = []
        for s in sizes:
            hit = any(per_x[x] for x in sets[s])
            none[s] += not hit
            flags.append(hit)
        rows.append((i, v0.reach, bool(v0.right), v0.value, *flags))
    n = spec.replicas - undecided
    cols = ("replica", "reach", "gamma", "expanding") + tuple(f"any_of_{s}" for s in sizes)
    metrics = {"setup": setup.as_dict(), "horizon_levels": H, "undecided": undecided,
               "used": n, "approximate": True}
    if n == 0:
        metrics["reason"] = "every replica undecided"
        return ExperimentResult("expanding", "undecidable", metrics, [Table("replicas", cols, rows)],
                                spec)
    ci = clopper_pearson(origin, n)
    p_none = [none[s] / n for s in sizes]
    summary = [(s, none[s], n, none[s] / n, *clopper_pearson(none[s], n)) for s in sizes]
    metrics.update(p_expanding=origin / n, ci=list(ci), p_reach=reach / n, p_gamma=right / n,
                   p_none=p_none)
    ok = ci[0] > 0 and all(p_none[j] > p_none[j + 1] for j in range(len(sizes) - 1))
    tables = [Table("replicas", cols, rows),
              Table("none", ("size", "none", "used", "fraction", "ci_lo", "ci_hi"), summary)]
    return ExperimentResult("expanding", _verdict(ok), metrics, tables, spec,
                            ["percolation part checked up to the horizon (approximate)",
                             "verdict: CI for the origin excludes 0 and P(none) decreases"])


# ---------------------------------------------------------------------------
# exact identities
# ---------------------------------------------------------------------------


def run_identities(spec: ExperimentSpec) -> ExperimentResult:
    """Duality, union coupling, attractiveness, additivity and priority replay."""
    W = int(spec.opt("half_width", 30))
    T = spec.horizon
    w = SpaceTimeWindow(-W, W, T)
    k = int(spec.opt("checkpoints", 10))
    checks = [T * (j + 1) / k for j in range(k)]
    sites = np.arange(w.lo, w.hi + 1)
    viol = {"duality": 0, "union": 0, "attractive": 0, "additive": 0, "priority": 0}
    for i in range(spec.replicas):
        sd = _seed(spec, S_IDENT, i)
        h = generate(spec.params, w, sd)
        rng = np.random.default_rng(sd)
        A = set(rng.choice(sites, rng.integers(1, 12), replace=False).tolist())
        Bs = set(rng.choice(sites, rng.integers(1, 12), replace=False).tolist())
        extra = set(rng.choice(sites, rng.integers(0, 6), replace=False).tolist())
        s = float(rng.uniform(0, T))
        fwd = evolve(h, A, T - s, T).support
        back = dual(h, Bs, T, s).support
        if bool(fwd & Bs) != bool(back & A):
            viol["duality"] += 1
        Bd = Bs - A
        zeta = TwoTypeConfiguration(Configuration.of(A), Configuration.of(Bd))
        r = run_series(h, zeta, checks, box=(w.lo, w.hi), track=False)
        tr = trajectory(h, A | Bd, checks)
        for c in range(k):
            occ = set((np.flatnonzero(r.states[c]) + w.lo).tolist())
            if occ != tr.states[c].support:
                viol["union"] += 1
                break
        big = evolve(h, A | extra, 0.0, T).support
        small = evolve(h, A, 0.0, T).support
        if not small <= big:
            viol["attractive"] += 1
        if evolve(h, A | Bs, 0.0, T).support != small | evolve(h, Bs, 0.0, T).support:
            viol["additive"] += 1
        aud = audit_priority(h, Configuration.of(A), Configuration.of(Bd), T, N=W)
        if not aud.sound:
            viol["priority"] += 1
    rows = [(name, spec.replicas, n) for name, n in viol.items()]
    ok = all(v == 0 for v in viol.values())
    return ExperimentResult("identities", _verdict(ok), {"violations": viol},
                            [Table("violations", ("identity", "replicas", "violations"), rows)],
                            spec, ["verdict: zero violations of every identity"])


RUNNERS: dict[str, Callable[[ExperimentSpec], ExperimentResult]] = {
    "speed": run_speed, "tail": run_tail, "coalesce": run_coalesce, "outcomes": run_outcomes,
    "marginals": run_marginals, "percolation": run_percolation,
    "renorm-closure": run_renorm_closure, "symmetry": run_symmetry, "lemma1": run_lemma1,
    "expanding": run_expanding, "identities": run_identities,
}


def run(spec: ExperimentSpec) -> ExperimentResult:
    return RUNNERS[spec.kind](spec)
