"""Small statistical helpers shared by the runners."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from ..errors import EstimationImpossibleError, InvalidArgumentError

MIN_EXPECTED = 5.0


def clopper_pearson(x: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (math.nan, math.nan)
    ci = sps.binomtest(int(x), int(n)).proportion_ci(confidence, method="exact")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ChiSquare:
    statistic: float
    dof: int
    pvalue: float
    cells: tuple[str, ...]
    n1: int
    n2: int

    def rejected(self, level: float) -> bool:
        return self.pvalue < level


def _expected_ok(c1: int, c2: int, n1: int, n2: int) -> bool:
    tot = c1 + c2
    n = n1 + n2
    if n1 == 0 or n2 == 0:
        return False
    return tot * min(n1, n2) / n >= MIN_EXPECTED


def pool_ordered(keys: Sequence, c1: Sequence[int], c2: Sequence[int]):
    """Merge adjacent cells left to right until each pooled cell has expected
    count >= 5 in both samples; a short remainder joins the last pooled cell."""
    n1, n2 = int(sum(c1)), int(sum(c2))
    out_k, out1, out2 = [], [], []
    cur_k, a, b = [], 0, 0
    for k, x, y in zip(keys, c1, c2):
        cur_k.append(k)
        a += int(x)
        b += int(y)
        if _expected_ok(a, b, n1, n2):
            out_k.append(cur_k)
            out1.append(a)
            out2.append(b)
            cur_k, a, b = [], 0, 0
    if cur_k:
        if out_k:
            out_k[-1] = out_k[-1] + cur_k
            out1[-1] += a
            out2[-1] += b
        else:
            out_k.append(cur_k)
            out1.append(a)
            out2.append(b)
    return out_k, out1, out2


def pool_categorical(keys: Sequence, c1: Sequence[int], c2: Sequence[int]):
    """Cells with enough expected count stay; the rest are lumped into one
    'other' cell (keys in sorted order).  If 'other' is still short it absorbs
    the smallest kept cell, repeatedly."""
    n1, n2 = int(sum(c1)), int(sum(c2))
    cells = sorted(zip(keys, c1, c2), key=lambda t: (-(t[1] + t[2]), str(t[0])))
    keep = [c for c in cells if _expected_ok(c[1], c[2], n1, n2)]
    rest = [c for c in cells if not _expected_ok(c[1], c[2], n1, n2)]
    other_k = sorted((c[0] for c in rest), key=str)
    oa, ob = sum(c[1] for c in rest), sum(c[2] for c in rest)
    while rest and not _expected_ok(oa, ob, n1, n2) and keep:
        k, x, y = keep.pop()
        other_k.append(k)
        oa += x
        ob += y
    out_k = [[c[0]] for c in keep]
    out1 = [int(c[1]) for c in keep]
    out2 = [int(c[2]) for c in keep]
    if other_k:
        out_k.append(other_k)
        out1.append(int(oa))
        out2.append(int(ob))
    return out_k, out1, out2


def two_sample_chi2(sample1: Mapping, sample2: Mapping, ordered: bool = False) -> ChiSquare:
    """Homogeneity test between two count tables (dicts key -> count)."""
    keys = sorted(set(sample1) | set(sample2), key=(None if ordered else str))
    c1 = [int(sample1.get(k, 0)) for k in keys]
    c2 = [int(sample2.get(k, 0)) for k in keys]
    n1, n2 = sum(c1), sum(c2)
    if n1 == 0 or n2 == 0:
        raise EstimationImpossibleError("chi-square test needs two nonempty samples",
                                        count=min(n1, n2))
    pool = pool_ordered if ordered else pool_categorical
    groups, p1, p2 = pool(keys, c1, c2)
    labels = tuple("|".join(str(k) for k in g) for g in groups)
    if len(groups) < 2:
        return ChiSquare(0.0, 0, 1.0, labels, n1, n2)
    table = np.array([p1, p2], dtype=float)
    stat, p, dof, _ = sps.chi2_contingency(table, correction=False)
    return ChiSquare(float(stat), int(dof), float(p), labels, n1, n2)


def total_variation(c1: np.ndarray, c2: np.ndarray) -> float:
    a = c1 / c1.sum()
    b = c2 / c2.sum()
    return 0.5 * float(np.abs(a - b).sum())


def bootstrap_tv(codes1: np.ndarray, codes2: np.ndarray, ncells: int, resamples: int,
                 seed: int, confidence: float = 0.95,
                 paired: bool = False) -> tuple[float, tuple[float, float]]:
    """TV between the laws of two samples of cell codes with a percentile CI.

    Paired samples are resampled jointly; otherwise each side on its own."""
    codes1 = np.asarray(codes1, np.int64)
    codes2 = np.asarray(codes2, np.int64)
    n1, n2 = codes1.shape[0], codes2.shape[0]
    if paired and n1 != n2:
        raise InvalidArgumentError("paired samples need equal lengths")
    if n1 == 0 or n2 == 0:
        raise EstimationImpossibleError("empty sample")
    point = total_variation(np.bincount(codes1, minlength=ncells).astype(float),
                            np.bincount(codes2, minlength=ncells).astype(float))
    rng = np.random.default_rng(seed)
    tvs = np.empty(resamples)
    for b in range(resamples):
        i1 = rng.integers(0, n1, n1)
        i2 = i1 if paired else rng.integers(0, n2, n2)
        tvs[b] = total_variation(np.bincount(codes1[i1], minlength=ncells).astype(float),
                                 np.bincount(codes2[i2], minlength=ncells).astype(float))
    q = (1 - confidence) / 2
    return point, (float(np.quantile(tvs, q)), float(np.quantile(tvs, 1 - q)))


def fit_tail(values: Sequence[float], x_start: int = 1, min_count: int = 20,
             statistic: str = "r1", horizon: float | None = None, censored: int = 0):
    """Weighted least squares of log P(V >= x) on x over integer thresholds.

    A threshold enters when at least ``min_count`` values reach it and it is
    not reached by every value.  The weight is the inverse delta-method
    variance n*S/(1-S) of log S.  With fewer than three usable thresholds the
    slope, intercept and correlation are NaN (see ``TailFit.usable``).
    """
    from sklearn.linear_model import LinearRegression

    from .types import TailFit

    n = len(values)
    if n == 0:
        raise EstimationImpossibleError("no replicas to fit", count=0)
    v = np.asarray(values, dtype=float)
    finite = v[np.isfinite(v)]
    top = int(finite.max()) if finite.size else x_start
    xs = list(range(x_start, max(top, x_start) + 1))
    counts = [int(np.sum(v >= x)) for x in xs]
    surv = [c / n for c in counts]
    used = [i for i, c in enumerate(counts) if min_count <= c < n]
    slope = intercept = corr = math.nan
    if len(used) >= 3:
        X = np.array([[xs[i]] for i in used], float)
        y = np.log([surv[i] for i in used])
        w = np.array([n * surv[i] / (1 - surv[i]) for i in used])
        reg = LinearRegression().fit(X, y, sample_weight=w)
        slope, intercept = float(reg.coef_[0]), float(reg.intercept_)
        corr = float(np.corrcoef(X[:, 0], y)[0, 1])
    return TailFit(statistic, horizon, tuple(xs), tuple(surv), tuple(counts), n, censored,
                   tuple(xs[i] for i in used), slope, intercept, corr)
