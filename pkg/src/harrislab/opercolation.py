"""Oriented site percolation on the even lattice {(m, n): n >= 0, m + n even}.

A path steps from (m, n) to (m +/- 1, n + 1) and is open when the field is 1
at every point it visits, endpoints included.

Each crossing event used by the renormalization argument is described by the
same three pieces: a source interval on its first level, a per-level
half-plane bound on the allowed columns, and a target interval on its last
level.  ``detect`` runs a level-by-level reachability sweep over the points
that can lie on such a path; ``exact_event_probability`` runs the same sweep
on distributions of reachable sets under a product measure.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

from ._io import write_csv
from .errors import (BudgetExceededError, EstimationImpossibleError, InvalidArgumentError,
                     UndecidableError)

__all__ = [
    "EvenLattice",
    "PercField",
    "PercEventSpec",
    "ClosureEstimate",
    "ClosureRow",
    "open_path_exists",
    "cluster",
    "edges",
    "sample_bernoulli",
    "sample_uniforms",
    "detect",
    "detect_batch",
    "relevant_points",
    "exact_event_probability",
    "estimate_closure",
    "write_field_text",
    "read_field_text",
    "write_sweep_csv",
    "iota",
]

SWEEP_SCHEMA = ("harrislab.percolation.sweep", 1)
INF = math.inf


@dataclass(frozen=True)
class EvenLattice:
    """Points (m, n) of the even lattice with m_lo <= m <= m_hi, n_lo <= n <= n_hi."""

    m_lo: int
    m_hi: int
    n_lo: int
    n_hi: int

    def __post_init__(self):
        if self.m_lo > self.m_hi or self.n_lo > self.n_hi or self.n_lo < 0:
            raise InvalidArgumentError(f"empty or negative lattice region {self}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_hi - self.n_lo + 1, self.m_hi - self.m_lo + 1

    def contains(self, m: int, n: int) -> bool:
        return (self.m_lo <= m <= self.m_hi and self.n_lo <= n <= self.n_hi
                and (m + n) % 2 == 0)

    def points(self) -> list[tuple[int, int]]:
        return [(m, n) for n in range(self.n_lo, self.n_hi + 1)
                for m in range(self.m_lo, self.m_hi + 1) if (m + n) % 2 == 0]

    def parity_mask(self) -> np.ndarray:
        n = np.arange(self.n_lo, self.n_hi + 1)[:, None]
        m = np.arange(self.m_lo, self.m_hi + 1)[None, :]
        return (m + n) % 2 == 0

    def level(self, n: int) -> range:
        start = self.m_lo + ((self.m_lo + n) % 2)
        return range(start, self.m_hi + 1, 2)


@dataclass(frozen=True, eq=False)
class PercField:
    """A {0,1} field on a lattice region; off-lattice cells of ``values`` are 0."""

    lattice: EvenLattice
    values: np.ndarray
    provenance: str = "fixture"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.shape != self.lattice.shape:
            raise InvalidArgumentError(f"values shape {v.shape} != lattice shape {self.lattice.shape}")
        if np.any(v > 1):
            raise InvalidArgumentError("field values must be 0 or 1")
        v = np.where(self.lattice.parity_mask(), v, 0).astype(np.uint8)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, lattice: EvenLattice, value: int, provenance: str = "constant") -> "PercField":
        return cls(lattice, np.full(lattice.shape, value, np.uint8), provenance)

    @classmethod
    def from_function(cls, lattice: EvenLattice, fn, provenance: str = "fixture") -> "PercField":
        v = np.zeros(lattice.shape, np.uint8)
        for m, n in lattice.points():
            v[n - lattice.n_lo, m - lattice.m_lo] = 1 if fn(m, n) else 0
        return cls(lattice, v, provenance)

    def __call__(self, m: int, n: int) -> int:
        if not self.lattice.contains(m, n):
            raise InvalidArgumentError(f"({m}, {n}) is not a point of {self.lattice}")
        return int(self.values[n - self.lattice.n_lo, m - self.lattice.m_lo])

    def get(self, m: int, n: int, default: int = 0) -> int:
        lat = self.lattice
        if lat.m_lo <= m <= lat.m_hi and lat.n_lo <= n <= lat.n_hi:
            return int(self.values[n - lat.n_lo, m - lat.m_lo])
        return default

    def reflect(self) -> "PercField":
        """The field (m, n) -> f(-m, n)."""
        lat = self.lattice
        return PercField(EvenLattice(-lat.m_hi, -lat.m_lo, lat.n_lo, lat.n_hi),
                         self.values[:, ::-1], f"reflect({self.provenance})")

    def with_value(self, m: int, n: int, value: int) -> "PercField":
        self(m, n)
        v = self.values.copy()
        v[n - self.lattice.n_lo, m - self.lattice.m_lo] = value
        return PercField(self.lattice, v, self.provenance)

    def __eq__(self, other):
        return (isinstance(other, PercField) and self.lattice == other.lattice
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.lattice, self.values.tobytes()))


# ---------------------------------------------------------------------------
# paths and clusters
# ---------------------------------------------------------------------------


def _check_point(f: PercField, p):
    m, n = p
    if not f.lattice.contains(m, n):
        raise InvalidArgumentError(f"({m}, {n}) is not a point of {f.lattice}")


def open_path_exists(f: PercField, a: tuple[int, int], b: tuple[int, int]) -> bool:
    _check_point(f, a)
    _check_point(f, b)
    (m0, k0), (m1, k1) = a, b
    if k1 < k0 or (k1 == k0 and m1 != m0) or not f(m0, k0):
        return False
    cur = {m0}
    for n in range(k0 + 1, k1 + 1):
        cur = {m for x in cur for m in (x - 1, x + 1)
               if abs(m - m1) <= k1 - n and f.get(m, n)}
        if not cur:
            return False
    return m1 in cur


def cluster(f: PercField, p: tuple[int, int]) -> frozenset[tuple[int, int]]:
    """All points reachable by open paths from ``p`` inside the region."""
    _check_point(f, p)
    m0, n0 = p
    if not f(m0, n0):
        return frozenset()
    out = {(m0, n0)}
    cur = {m0}
    for n in range(n0 + 1, f.lattice.n_hi + 1):
        cur = {m for x in cur for m in (x - 1, x + 1) if f.get(m, n)}
        if not cur:
            break
        out.update((m, n) for m in cur)
    return frozenset(out)


def edges(f: PercField, A: Iterable[int], n: int, side: str = "right") -> int | None:
    """Rightmost (or leftmost) m at level n reached from A on the first row."""
    lat = f.lattice
    n0 = lat.n_lo
    if not n0 <= n <= lat.n_hi:
        raise InvalidArgumentError(f"level {n} outside [{n0}, {lat.n_hi}]")
    cur = {m for m in A if lat.contains(m, n0) and f(m, n0)}
    for s in range(n0 + 1, n + 1):
        cur = {m for x in cur for m in (x - 1, x + 1) if f.get(m, s)}
    if not cur:
        return None
    return max(cur) if side == "right" else min(cur)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_uniforms(lattice: EvenLattice, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).random(lattice.shape)


def sample_bernoulli(p: float, lattice: EvenLattice, seed: int,
                     uniforms: np.ndarray | None = None) -> PercField:
    """Product Bernoulli(p) field; fields sharing ``seed`` are ordered in p."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"p must lie in [0, 1], got {p}")
    u = sample_uniforms(lattice, seed) if uniforms is None else uniforms
    return PercField(lattice, (u < p).astype(np.uint8), f"bernoulli(p={p}, seed={seed})")


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

KINDS = ("A", "Gamma_n", "Gamma", "Gamma_minus", "C", "Gamma_tilde", "R_Gamma_tilde")


def iota(i: int, n: int) -> int:
    return i + 2 if (i + n) % 2 == 0 else i + 1


@dataclass(frozen=True)
class PercEventSpec:
    """Parameters of one crossing event; use the classmethods to build one."""

    kind: str
    i: int = 0
    k: int = 0
    n: int = 0
    N: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown event kind {self.kind!r}")
        if self.n < 0 or self.k < 0:
            raise InvalidArgumentError("levels must be nonnegative")
        if self.kind in ("A", "Gamma_n", "Gamma", "Gamma_minus") and (self.i + self.k) % 2:
            raise InvalidArgumentError(f"({self.i}, {self.k}) is not a lattice point")
        if self.kind == "C" and self.N < 1:
            raise InvalidArgumentError("C_n(N) needs N >= 1")

    @classmethod
    def A(cls, n, i=0, k=0):
        return cls("A", i, k, n)

    @classmethod
    def Gamma_n(cls, n, i=0, k=0):
        return cls("Gamma_n", i, k, n)

    @classmethod
    def Gamma(cls, horizon, i=0, k=0):
        """The infinite intersection, cut at ``horizon`` levels (Gamma_H)."""
        return cls("Gamma", i, k, horizon)

    @classmethod
    def Gamma_minus(cls, horizon, i=0, k=0):
        return cls("Gamma_minus", i, k, horizon)

    @classmethod
    def C(cls, n, N):
        return cls("C", 0, 0, n, N)

    @classmethod
    def Gamma_tilde(cls, n, i=0):
        return cls("Gamma_tilde", i, 0, n)

    @classmethod
    def R_Gamma_tilde(cls, n, i=0):
        return cls("R_Gamma_tilde", i, 0, n)

    @property
    def horizon_truncated(self) -> bool:
        return self.kind in ("Gamma", "Gamma_minus")

    def label(self) -> str:
        if self.kind == "C":
            return f"C_{self.n}({self.N})"
        if self.kind in ("Gamma_tilde", "R_Gamma_tilde"):
            return f"{self.kind}_{self.n}({self.i})"
        return f"{self.kind}_{self.n}({self.i},{self.k})"


def _floor_gt(x: Fraction) -> int:
    """Smallest integer m with m > x."""
    return math.floor(x) + 1


def _ceil_lt(x: Fraction) -> int:
    """Largest integer m with m < x."""
    return math.ceil(x) - 1


@dataclass(frozen=True)
class _Geometry:
    s0: int
    s1: int
    src: tuple[float, float]
    tgt: tuple[float, float]
    lower: callable
    upper: callable

    def bounds(self, s: int) -> tuple[float, float]:
        """Column range at level s that can lie on a source-to-target path."""
        lo = max(self.lower(s), self.src[0] - (s - self.s0), self.tgt[0] - (self.s1 - s))
        hi = min(self.upper(s), self.src[1] + (s - self.s0), self.tgt[1] + (self.s1 - s))
        return lo, hi

    def level_points(self, s: int) -> list[int]:
        lo, hi = self.bounds(s)
        if lo > hi:
            return []
        if math.isinf(lo) or math.isinf(hi):
            raise InvalidArgumentError("event geometry is unbounded")
        lo = int(lo) + ((int(lo) + s) % 2)
        return list(range(lo, int(hi) + 1, 2))


def _geometry(spec: PercEventSpec) -> _Geometry:
    i, k, n = spec.i, spec.k, spec.n
    F = Fraction
    none = lambda s: -INF  # noqa: E731
    nothing = lambda s: INF  # noqa: E731
    if spec.kind == "A":
        return _Geometry(k, k + n, (i + 2, i + 2), (_floor_gt(F(n, 2)), INF), none, nothing)
    if spec.kind in ("Gamma_n", "Gamma"):
        return _Geometry(k, k + n, (i + 2, i + 2), (-INF, INF),
                         lambda s: _floor_gt(F(s - k, 2) + i + 1), nothing)
    if spec.kind == "Gamma_minus":
        return _Geometry(k, k + n, (i - 2, i - 2), (-INF, INF),
                         none, lambda s: _ceil_lt(-F(s - k, 2) + i - 1))
    if spec.kind == "C":
        return _Geometry(0, n, (1, INF), (1, spec.N), lambda s: 1, nothing)
    if spec.kind == "Gamma_tilde":
        t = iota(i, n)
        return _Geometry(0, n, (math.ceil(F(n, 2) + i), INF), (t, t),
                         lambda s: _floor_gt(F(n, 2) - F(s, 2) + i), nothing)
    t = iota(i, n)
    return _Geometry(0, n, (-INF, math.floor(-F(n, 2) - i)), (-t, -t),
                     none, lambda s: _ceil_lt(-F(n, 2) + F(s, 2) - i))


def relevant_points(spec: PercEventSpec) -> dict[int, list[int]]:
    """Per level, the columns that can lie on a path realizing the event."""
    g = _geometry(spec)
    return {s: g.level_points(s) for s in range(g.s0, g.s1 + 1)}


def detect(f: PercField, spec: PercEventSpec) -> bool:
    """Exact indicator of the event on ``f``; raises if the region is too small."""
    rel = relevant_points(spec)
    lat = f.lattice
    missing = sorted({s for s, ms in rel.items() for m in ms if not lat.contains(m, s)})
    if missing:
        rows = ", ".join(str(s) for s in missing)
        raise UndecidableError(f"{spec.label()}: region {lat} misses points on levels {rows}",
                               missing=tuple(missing))
    levels = sorted(rel)
    cur = {m for m in rel[levels[0]] if f(m, levels[0])}
    for s in levels[1:]:
        allowed = set(rel[s])
        cur = {m for x in cur for m in (x - 1, x + 1) if m in allowed and f(m, s)}
        if not cur:
            return False
    return bool(cur)


def detect_batch(values: np.ndarray, lattice: EvenLattice, spec: PercEventSpec) -> np.ndarray:
    """``detect`` over a stack of fields: ``values`` has shape (batch, *lattice.shape)."""
    v = np.asarray(values)
    if v.ndim != 3 or v.shape[1:] != lattice.shape:
        raise InvalidArgumentError(f"values must have shape (batch, {lattice.shape})")
    rel = relevant_points(spec)
    missing = sorted({s for s, ms in rel.items() for m in ms if not lattice.contains(m, s)})
    if missing:
        raise UndecidableError(f"{spec.label()}: region {lattice} misses levels {missing}",
                               missing=tuple(missing))
    levels = sorted(rel)
    ms = np.array(rel[levels[0]], np.int64)
    cur = v[:, levels[0] - lattice.n_lo, ms - lattice.m_lo].astype(bool)
    for s in levels[1:]:
        nxt = np.array(rel[s], np.int64)
        if nxt.size == 0 or ms.size == 0:
            return np.zeros(v.shape[0], bool)
        reach = np.zeros((v.shape[0], nxt.size), bool)
        pos = {int(m): j for j, m in enumerate(ms)}
        for j, m in enumerate(nxt.tolist()):
            for d in (-1, 1):
                q = pos.get(m + d)
                if q is not None:
                    reach[:, j] |= cur[:, q]
        cur = reach & v[:, s - lattice.n_lo, nxt - lattice.m_lo].astype(bool)
        ms = nxt
    return cur.any(axis=1)


def exact_event_probability(p: float, spec: PercEventSpec, budget: int = 1 << 22) -> float:
    """P_p(event) by dynamic programming over reachable sets, level by level.

    The state after level s is the set of open relevant points at s reached by
    an open path from the sources; its law is propagated exactly.  ``budget``
    caps (number of states) x (2 ** candidate count) per level.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"p must lie in [0, 1], got {p}")
    rel = relevant_points(spec)
    levels = sorted(rel)
    q = 1.0 - p
    first = rel[levels[0]]
    if 1 << len(first) > budget:
        raise BudgetExceededError(f"{len(first)} source points exceed the budget", required=len(first))
    dist: dict[frozenset, float] = defaultdict(float)
    for bits in itertools.product((0, 1), repeat=len(first)):
        on = frozenset(m for m, b in zip(first, bits) if b)
        k = len(on)
        dist[on] += p ** k * q ** (len(first) - k)
    dist.pop(frozenset(), None)
    for s in levels[1:]:
        allowed = set(rel[s])
        new: dict[frozenset, float] = defaultdict(float)
        cost = 0
        for state, w in dist.items():
            cand = sorted({m for x in state for m in (x - 1, x + 1) if m in allowed})
            cost += 1 << len(cand)
            if cost > budget:
                raise BudgetExceededError(
                    f"{spec.label()}: level {s} needs more than {budget} transitions",
                    required=len(allowed))
            for bits in itertools.product((0, 1), repeat=len(cand)):
                on = frozenset(m for m, b in zip(cand, bits) if b)
                if on:
                    k = len(on)
                    new[on] += w * p ** k * q ** (len(cand) - k)
        dist = new
        if not dist:
            return 0.0
    return float(sum(dist.values()))


# ---------------------------------------------------------------------------
# closure estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosureRow:
    r: int
    delta_hat: float
    ci: tuple[float, float]
    worst_pattern: tuple[int, ...] | None
    worst_count: int
    patterns_used: int
    observations: int
    pooled: float
    pooled_ci: tuple[float, float]


@dataclass(frozen=True)
class ClosureEstimate:
    """Worst conditional all-closed frequency per r, r-th-root normalized.

    Protocol: on every level n above the first, disjoint r-tuples of lattice
    points spaced ``2k + 2`` apart are scanned; each observation is labeled by
    the values at (m +/- 1, n - 1) of its r points.  Patterns seen at least
    ``min_count`` times are kept; delta_hat is the largest all-closed
    frequency among them raised to 1/r, with a Clopper-Pearson interval
    Bonferroni-corrected over the kept patterns.
    """

    k: int
    rows: tuple[ClosureRow, ...]
    samples: int
    confidence: float
    protocol: str = "past-row patterns at (m-1, n-1), (m+1, n-1); disjoint tuples; Bonferroni CP"

    def row(self, r: int) -> ClosureRow:
        for row in self.rows:
            if row.r == r:
                return row
        raise KeyError(r)

    @property
    def delta_hat(self) -> float:
        return max(row.delta_hat for row in self.rows)


def _cp(x: int, n: int, alpha: float) -> tuple[float, float]:
    lo = 0.0 if x == 0 else float(sps.beta.ppf(alpha / 2, x, n - x + 1))
    hi = 1.0 if x == n else float(sps.beta.ppf(1 - alpha / 2, x + 1, n - x))
    return lo, hi


def estimate_closure(samples: Sequence[PercField], k: int, rs: Sequence[int] = (1, 2),
                     min_samples: int = 100, min_count: int = 30,
                     confidence: float = 0.95) -> ClosureEstimate:
    if len(samples) < min_samples:
        raise EstimationImpossibleError(
            f"closure estimation needs at least {min_samples} samples, got {len(samples)}",
            count=len(samples))
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    lat = samples[0].lattice
    if any(s.lattice != lat for s in samples):
        raise InvalidArgumentError("samples must share one lattice region")
    gap = 2 * k + 2
    rows = []
    for r in rs:
        tuples = []
        for n in range(lat.n_lo + 1, lat.n_hi + 1):
            ms = [m for m in lat.level(n) if m - 1 >= lat.m_lo and m + 1 <= lat.m_hi]
            if not ms:
                continue
            span = (r - 1) * gap
            m = ms[0]
            while m + span <= ms[-1]:
                tuples.append((n, tuple(m + j * gap for j in range(r))))
                m += span + gap
        if not tuples:
            raise EstimationImpossibleError(f"region too narrow for {r} points spaced {gap} apart")
        total: Counter = Counter()
        closed: Counter = Counter()
        for f in samples:
            v, n0, m0 = f.values, lat.n_lo, lat.m_lo
            for n, ms in tuples:
                key = tuple(int(v[n - 1 - n0, m + d - m0]) for m in ms for d in (-1, 1))
                total[key] += 1
                if all(v[n - n0, m - m0] == 0 for m in ms):
                    closed[key] += 1
        kept = [key for key, c in total.items() if c >= min_count]
        obs = sum(total.values())
        nclosed = sum(closed.values())
        alpha = 1 - confidence
        plo, phi = _cp(nclosed, obs, alpha)
        pooled = (nclosed / obs) ** (1 / r)
        pooled_ci = (plo ** (1 / r), phi ** (1 / r))
        if not kept:
            raise EstimationImpossibleError(
                f"no past pattern observed {min_count} times for r={r}", count=obs)
        worst = max(kept, key=lambda key: (closed[key] / total[key], total[key], key))
        x, nn = closed[worst], total[worst]
        lo, hi = _cp(x, nn, alpha / len(kept))
        rows.append(ClosureRow(r, (x / nn) ** (1 / r), (lo ** (1 / r), hi ** (1 / r)),
                               worst, nn, len(kept), obs, pooled, pooled_ci))
    return ClosureEstimate(k, tuple(rows), len(samples), confidence)


# ---------------------------------------------------------------------------
# text fixtures and sweep csv
# ---------------------------------------------------------------------------

_FIELD_MAGIC = "# percfield v1"


def write_field_text(f: PercField, path, extra: str | None = None) -> Path:
    """One line per level (lowest first); '1'/'0' on lattice points, '.' off them.

    Header: ``# percfield v1 m_lo=.. m_hi=.. n_lo=.. n_hi=.. parity=even``.
    """
    lat = f.lattice
    lines = [f"{_FIELD_MAGIC} m_lo={lat.m_lo} m_hi={lat.m_hi} n_lo={lat.n_lo} "
             f"n_hi={lat.n_hi} parity=even"]
    if extra:
        lines.append(f"# {extra}")
    for n in range(lat.n_lo, lat.n_hi + 1):
        row = []
        for m in range(lat.m_lo, lat.m_hi + 1):
            row.append(str(f.get(m, n)) if (m + n) % 2 == 0 else ".")
        lines.append("".join(row))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field_text(path, provenance: str = "fixture") -> PercField:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(_FIELD_MAGIC):
        raise InvalidArgumentError(f"{path}: not a percfield text file")
    kv = dict(tok.split("=", 1) for tok in lines[0][len(_FIELD_MAGIC):].split())
    lat = EvenLattice(int(kv["m_lo"]), int(kv["m_hi"]), int(kv["n_lo"]), int(kv["n_hi"]))
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    if len(body) != lat.shape[0] or any(len(ln) != lat.shape[1] for ln in body):
        raise InvalidArgumentError(f"{path}: grid does not match header {lat}")
    v = np.zeros(lat.shape, np.uint8)
    for r, ln in enumerate(body):
        n = lat.n_lo + r
        for c, ch in enumerate(ln):
            on_lattice = (lat.m_lo + c + n) % 2 == 0
            if on_lattice and ch not in "01":
                raise InvalidArgumentError(f"{path}: bad cell {ch!r} at level {n}")
            if not on_lattice and ch != ".":
                raise InvalidArgumentError(f"{path}: off-lattice cell must be '.' at level {n}")
            v[r, c] = 1 if ch == "1" else 0
    return PercField(lat, v, provenance)


def write_sweep_csv(path, rows: Iterable[Sequence]):
    """rows of (p, event, params, estimate, ci_lo, ci_hi, method)."""
    cols = ["p", "event", "params", "estimate", "ci_lo", "ci_hi", "method"]
    return write_csv(path, *SWEEP_SCHEMA, cols, rows)
