"""The classic contact process read off a Harris realization.

Everything here is a sweep over the realization's global event index: the
forward sweep gives xi^A_{s,t}, the backward sweep gives the dual, and the
edge statistics are built from many independent realizations.

Configurations may carry half-line tails (``left``/``right``).  On a finite
window a tail is truncated at the window edge and that side is treated as
open: sites near it are marked contaminated, meaning their value may depend
on what happens outside.  Observables touching a contaminated site are
reported as tainted instead of being returned silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

from . import _kernels as K
from ._io import write_csv
from .errors import EstimationImpossibleError, InvalidArgumentError
from .harris import HarrisRealization, ModelParams, SpaceTimeWindow, derive_seed, generate

__all__ = [
    "Configuration",
    "Survived",
    "Trajectory",
    "EdgeStats",
    "EdgeSpeedEstimate",
    "WindowPolicy",
    "Lemma1Check",
    "evolve",
    "trajectory",
    "extinction_time",
    "dual",
    "edge_stats",
    "edge_speed",
    "lemma1_bound",
    "lemma1_monte_carlo",
    "rightmost",
    "write_trajectory_csv",
    "write_edge_stats_csv",
    "NEG_INF",
]

NEG_INF = -math.inf
TRAJECTORY_SCHEMA = ("harrislab.contact.trajectory", 1)
EDGE_SCHEMA = ("harrislab.contact.edge_stats", 1)


@dataclass(frozen=True)
class Configuration:
    """Occupied set: a finite support plus optional half-line tails.

    ``left=a`` adds every site x <= a, ``right=b`` adds every x >= b.
    """

    support: frozenset[int] = frozenset()
    left: int | None = None
    right: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(int(x) for x in self.support))

    @classmethod
    def of(cls, sites: Iterable[int]) -> "Configuration":
        return cls(frozenset(sites))

    @classmethod
    def half_line(cls, upper: int = 0) -> "Configuration":
        """The set (-inf, upper]."""
        return cls(frozenset(), left=upper)

    @property
    def finite(self) -> bool:
        return self.left is None and self.right is None

    def __contains__(self, x: int) -> bool:
        return (x in self.support or (self.left is not None and x <= self.left)
                or (self.right is not None and x >= self.right))

    def __iter__(self):
        if not self.finite:
            raise InvalidArgumentError("cannot enumerate an infinite configuration")
        return iter(sorted(self.support))

    def __len__(self):
        if not self.finite:
            raise InvalidArgumentError("infinite configuration has no length")
        return len(self.support)

    def __bool__(self):
        return bool(self.support) or not self.finite

    def sorted(self) -> list[int]:
        return sorted(self.support)

    def restrict(self, lo: int, hi: int) -> frozenset[int]:
        out = {x for x in self.support if lo <= x <= hi}
        if self.left is not None:
            out.update(range(lo, min(self.left, hi) + 1))
        if self.right is not None:
            out.update(range(max(self.right, lo), hi + 1))
        return frozenset(out)


def as_configuration(A) -> Configuration:
    return A if isinstance(A, Configuration) else Configuration.of(A)


@dataclass(frozen=True)
class Survived:
    """Right-censored extinction time: still alive at ``horizon``."""

    horizon: float


@dataclass(frozen=True)
class Trajectory:
    times: tuple[float, ...]
    states: tuple[Configuration, ...]
    contaminated: tuple[frozenset[int], ...]
    seed: int | None = None
    replica: int = 0


def rightmost(c: Configuration | Iterable[int]) -> float:
    """max of the support, with sup of the empty set = -inf."""
    c = as_configuration(c)
    if c.right is not None:
        return math.inf
    if c.support:
        return max(c.support)
    return NEG_INF if c.left is None else c.left


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _initial(h: HarrisRealization, A: Configuration):
    w = h.window
    finite = [x for x in A.support if not (A.left is not None and x <= A.left)
              and not (A.right is not None and x >= A.right)]
    state = h.mask(finite)
    open_l = A.left is not None
    open_r = A.right is not None
    if open_l and A.left >= w.lo:
        state[: min(A.left, w.hi) - w.lo + 1] = 1
    if open_r and A.right <= w.hi:
        state[max(A.right, w.lo) - w.lo:] = 1
    return state, open_l, open_r


def _check_times(h, s, t):
    if s > t:
        raise InvalidArgumentError(f"need s <= t, got s={s}, t={t}")
    if s < 0 or t > h.window.horizon:
        raise InvalidArgumentError(f"times [{s}, {t}] outside [0, {h.window.horizon}]")


def _sweep(h: HarrisRealization, A: Configuration, s: float, times: Sequence[float],
           track: bool):
    state, open_l, open_r = _initial(h, A)
    w = h.window
    checks = np.asarray(times, dtype=np.float64)
    allowed = np.ones(w.n_sites, np.bool_)
    snaps, csnaps, _, _ = K.forward_classic(h.times, h.kinds, h.src, h.dst, w.lo, state, allowed,
                                            float(s), checks, w.lo, w.hi, int(h.params.range),
                                            open_l, open_r, track)
    return snaps, csnaps


def evolve(h: HarrisRealization, A, s: float, t: float) -> Configuration:
    """xi^A_{s,t} on the window of ``h`` (tails truncated at the window edge)."""
    _check_times(h, s, t)
    snaps, _ = _sweep(h, as_configuration(A), s, [t], track=False)
    return Configuration(frozenset((np.flatnonzero(snaps[0]) + h.window.lo).tolist()))


def trajectory(h: HarrisRealization, A, times: Sequence[float], s: float = 0.0,
               replica: int = 0) -> Trajectory:
    times = tuple(float(t) for t in times)
    if list(times) != sorted(times):
        raise InvalidArgumentError("trajectory times must be ascending")
    if times:
        _check_times(h, s, times[0])
        _check_times(h, s, times[-1])
    snaps, csnaps = _sweep(h, as_configuration(A), s, times, track=True)
    lo = h.window.lo
    states = tuple(Configuration(frozenset((np.flatnonzero(r) + lo).tolist())) for r in snaps)
    cont = tuple(frozenset((np.flatnonzero(r) + lo).tolist()) for r in csnaps)
    return Trajectory(times, states, cont, h.seed, replica)


def extinction_time(h: HarrisRealization, A) -> float | Survived:
    """T^A = first time the occupied set is empty, censored at the horizon."""
    A = as_configuration(A)
    if not A.finite:
        raise InvalidArgumentError("extinction time needs a finite initial set")
    if not A.support:
        return 0.0
    state = h.mask(A.support)
    T = float(h.window.horizon)
    r = K.extinction_classic(h.times, h.kinds, h.src, h.dst, h.window.lo, state, 0.0, T)
    return Survived(T) if r < 0 else float(r)


def dual(h: HarrisRealization, B, t: float, s: float) -> Configuration:
    """The dual at backward time s: {x : (x, t - s) -> B x {t}}."""
    if s > t:
        raise InvalidArgumentError(f"dual needs s <= t, got s={s}, t={t}")
    _check_times(h, t - s, t)
    B = as_configuration(B)
    if not B.finite:
        raise InvalidArgumentError("dual needs a finite target set")
    mark = h.mask(B.support)
    allowed = np.ones(h.window.n_sites, np.bool_)
    K.backward_classic(h.times, h.kinds, h.src, h.dst, h.window.lo, mark, allowed,
                       float(t - s), float(t))
    return Configuration(frozenset((np.flatnonzero(mark) + h.window.lo).tolist()))


# ---------------------------------------------------------------------------
# edge statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowPolicy:
    """Half-width W = ceil(kappa * lam * R * T) + margin around the origin."""

    kappa: float = 4.0
    margin: int = 10

    def __post_init__(self):
        if self.kappa < 0 or self.margin < 0:
            raise InvalidArgumentError("window policy needs kappa >= 0 and margin >= 0")

    def half_width(self, params: ModelParams, horizon: float) -> int:
        return int(math.ceil(self.kappa * params.lam * params.range * horizon)) + self.margin

    def window(self, params: ModelParams, horizon: float) -> SpaceTimeWindow:
        W = max(self.half_width(params, horizon), params.range)
        return SpaceTimeWindow(-W, W, horizon)


@dataclass
class EdgeStats:
    """r_t of xi^{(-inf,0]} for each replica (rows) and sampled time (columns)."""

    times: np.ndarray
    r: np.ndarray
    tainted: np.ndarray
    seeds: np.ndarray

    @property
    def replicas(self) -> int:
        return int(self.r.shape[0])

    def slopes(self) -> np.ndarray:
        """Per-replica r_T / T at the last sampled time (nan when tainted)."""
        T = float(self.times[-1])
        s = self.r[:, -1] / T
        return np.where(self.tainted[:, -1], np.nan, s)


@dataclass(frozen=True)
class EdgeSpeedEstimate:
    mean: float
    stderr: float
    ci: tuple[float, float]
    n_used: int
    n_tainted: int
    n_empty: int
    horizon: float


def _edge_from(row: np.ndarray, crow: np.ndarray, lo: int) -> tuple[float, bool]:
    occ = np.flatnonzero(row)
    cont = np.flatnonzero(crow)
    if occ.size == 0:
        return NEG_INF, bool(cont.size)
    r = int(occ[-1])
    return float(r + lo), bool(cont.size and cont[-1] >= r)


def edge_stats(params: ModelParams, policy: WindowPolicy, times: Sequence[float],
               replicas: int, seed: int, upper: int = 0) -> EdgeStats:
    times = np.asarray(sorted(float(t) for t in times))
    if times.size == 0:
        raise InvalidArgumentError("edge_stats needs at least one time")
    w = policy.window(params, float(times[-1]))
    A = Configuration.half_line(upper)
    r = np.empty((replicas, times.size))
    tainted = np.zeros((replicas, times.size), np.bool_)
    seeds = np.empty(replicas, np.uint64)
    for i in range(replicas):
        sd = derive_seed(seed, i)
        seeds[i] = sd
        h = generate(params, w, sd)
        snaps, csnaps = _sweep(h, A, 0.0, times, track=True)
        for c in range(times.size):
            r[i, c], tainted[i, c] = _edge_from(snaps[c], csnaps[c], w.lo)
    return EdgeStats(times, r, tainted, seeds)


def edge_speed(params: ModelParams, policy: WindowPolicy, horizon: float, replicas: int,
               seed: int, confidence: float = 0.95) -> EdgeSpeedEstimate:
    """Mean of r_T / T over untainted replicas started from (-inf, 0]."""
    st = edge_stats(params, policy, [horizon], replicas, seed)
    rT = st.r[:, -1]
    bad = st.tainted[:, -1]
    empty = ~np.isfinite(rT) & ~bad
    use = ~bad & np.isfinite(rT)
    n = int(use.sum())
    if n == 0:
        raise EstimationImpossibleError(
            f"no usable replica at T={horizon}: {int(bad.sum())} tainted, {int(empty.sum())} empty",
            count=n)
    v = rT[use] / horizon
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    z = float(sps.norm.ppf(0.5 + confidence / 2))
    return EdgeSpeedEstimate(mean, se, (mean - z * se, mean + z * se), n,
                             int(bad.sum()), int(empty.sum()), float(horizon))


# ---------------------------------------------------------------------------
# small-population bound
# ---------------------------------------------------------------------------


def lemma1_bound(N: int, n: int, params: ModelParams) -> float:
    """(1 - (1 - e^{-1})^N e^{-2RN lam})^n."""
    if N < 1 or n < 0:
        raise InvalidArgumentError("need N >= 1 and n >= 0")
    q = (1.0 - math.exp(-1.0)) ** N * math.exp(-2.0 * params.range * N * params.lam)
    return (1.0 - q) ** n


@dataclass(frozen=True)
class Lemma1Check:
    estimate: float
    sigma: float
    bound: float
    replicas: int
    hits: int
    tainted: int

    @property
    def holds(self) -> bool:
        return self.estimate <= self.bound + 3.0 * self.sigma


def lemma1_monte_carlo(N: int, n: int, params: ModelParams, replicas: int, seed: int,
                       half_width: int | None = None) -> Lemma1Check:
    """Estimate P(|xi^{0}_k| <= N for k = 0..n, xi^{0}_n nonempty).

    A replica whose occupied set reached the window edge is counted as a hit
    (the conservative direction for an upper-bound check) and reported.
    """
    bound = lemma1_bound(N, n, params)
    W = half_width if half_width is not None else int(
        math.ceil(4 * params.lam * params.range * max(n, 1))) + 4 * params.range + 10
    w = SpaceTimeWindow(-W, W, float(n))
    checks = np.arange(1, n + 1, dtype=np.float64)
    allowed = np.ones(w.n_sites, np.bool_)
    hits = tainted = 0
    for i in range(replicas):
        h = generate(params, w, derive_seed(seed, i))
        state = h.mask([0])
        if n == 0:
            hits += 1
            continue
        snaps, _, sides, _ = K.forward_classic(h.times, h.kinds, h.src, h.dst, w.lo, state,
                                               allowed, 0.0, checks, w.lo, w.hi,
                                               params.range, False, False, True)
        if sides[0] or sides[1]:
            tainted += 1
            hits += 1
            continue
        counts = snaps.sum(axis=1)
        if counts[-1] > 0 and counts.max() <= N:
            hits += 1
    p = hits / replicas
    return Lemma1Check(p, math.sqrt(p * (1 - p) / replicas), bound, replicas, hits, tainted)


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------


def write_trajectory_csv(path, trajectories: Sequence[Trajectory]):
    """Columns (replica, time, site, state); only occupied sites are listed."""
    rows = []
    for tr in trajectories:
        for t, c in zip(tr.times, tr.states):
            rows.extend((tr.replica, t, x, 1) for x in c.sorted())
    return write_csv(path, *TRAJECTORY_SCHEMA, ["replica", "time", "site", "state"], rows)


def write_edge_stats_csv(path, st: EdgeStats):
    rows = []
    for i in range(st.replicas):
        for c, T in enumerate(st.times):
            r = st.r[i, c]
            rows.append((i, float(T), int(r) if np.isfinite(r) else NEG_INF, bool(st.tainted[i, c])))
    return write_csv(path, *EDGE_SCHEMA, ["replica", "T", "r_T", "tainted"], rows)
