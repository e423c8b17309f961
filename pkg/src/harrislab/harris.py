"""Harris graphical construction on a bounded space-time window.

A realization holds one death stream per site and one arrow stream per
ordered pair of sites at distance at most ``range`` inside the window.  Each
stream is drawn from its own sub-seed derived from the master seed and the
stream identity, so the same seed gives the same marks on the overlap of two
different windows.
"""

from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .errors import EmptyWindowError, InvalidArgumentError

__all__ = [
    "ModelParams",
    "SpaceTimeWindow",
    "HarrisRealization",
    "PathQuery",
    "generate",
    "from_marks",
    "path_exists",
    "reachable_set",
    "derive_seed",
    "write_fixture",
    "read_fixture",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class ModelParams:
    """Infection rate per directed pair and interaction radius."""

    lam: float
    range: int = 1

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidArgumentError(f"lambda must be >= 0, got {self.lam}")
        if int(self.range) != self.range or self.range < 1:
            raise InvalidArgumentError(f"range must be an integer >= 1, got {self.range}")


@dataclass(frozen=True)
class SpaceTimeWindow:
    lo: int
    hi: int
    horizon: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise EmptyWindowError(f"empty window: lo={self.lo} > hi={self.hi}")
        if not self.horizon >= 0:
            raise InvalidArgumentError(f"horizon must be >= 0, got {self.horizon}")

    @property
    def n_sites(self) -> int:
        return self.hi - self.lo + 1

    def contains(self, site: int) -> bool:
        return self.lo <= site <= self.hi

    def sites(self) -> range:
        return range(self.lo, self.hi + 1)


@dataclass(frozen=True)
class PathQuery:
    source: tuple[int, float]
    target: tuple[int, float]
    region: tuple[int, int] | None = None


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Injective in the last key for fixed preceding keys (a chain of bijections)."""
    h = _mix64(master)
    for k in keys:
        h = _mix64(h ^ ((k + K.SITE_OFFSET) & _MASK64))
    return h


class HarrisRealization:
    """Immutable set of Poisson marks on a window.

    Attributes mirror the storage layout: per-site death times (CSR over
    sites), per-pair arrow times (CSR over pairs), and the global event index
    ``times, kinds, src, dst`` sorted by (time, kind, source, target).
    """

    def __init__(self, params, window, seed, death_ptr, death_times,
                 pair_src, pair_dst, arrow_ptr, arrow_times):
        self.params = params
        self.window = window
        self.seed = seed
        self.death_ptr = death_ptr
        self.death_times = death_times
        self.pair_src = pair_src
        self.pair_dst = pair_dst
        self.arrow_ptr = arrow_ptr
        self.arrow_times = arrow_times
        self.times, self.kinds, self.src, self.dst = K.build_index(
            window.lo, death_ptr, death_times, pair_src, pair_dst, arrow_ptr, arrow_times)
        self._pair_index = None
        for a in (self.death_times, self.arrow_times, self.times, self.kinds,
                  self.src, self.dst):
            a.flags.writeable = False

    # -- stream access -----------------------------------------------------

    def deaths(self, site: int) -> np.ndarray:
        i = site - self.window.lo
        return self.death_times[self.death_ptr[i]:self.death_ptr[i + 1]]

    def arrows(self, source: int, target: int) -> np.ndarray:
        if self._pair_index is None:
            self._pair_index = {
                (int(s), int(d)): p for p, (s, d) in enumerate(zip(self.pair_src, self.pair_dst))
            }
        p = self._pair_index.get((source, target))
        if p is None:
            return np.empty(0)
        return self.arrow_times[self.arrow_ptr[p]:self.arrow_ptr[p + 1]]

    @property
    def n_deaths(self) -> int:
        return int(self.death_times.shape[0])

    @property
    def n_arrows(self) -> int:
        return int(self.arrow_times.shape[0])

    def events(self) -> list[tuple[float, int, int, int]]:
        """Global event list as (time, kind, source, target) tuples."""
        return list(zip(self.times.tolist(), self.kinds.tolist(),
                        self.src.tolist(), self.dst.tolist()))

    def mask(self, sites: Iterable[int]) -> np.ndarray:
        m = np.zeros(self.window.n_sites, np.uint8)
        lo = self.window.lo
        for x in sites:
            if not self.window.contains(x):
                raise InvalidArgumentError(f"site {x} outside window [{lo}, {self.window.hi}]")
            m[x - lo] = 1
        return m

    def region_mask(self, region: tuple[int, int] | None) -> np.ndarray:
        n = self.window.n_sites
        if region is None:
            return np.ones(n, np.bool_)
        a, b = region
        allowed = np.zeros(n, np.bool_)
        lo = self.window.lo
        a = max(a, lo)
        b = min(b, self.window.hi)
        if a <= b:
            allowed[a - lo:b - lo + 1] = True
        return allowed

    # -- transforms ----------------------------------------------------------

    def mirrored(self, boundary: int = 0) -> "HarrisRealization":
        """Space reflection x -> 2*boundary + 1 - x (maps the window onto itself
        when it is symmetric about boundary + 1/2)."""
        c = 2 * boundary + 1
        window = SpaceTimeWindow(c - self.window.hi, c - self.window.lo, self.window.horizon)
        deaths = {c - x: self.deaths(x).tolist() for x in self.window.sites()}
        arrows = {}
        for p, (s, d) in enumerate(zip(self.pair_src.tolist(), self.pair_dst.tolist())):
            arrows[(c - s, c - d)] = self.arrow_times[self.arrow_ptr[p]:self.arrow_ptr[p + 1]].tolist()
        return from_marks(self.params, window, deaths, arrows, seed=self.seed)

    def __repr__(self):
        w = self.window
        return (f"HarrisRealization(lam={self.params.lam}, R={self.params.range}, "
                f"window=[{w.lo},{w.hi}]x[0,{w.horizon}], deaths={self.n_deaths}, "
                f"arrows={self.n_arrows}, seed={self.seed})")


def generate(params: ModelParams, window: SpaceTimeWindow, seed: int) -> HarrisRealization:
    seed = int(seed) & _MASK64
    streams = K.generate_streams(np.uint64(seed), window.lo, window.hi, int(params.range),
                                 float(params.lam), float(window.horizon))
    return HarrisRealization(params, window, seed, *streams)


def from_marks(params: ModelParams, window: SpaceTimeWindow,
               deaths: Mapping[int, Sequence[float]] | None = None,
               arrows: Mapping[tuple[int, int], Sequence[float]] | None = None,
               seed: int | None = None) -> HarrisRealization:
    """Build a realization from explicit marks (fixtures and transforms)."""
    deaths = deaths or {}
    arrows = arrows or {}
    n = window.n_sites
    death_ptr = np.zeros(n + 1, np.int64)
    chunks = []
    for i, x in enumerate(window.sites()):
        ts = sorted(float(t) for t in deaths.get(x, ()))
        _check_stream(ts, window, f"death stream {x}")
        chunks.append(ts)
        death_ptr[i + 1] = death_ptr[i] + len(ts)
    for x in deaths:
        if not window.contains(x):
            raise InvalidArgumentError(f"death site {x} outside window")
    death_times = np.array([t for c in chunks for t in c], np.float64)

    R = int(params.range)
    pairs = []
    for y in window.sites():
        for d in range(-R, R + 1):
            if d != 0 and window.contains(y + d):
                pairs.append((y, y + d))
    known = set(pairs)
    for key in arrows:
        if key not in known:
            raise InvalidArgumentError(f"arrow pair {key} not an in-window pair within range {R}")
    arrow_ptr = np.zeros(len(pairs) + 1, np.int64)
    achunks = []
    for p, key in enumerate(pairs):
        ts = sorted(float(t) for t in arrows.get(key, ()))
        _check_stream(ts, window, f"arrow stream {key}")
        achunks.append(ts)
        arrow_ptr[p + 1] = arrow_ptr[p] + len(ts)
    arrow_times = np.array([t for c in achunks for t in c], np.float64)
    pair_src = np.array([s for s, _ in pairs], np.int64)
    pair_dst = np.array([d for _, d in pairs], np.int64)
    return HarrisRealization(params, window, seed, death_ptr, death_times,
                             pair_src, pair_dst, arrow_ptr, arrow_times)


def _check_stream(ts, window, label):
    for a, b in zip(ts, ts[1:]):
        if not a < b:
            raise InvalidArgumentError(f"{label}: times must be strictly increasing")
    if ts and (ts[0] < 0 or ts[-1] > window.horizon):
        raise InvalidArgumentError(f"{label}: times outside [0, {window.horizon}]")


# ---------------------------------------------------------------------------
# path queries
# ---------------------------------------------------------------------------


def _has_death(h: HarrisRealization, site: int, a: float, b: float, closed_left: bool) -> bool:
    """Death mark on ``site`` in [a, b] (or (a, b] when not closed_left)."""
    ts = h.deaths(site)
    i = bisect.bisect_left(ts, a) if closed_left else bisect.bisect_right(ts, a)
    return i < len(ts) and ts[i] <= b


def _check_point(h, site, t):
    w = h.window
    if not w.contains(site) or not 0 <= t <= w.horizon:
        raise InvalidArgumentError(f"point ({site}, {t}) outside window")


def path_exists(h: HarrisRealization, q: PathQuery) -> bool:
    """Exact path query by a search over arrow marks.

    This walks arrows in time order and keeps, for each site, the earliest
    time a path is known to sit there.  It reads the per-stream arrays only
    and shares no code with the sweep kernels, so the two can check each
    other.
    """
    (x, s), (y, t) = q.source, q.target
    _check_point(h, x, s)
    _check_point(h, y, t)
    if s > t:
        raise InvalidArgumentError("path query needs source time <= target time")

    def inside(z):
        return q.region is None or q.region[0] <= z <= q.region[1]

    if not inside(x) or not inside(y):
        return False
    if x == y and not _has_death(h, x, s, t, True):
        return True
    arrows = []
    for p in range(h.pair_src.shape[0]):
        a, b = int(h.pair_src[p]), int(h.pair_dst[p])
        if not (inside(a) and inside(b)):
            continue
        for r in h.arrow_times[h.arrow_ptr[p]:h.arrow_ptr[p + 1]]:
            if s < r <= t:
                arrows.append((float(r), a, b))
    arrows.sort()
    # A path sitting on z is alive at r if some arrival a0 <= r has no death
    # in [a0, r].  At equal times deaths act before arrows, so a death at the
    # moment of an arrow kills the source but not the fresh arrival; only the
    # start point is closed on the left.  Every arrival is kept: a later one
    # can survive where an earlier one was killed.
    arrivals: dict[int, list[tuple[float, bool]]] = {x: [(s, True)]}
    for r, a, b in arrows:
        if any(not _has_death(h, a, a0, r, closed) for a0, closed in arrivals.get(a, ())):
            arrivals.setdefault(b, []).append((r, False))
    return any(not _has_death(h, y, a0, t, closed) for a0, closed in arrivals.get(y, ()))


def reachable_set(h: HarrisRealization, A: Iterable[int], s: float, t: float,
                  region: tuple[int, int] | None = None) -> frozenset[int]:
    """{x : exists y in A with (y, s) -> (x, t)} by one forward sweep."""
    if s > t:
        raise InvalidArgumentError(f"reachable_set needs s <= t, got s={s}, t={t}")
    if t > h.window.horizon or s < 0:
        raise InvalidArgumentError("times outside the window horizon")
    state = h.mask(A)
    allowed = h.region_mask(region)
    state &= allowed.astype(np.uint8)
    w = h.window
    snaps, _, _, _ = K.forward_classic(h.times, h.kinds, h.src, h.dst, w.lo, state, allowed,
                                       float(s), np.array([float(t)]), w.lo, w.hi,
                                       int(h.params.range), False, False, False)
    return frozenset((np.flatnonzero(snaps[0]) + w.lo).tolist())


# ---------------------------------------------------------------------------
# binary fixture format
# ---------------------------------------------------------------------------

_MAGIC = b"HRSF"
_VERSION = 1
_HEADER = struct.Struct("<4sHqqqqdI")  # magic, version, seed, lo, hi, R, lam, n_records
_RECORD = struct.Struct("<Bqqqq")  # kind, site, target, numerator, log2(denominator)
_HORIZON = struct.Struct("<qq")


def _ratio(t: float) -> tuple[int, int]:
    fr = Fraction(t)
    den = fr.denominator
    return fr.numerator, den.bit_length() - 1


def write_fixture(h: HarrisRealization, path) -> None:
    """Write a realization as a versioned binary record file.

    Layout (little endian): header ``HRSF``, version u16, seed i64, lo i64,
    hi i64, range i64, lambda f64, record count u32; horizon as
    (numerator i64, log2 denominator i64); then one record per mark:
    kind u8 (0 death, 1 arrow), site i64, target i64, time numerator i64,
    log2 of the time denominator i64.  Times are dyadic so the pair is exact.
    """
    w = h.window
    records = h.events()
    seed = -1 if h.seed is None else int(h.seed) - (1 << 64 if h.seed >= 1 << 63 else 0)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, seed, w.lo, w.hi, int(h.params.range),
                              float(h.params.lam), len(records)))
        fh.write(_HORIZON.pack(*_ratio(float(w.horizon))))
        for t, kind, a, b in records:
            num, e = _ratio(t)
            fh.write(_RECORD.pack(kind, a, b, num, e))


def read_fixture(path) -> HarrisRealization:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, seed, lo, hi, R, lam, n = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise InvalidArgumentError("not a Harris fixture file")
    if version != _VERSION:
        raise InvalidArgumentError(f"unsupported fixture version {version}")
    off = _HEADER.size
    hn, he = _HORIZON.unpack_from(data, off)
    off += _HORIZON.size
    horizon = float(Fraction(hn, 1 << he))
    deaths: dict[int, list[float]] = {}
    arrows: dict[tuple[int, int], list[float]] = {}
    for _ in range(n):
        kind, a, b, num, e = _RECORD.unpack_from(data, off)
        off += _RECORD.size
        t = float(Fraction(num, 1 << e))
        if kind == K.DEATH:
            deaths.setdefault(a, []).append(t)
        else:
            arrows.setdefault((a, b), []).append(t)
    seed_v = None if seed == -1 else seed & _MASK64
    return from_marks(ModelParams(lam, R), SpaceTimeWindow(lo, hi, horizon), deaths, arrows,
                      seed=seed_v)
