"""Block renormalization of a Harris realization onto the even lattice.

A box (m, n) covers the sites near m*N/2 during the slab [K*N*n, K*N*(n+1)].
Four local conditions are checked on each box:

* a: at the top of the slab every run of ``floor(sqrt N)`` consecutive sites
  of U = I_{m-1} u I_{m+1} holds an occupied site of the process started
  from all of Z;
* b: at the top, every such occupied site of U descends from the part of
  the configuration at the bottom that lies in I_m;
* c: throughout the slab the same holds on the strip J around m*N/2;
* d: no path ending in U during the slab starts farther than 2*alpha*K*N
  from m*N/2.

Phi is 1 when the conditions hold and the box inherits a good configuration
from below, 2 when neither box below it qualifies, 0 otherwise.
Psi = [Phi != 0].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .harris import HarrisRealization, ModelParams
from .opercolation import (EvenLattice, PercEventSpec, PercField, detect, relevant_points,
                           write_field_text)
from .errors import InvalidArgumentError, UndecidableError

__all__ = [
    "RenormSetup",
    "BoxIndex",
    "BoxReport",
    "RenormFields",
    "ExpandingVerdict",
    "Censored",
    "compute_phi_psi",
    "is_expanding",
    "descendancy_barrier_contains",
    "detect_Bk",
    "first_X",
    "k0_for",
    "write_renorm_dump",
]

UNDECIDED = -1


@dataclass(frozen=True)
class RenormSetup:
    """Scale parameters of the block construction.

    ``alpha`` is the edge speed used to size the envelope; it is an input
    (usually an estimate from ``contact.edge_speed``) and ``alpha_source``
    records where it came from.  ``k`` is the dependence range handed to the
    closure estimator; it defaults to ceil(v) + 1.
    """

    params: ModelParams
    Nhat: int
    Khat: int
    alpha: float
    k: int | None = None
    delta_target: float | None = None
    k0: int = 1
    alpha_source: str = "supplied"

    def __post_init__(self):
        if self.Nhat < 1 or self.Khat < 1:
            raise InvalidArgumentError("Nhat and Khat must be positive integers")
        if not self.alpha > 0:
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if self.k is None:
            object.__setattr__(self, "k", math.ceil(self.v) + 1)
        if self.k < 1 or self.k0 < 1:
            raise InvalidArgumentError("k and k0 must be >= 1")

    @property
    def v(self) -> float:
        return max(3.0, 4.0 * self.alpha * self.Khat)

    @property
    def Mprime(self) -> float:
        return (self.v + 2.0) * self.Nhat

    @property
    def slab(self) -> int:
        return self.Khat * self.Nhat

    @property
    def gap(self) -> int:
        """Longest allowed run length is gap - 1."""
        return math.isqrt(self.Nhat)

    def as_dict(self) -> dict:
        return {
            "lam": self.params.lam, "R": self.params.range, "Nhat": self.Nhat,
            "Khat": self.Khat, "alpha": self.alpha, "alpha_source": self.alpha_source,
            "v": self.v, "Mprime": self.Mprime, "k": self.k, "k0": self.k0,
            "delta_target": self.delta_target,
        }


@dataclass(frozen=True)
class BoxIndex:
    """Site and time ranges of box (m, n); all site bounds are inclusive integers."""

    m: int
    n: int
    setup: RenormSetup

    def __post_init__(self):
        if (self.m + self.n) % 2 or self.n < 0:
            raise InvalidArgumentError(f"({self.m}, {self.n}) is not an even-lattice point")

    @property
    def center(self) -> Fraction:
        return Fraction(self.m * self.setup.Nhat, 2)

    def interval(self, j: int) -> tuple[int, int]:
        """I_j = (jN/2 - N/2, jN/2 + N/2]."""
        N = self.setup.Nhat
        c = Fraction(j * N, 2)
        return math.floor(c - Fraction(N, 2)) + 1, math.floor(c + Fraction(N, 2))

    @property
    def base(self) -> tuple[int, int]:
        return self.interval(self.m)

    @property
    def U(self) -> tuple[int, int]:
        return self.interval(self.m - 1)[0], self.interval(self.m + 1)[1]

    @property
    def J(self) -> tuple[int, int]:
        c, R = self.center, self.setup.params.range
        return math.floor(c - R) + 1, math.ceil(c + R) - 1

    @property
    def envelope(self) -> tuple[int, int]:
        s = self.setup
        e = 2.0 * s.alpha * s.slab
        c = float(self.center)
        return math.ceil(c - e), math.floor(c + e)

    @property
    def times(self) -> tuple[float, float]:
        T = self.setup.slab
        return float(T * self.n), float(T * (self.n + 1))


@dataclass(frozen=True)
class BoxReport:
    m: int
    n: int
    phi: int
    a: bool | None = None
    b: bool | None = None
    c: bool | None = None
    d: bool | None = None
    reason: str = ""


@dataclass
class RenormFields:
    """Phi and Psi on a lattice region; undecided boxes hold -1 in ``phi``."""

    setup: RenormSetup
    lattice: EvenLattice
    phi: np.ndarray
    reports: dict = field(repr=False)
    seed: int | None = None

    @property
    def undecided(self) -> list[tuple[int, int]]:
        lat = self.lattice
        return [(m, n) for m, n in lat.points()
                if self.phi[n - lat.n_lo, m - lat.m_lo] == UNDECIDED]

    @property
    def complete(self) -> bool:
        return not self.undecided

    def psi(self, strict: bool = True) -> PercField:
        """Psi as a field; with ``strict`` undecided boxes raise, else they read 0."""
        bad = self.undecided
        if strict and bad:
            raise UndecidableError(f"{len(bad)} undecided boxes, first {bad[:5]}",
                                   missing=tuple(bad))
        v = (self.phi > 0).astype(np.uint8)
        return PercField(self.lattice, v, f"renorm(seed={self.seed})")

    def phi_at(self, m: int, n: int) -> int:
        lat = self.lattice
        if not lat.contains(m, n):
            raise InvalidArgumentError(f"({m}, {n}) outside {lat}")
        return int(self.phi[n - lat.n_lo, m - lat.m_lo])


# ---------------------------------------------------------------------------
# box evaluation
# ---------------------------------------------------------------------------


def _max_zero_run(row: np.ndarray) -> int:
    best = run = 0
    for v in row.tolist():
        run = 0 if v else run + 1
        best = max(best, run)
    return best


def _conditions(h: HarrisRealization, box: BoxIndex, state_a, cont_a) -> BoxReport:
    """Evaluate box conditions; state_a is None on the bottom row (start from Z)."""
    w = h.window
    R = h.params.range
    lo = w.lo
    e_lo, e_hi = box.envelope
    u_lo, u_hi = box.U
    j_lo, j_hi = box.J
    b_lo, b_hi = box.base
    a, b = box.times
    if e_lo < lo + R or e_hi > w.hi - R or b > w.horizon:
        return BoxReport(box.m, box.n, UNDECIDED, reason="envelope leaves window")
    if u_lo < e_lo or u_hi > e_hi:
        return BoxReport(box.m, box.n, 0, d=False, reason="U wider than envelope")
    pinned = np.zeros(w.n_sites, np.uint8)
    pinned[u_lo - lo:u_hi - lo + 1] = 1
    _, escaped = K.backward_reach_pinned(h.times, h.kinds, h.src, h.dst, lo, pinned,
                                         a, b, e_lo, e_hi)
    if escaped:
        return BoxReport(box.m, box.n, 0, d=False, reason="d")
    full = np.zeros(w.n_sites, np.uint8)
    if state_a is None:
        full[e_lo - lo:e_hi - lo + 1] = 1
    else:
        if cont_a[e_lo - lo:e_hi - lo + 1].any():
            return BoxReport(box.m, box.n, UNDECIDED, d=True,
                             reason="boundary influence inside envelope")
        full[e_lo - lo:e_hi - lo + 1] = state_a[e_lo - lo:e_hi - lo + 1]
    base = np.zeros_like(full)
    base[b_lo - lo:b_hi - lo + 1] = full[b_lo - lo:b_hi - lo + 1]
    ok_c, full, base = K.funnel_check(h.times, h.kinds, h.src, h.dst, lo, full, base,
                                      a, b, j_lo, j_hi, e_lo, e_hi)
    fu = full[u_lo - lo:u_hi - lo + 1]
    bu = base[u_lo - lo:u_hi - lo + 1]
    ok_b = bool(np.all(fu <= bu))
    ok_a = _max_zero_run(fu) < box.setup.gap
    good = ok_a and ok_b and bool(ok_c)
    miss = "".join(k for k, v in (("a", ok_a), ("b", ok_b), ("c", ok_c)) if not v)
    return BoxReport(box.m, box.n, 1 if good else 0, ok_a, ok_b, bool(ok_c), True, miss)


def compute_phi_psi(h: HarrisRealization, setup: RenormSetup, region: EvenLattice,
                    strict: bool = False) -> RenormFields:
    """Phi on ``region`` (which must start at level 0).

    Boxes outside the region that feed it through the inheritance rule are
    evaluated too.  Boxes whose envelope leaves the window, or that could
    feel the unseen outside of the window, come out undecided (-1); with
    ``strict`` any undecided box in the region raises ``UndecidableError``.
    """
    if setup.params != h.params:
        raise InvalidArgumentError("setup and realization use different model parameters")
    if region.n_lo != 0:
        raise InvalidArgumentError("the region must start at level 0")
    T = setup.slab
    top = region.n_hi
    w = h.window
    checks = np.array([float(T * n) for n in range(1, top + 1)], np.float64)
    if top > 0 and checks[-1] > w.horizon:
        raise InvalidArgumentError(
            f"level {top} needs horizon {T * (top + 1)}, window has {w.horizon}")
    state = np.ones(w.n_sites, np.uint8)
    allowed = np.ones(w.n_sites, np.bool_)
    snaps, csnaps, _, _ = K.forward_classic(h.times, h.kinds, h.src, h.dst, w.lo, state, allowed,
                                            0.0, checks, w.lo, w.hi, h.params.range,
                                            True, True, True)
    phi: dict[tuple[int, int], int] = {}
    reports: dict[tuple[int, int], BoxReport] = {}
    for n in range(0, top + 1):
        pad = top - n
        lo_m, hi_m = region.m_lo - pad, region.m_hi + pad
        start = lo_m + ((lo_m + n) % 2)
        for m in range(start, hi_m + 1, 2):
            box = BoxIndex(m, n, setup)
            if n > 0:
                below = (phi[(m - 1, n - 1)], phi[(m + 1, n - 1)])
                if 1 not in below:
                    if UNDECIDED in below:
                        rep = BoxReport(m, n, UNDECIDED, reason="undecided box below")
                    else:
                        rep = BoxReport(m, n, 2, reason="no good box below")
                    phi[(m, n)] = rep.phi
                    reports[(m, n)] = rep
                    continue
                rep = _conditions(h, box, snaps[n - 1], csnaps[n - 1])
            else:
                rep = _conditions(h, box, None, None)
            phi[(m, n)] = rep.phi
            reports[(m, n)] = rep
    arr = np.zeros(region.shape, np.int8)
    for (m, n) in region.points():
        arr[n, m - region.m_lo] = phi[(m, n)]
    out = RenormFields(setup, region, arr, reports, h.seed)
    if strict:
        out.psi(strict=True)
    return out


# ---------------------------------------------------------------------------
# expanding points and barriers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpandingVerdict:
    point: tuple[int, float]
    direction: str
    box: tuple[int, int]
    reach: bool
    right: bool | None
    left: bool | None
    approximate: bool

    @property
    def value(self) -> bool:
        if not self.reach:
            return False
        if self.direction == "right":
            return bool(self.right)
        if self.direction == "left":
            return bool(self.left)
        return bool(self.right) and bool(self.left)


def _home_box(x: int, k: int, N: int) -> int:
    """The i with i + k even and x in I_i."""
    for i in (math.floor(Fraction(2 * x, N)) - 1, math.floor(Fraction(2 * x, N)),
              math.floor(Fraction(2 * x, N)) + 1):
        lo = math.floor(Fraction(i * N, 2) - Fraction(N, 2)) + 1
        hi = math.floor(Fraction(i * N, 2) + Fraction(N, 2))
        if (i + k) % 2 == 0 and lo <= x <= hi:
            return i
    raise AssertionError("no home box")  # the I_i tile Z twice over


def _reach_all(h: HarrisRealization, x: int, t: float, t1: float, lo: int, hi: int,
               verify: bool) -> bool:
    w = h.window
    allowed = h.region_mask((lo, hi))
    state = h.mask([x])
    snaps, _, _, _ = K.forward_classic(h.times, h.kinds, h.src, h.dst, w.lo, state, allowed,
                                       float(t), np.array([float(t1)]), w.lo, w.hi,
                                       h.params.range, False, False, False)
    row = snaps[0, lo - w.lo:hi - w.lo + 1]
    fwd = bool(row.all())
    if verify:
        for z in range(lo, hi + 1):
            mark = h.mask([z])
            K.backward_classic(h.times, h.kinds, h.src, h.dst, w.lo, mark, allowed,
                               float(t), float(t1))
            if bool(mark[x - w.lo]) != bool(row[z - lo]):
                raise AssertionError(f"forward and dual reachability disagree at z={z}")
    return fwd


def is_expanding(h: HarrisRealization, fields: RenormFields, point: tuple[int, float],
                 direction: str = "right", horizon: int = 8,
                 verify: bool = False) -> ExpandingVerdict:
    """Whether (x, t) is an expanding point to the given side ("right", "left", "both").

    The reachability part asks that (x, t) reach every site of
    I_{i-2} u I_i u I_{i+2} at time k*K*N by paths inside that set, where
    k = floor(t / (K*N)) + 1.  The percolation part asks for an infinite open
    path from (i +/- 2, k); it is checked up to ``horizon`` levels, so a
    positive answer is flagged ``approximate``.  ``verify`` recomputes the
    reachability part with the dual.
    """
    if direction not in ("right", "left", "both"):
        raise InvalidArgumentError(f"direction must be right, left or both, got {direction!r}")
    s = fields.setup
    x, t = int(point[0]), float(point[1])
    w = h.window
    if not w.contains(x) or not 0 <= t <= w.horizon:
        raise InvalidArgumentError(f"point {point} outside the window")
    N, T = s.Nhat, s.slab
    k = math.floor(t / T) + 1
    i = _home_box(x, k, N)
    lo = math.floor(Fraction((i - 3) * N, 2)) + 1
    hi = math.floor(Fraction((i + 3) * N, 2))
    if lo < w.lo or hi > w.hi or k * T > w.horizon:
        raise UndecidableError(f"reach region [{lo}, {hi}] x [{t}, {k * T}] leaves the window",
                               missing=((lo, hi),))
    reach = _reach_all(h, x, t, float(k * T), lo, hi, verify)
    psi = fields.psi(strict=False)
    right = left = None
    if direction in ("right", "both"):
        spec = PercEventSpec.Gamma(horizon, i=i, k=k)
        _check_decided(fields, spec)
        right = detect(psi, spec)
    if direction in ("left", "both"):
        spec = PercEventSpec.Gamma_minus(horizon, i=i, k=k)
        _check_decided(fields, spec)
        left = detect(psi, spec)
    return ExpandingVerdict((x, t), direction, (i, k), reach, right, left, True)


def _check_decided(fields: RenormFields, spec: PercEventSpec):
    lat = fields.lattice
    bad = [(m, n) for n, ms in relevant_points(spec).items() for m in ms
           if lat.contains(m, n) and fields.phi_at(m, n) == UNDECIDED]
    if bad:
        raise UndecidableError(f"{spec.label()} touches undecided boxes {bad[:5]}",
                               missing=tuple(bad))


def descendancy_barrier_contains(apex: tuple[float, float], q: tuple[float, float]) -> bool:
    """Whether q = (y, s) lies in the barrier cone x - s/2 <= y <= x + s/2 of (x, t)."""
    x, t = apex
    y, s = q
    if s < t:
        raise InvalidArgumentError(f"barrier query at time {s} precedes the apex time {t}")
    return x - s / 2 <= y <= x + s / 2


# ---------------------------------------------------------------------------
# blocking slabs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Censored:
    """No blocking slab was found before ``horizon``."""

    horizon: float


def detect_Bk(h: HarrisRealization, setup: RenormSetup, k: int) -> bool:
    """B_k: inside [(k-1)KN, kKN] every |x| <= M' has a death and no arrow
    joins a site with |x| <= M' to one outside."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    T = setup.slab
    a, b = float((k - 1) * T), float(k * T)
    Mp = math.floor(setup.Mprime)
    R = h.params.range
    w = h.window
    if -Mp - R < w.lo or Mp + R > w.hi or b > w.horizon:
        raise UndecidableError(f"B_{k} needs sites [{-Mp - R}, {Mp + R}] up to time {b}",
                               missing=(k,))
    for x in range(-Mp, Mp + 1):
        d = h.deaths(x)
        if not np.any((d >= a) & (d <= b)):
            return False
    for x in list(range(-Mp, -Mp + R)) + list(range(Mp - R + 1, Mp + 1)):
        for y in range(x - R, x + R + 1):
            if abs(y) <= Mp:
                continue
            for p, q in ((x, y), (y, x)):
                ts = h.arrows(p, q)
                if np.any((ts >= a) & (ts <= b)):
                    return False
    return True


def first_X(h: HarrisRealization, setup: RenormSetup, k0: int | None = None) -> float | Censored:
    """min{k K N : k >= k0, B_k}, censored at the last slab inside the window."""
    k = setup.k0 if k0 is None else int(k0)
    T = setup.slab
    while k * T <= h.window.horizon:
        if detect_Bk(h, setup, k):
            return float(k * T)
        k += 1
    return Censored(float(h.window.horizon))


def k0_for(setup: RenormSetup, M: int) -> int:
    """Smallest slab index that clears a spatial scale M: ceil(2M/N + M/(KN))."""
    N, T = setup.Nhat, setup.slab
    return max(1, math.ceil(Fraction(2 * M, N) + Fraction(M, T)))


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------


def write_renorm_dump(path, fields: RenormFields, extra: dict | None = None) -> tuple[Path, Path]:
    """Psi in the percolation text format plus a JSON sidecar holding Phi and the setup."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    psi = fields.psi(strict=False)
    write_field_text(psi, path, extra=f"renorm seed={fields.seed}")
    lat = fields.lattice
    phi_rows = []
    for n in range(lat.n_lo, lat.n_hi + 1):
        row = []
        for m in range(lat.m_lo, lat.m_hi + 1):
            if (m + n) % 2:
                row.append(".")
            else:
                v = fields.phi_at(m, n)
                row.append("?" if v == UNDECIDED else str(v))
        phi_rows.append("".join(row))
    side = {
        "setup": fields.setup.as_dict(),
        "seed": fields.seed,
        "lattice": {"m_lo": lat.m_lo, "m_hi": lat.m_hi, "n_lo": lat.n_lo, "n_hi": lat.n_hi},
        "phi": phi_rows,
        "undecided": [list(p) for p in fields.undecided],
    }
    if extra:
        side.update(extra)
    spath = path.with_suffix(path.suffix + ".json")
    spath.write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")
    return path, spath
