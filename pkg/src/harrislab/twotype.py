"""Two-type contact process with priority half-lines.

Type 1 has priority on (-inf, b] and type 2 on [b+1, inf), with b the rule's
boundary (0 by default).  Both types share the deaths and arrows of one Harris
realization: a death empties a site, and an arrow y -> x does nothing when x
already holds its own priority type, otherwise x takes the type sitting at y
(if any).  Forgetting types therefore gives the classic process exactly.

The infinite-volume value is obtained by growing the box [-N+1, N] until the
sites of interest carry no contamination, i.e. nothing outside the box could
have changed them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from ._io import write_csv
from .contact import Configuration, as_configuration
from .errors import InvalidArgumentError
from .harris import HarrisRealization, ModelParams

__all__ = [
    "PriorityRule",
    "TwoTypeConfiguration",
    "InterfaceObs",
    "TwoTypeResult",
    "PriorityAudit",
    "SeriesResult",
    "flip_rate",
    "evolve_restricted",
    "evolve_two_type",
    "run_series",
    "interface",
    "interface_from_rows",
    "mirror",
    "audit_priority",
    "write_state_csv",
    "write_interface_csv",
]

STATE_SCHEMA = ("harrislab.twotype.state", 1)
INTERFACE_SCHEMA = ("harrislab.twotype.interface", 1)

TRANSITIONS = {(1, 0), (2, 0), (0, 1), (0, 2), (2, 1), (1, 2)}


@dataclass(frozen=True)
class PriorityRule:
    """Type 1 has priority on sites <= boundary, type 2 on sites > boundary."""

    boundary: int = 0

    def priority(self, x: int) -> int:
        return 1 if x <= self.boundary else 2


DEFAULT_RULE = PriorityRule()


def _overlap(a: Configuration, b: Configuration) -> bool:
    if any(x in b for x in a.support) or any(x in a for x in b.support):
        return True
    if (a.left is not None and b.left is not None) or (a.right is not None and b.right is not None):
        return True
    if a.left is not None and b.right is not None and b.right <= a.left:
        return True
    if b.left is not None and a.right is not None and a.right <= b.left:
        return True
    return False


@dataclass(frozen=True)
class TwoTypeConfiguration:
    """Disjoint occupied sets of type 1 (``ones``) and type 2 (``twos``)."""

    ones: Configuration = Configuration()
    twos: Configuration = Configuration()

    def __post_init__(self):
        object.__setattr__(self, "ones", as_configuration(self.ones))
        object.__setattr__(self, "twos", as_configuration(self.twos))
        if _overlap(self.ones, self.twos):
            raise InvalidArgumentError("type-1 and type-2 supports overlap")

    @classmethod
    def initial(cls, rule: PriorityRule = DEFAULT_RULE) -> "TwoTypeConfiguration":
        """Type 1 on (-inf, b], type 2 on [b+1, inf)."""
        b = rule.boundary
        return cls(Configuration(left=b), Configuration(right=b + 1))

    @classmethod
    def from_assignment(cls, assignment: dict[int, int]) -> "TwoTypeConfiguration":
        bad = {v for v in assignment.values() if v not in (0, 1, 2)}
        if bad:
            raise InvalidArgumentError(f"site values must be 0, 1 or 2, got {sorted(bad)}")
        return cls(Configuration.of(x for x, v in assignment.items() if v == 1),
                   Configuration.of(x for x, v in assignment.items() if v == 2))

    @property
    def finite(self) -> bool:
        return self.ones.finite and self.twos.finite

    def __getitem__(self, x: int) -> int:
        if x in self.ones:
            return 1
        if x in self.twos:
            return 2
        return 0

    def assignment(self) -> dict[int, int]:
        if not self.finite:
            raise InvalidArgumentError("infinite configuration has no finite assignment")
        out = {x: 1 for x in self.ones.support}
        out.update({x: 2 for x in self.twos.support})
        return dict(sorted(out.items()))

    def occupied(self) -> Configuration:
        """Type-blind occupied set (finite part only)."""
        return Configuration(self.ones.support | self.twos.support)

    def array(self, lo: int, hi: int) -> np.ndarray:
        out = np.zeros(hi - lo + 1, np.uint8)
        for x in self.ones.restrict(lo, hi):
            out[x - lo] = 1
        for x in self.twos.restrict(lo, hi):
            out[x - lo] = 2
        return out

    @classmethod
    def from_array(cls, row: np.ndarray, lo: int) -> "TwoTypeConfiguration":
        return cls(Configuration((np.flatnonzero(row == 1) + lo).tolist()),
                   Configuration((np.flatnonzero(row == 2) + lo).tolist()))


@dataclass(frozen=True)
class InterfaceObs:
    """r1: rightmost type-1 site (sup of empty = -inf); l2: leftmost type-2 site."""

    r1: float
    l2: float

    @property
    def crossed(self) -> bool:
        return self.r1 >= self.l2


def interface(zeta: TwoTypeConfiguration) -> InterfaceObs:
    o, t = zeta.ones, zeta.twos
    if o.right is not None:
        r1 = math.inf
    elif o.support:
        r1 = max(o.support) if o.left is None else max(max(o.support), o.left)
    else:
        r1 = -math.inf if o.left is None else o.left
    if t.left is not None:
        l2 = -math.inf
    elif t.support:
        l2 = min(t.support) if t.right is None else min(min(t.support), t.right)
    else:
        l2 = math.inf if t.right is None else t.right
    return InterfaceObs(float(r1), float(l2))


def mirror(zeta: TwoTypeConfiguration, rule: PriorityRule = DEFAULT_RULE) -> TwoTypeConfiguration:
    """Reflect x -> 2b + 1 - x and swap the two types."""
    c = 2 * rule.boundary + 1

    def refl(cf: Configuration) -> Configuration:
        return Configuration(frozenset(c - x for x in cf.support),
                             left=None if cf.right is None else c - cf.right,
                             right=None if cf.left is None else c - cf.left)

    return TwoTypeConfiguration(refl(zeta.twos), refl(zeta.ones))


def _parse_transition(tr) -> tuple[int, int]:
    if isinstance(tr, str):
        parts = tr.replace("→", "->").split("->")
        try:
            tr = tuple(int(p.strip()) for p in parts)
        except ValueError:
            raise InvalidArgumentError(f"malformed transition {tr!r}") from None
    tr = tuple(tr)
    if tr not in TRANSITIONS:
        raise InvalidArgumentError(f"unknown transition {tr!r}")
    return tr


def flip_rate(x: int, zeta: TwoTypeConfiguration, transition, params: ModelParams,
              rule: PriorityRule = DEFAULT_RULE) -> float:
    """Rate c(x, zeta, a -> b) of the priority dynamics."""
    a, b = _parse_transition(transition)
    if b == 0:
        return 1.0
    R = params.range
    count = sum(1 for y in range(x - R, x + R + 1) if y != x and zeta[y] == b)
    rate = params.lam * count
    if a == 0:
        return rate
    return rate if rule.priority(x) == b else 0.0


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------


def _as_pair(A, B) -> TwoTypeConfiguration:
    if isinstance(A, TwoTypeConfiguration):
        if B is not None:
            raise InvalidArgumentError("pass either a TwoTypeConfiguration or two site sets")
        return A
    return TwoTypeConfiguration(as_configuration(A), as_configuration(B if B is not None else ()))


def _max_box(h: HarrisRealization) -> int:
    return min(1 - h.window.lo, h.window.hi)


def _outside_types(zeta: TwoTypeConfiguration, lo: int, hi: int) -> tuple[int, int]:
    lt = rt = 0
    for bit, cf in ((1, zeta.ones), (2, zeta.twos)):
        if cf.left is not None or any(x < lo for x in cf.support):
            lt |= bit
        if cf.right is not None or any(x > hi for x in cf.support):
            rt |= bit
    return lt, rt


@dataclass
class SeriesResult:
    """Raw sweep output on the box [blo, bhi] of a window starting at ``lo``."""

    lo: int
    blo: int
    bhi: int
    times: np.ndarray
    states: np.ndarray
    contaminated: np.ndarray
    possible: np.ndarray
    outside: np.ndarray

    def config(self, c: int = -1) -> TwoTypeConfiguration:
        return TwoTypeConfiguration.from_array(self.states[c], self.lo)


def run_series(h: HarrisRealization, zeta: TwoTypeConfiguration, times: Sequence[float],
               N: int | None = None, rule: PriorityRule = DEFAULT_RULE,
               box: tuple[int, int] | None = None, track: bool = True) -> SeriesResult:
    """Sweep the two-type dynamics restricted to a box, snapshotting at ``times``.

    The box defaults to [-N+1, N] (N = the largest that fits the window).
    """
    w = h.window
    checks = np.asarray(times, dtype=np.float64)
    if checks.size and (np.any(np.diff(checks) < 0) or checks[0] < 0 or checks[-1] > w.horizon):
        raise InvalidArgumentError("times must be ascending within [0, horizon]")
    if box is None:
        N = _max_box(h) if N is None else N
        box = (-N + 1, N)
    blo, bhi = box
    if blo < w.lo or bhi > w.hi or blo > bhi:
        raise InvalidArgumentError(f"box [{blo}, {bhi}] not inside window [{w.lo}, {w.hi}]")
    state = np.zeros(w.n_sites, np.uint8)
    state[blo - w.lo:bhi - w.lo + 1] = zeta.array(blo, bhi)
    allowed = np.zeros(w.n_sites, np.bool_)
    allowed[blo - w.lo:bhi - w.lo + 1] = True
    lt, rt = _outside_types(zeta, blo, bhi)
    out = K.forward_two_type(h.times, h.kinds, h.src, h.dst, w.lo, state, allowed,
                             rule.boundary, 0.0, checks, blo, bhi, int(h.params.range),
                             lt, rt, track, False)
    return SeriesResult(w.lo, blo, bhi, checks, out[0], out[1], out[2], out[3])


def evolve_restricted(h: HarrisRealization, A, B=None, t: float = 0.0, N: int | None = None,
                      rule: PriorityRule = DEFAULT_RULE) -> TwoTypeConfiguration:
    """zeta^{A,B,N}_t: only sites of [-N+1, N] take part in the dynamics."""
    zeta = _as_pair(A, B)
    N = _max_box(h) if N is None else int(N)
    if N < 1:
        raise InvalidArgumentError("N must be >= 1")
    blo, bhi = -N + 1, N
    for cf in (zeta.ones, zeta.twos):
        if any(x < blo or x > bhi for x in cf.support):
            raise InvalidArgumentError(f"initial sites must lie in [{blo}, {bhi}]")
    r = run_series(h, zeta, [t], N=N, rule=rule, track=False)
    return r.config()


@dataclass(frozen=True)
class TwoTypeResult:
    state: TwoTypeConfiguration
    N: int
    stabilized: bool
    unstable: frozenset[int] = field(default_factory=frozenset)
    observe: tuple[int, int] | None = None


def evolve_two_type(h: HarrisRealization, A, B=None, t: float = 0.0,
                    observe: tuple[int, int] | None = None,
                    rule: PriorityRule = DEFAULT_RULE, N0: int | None = None) -> TwoTypeResult:
    """The N -> infinity value of zeta^{A,B,N}_t on ``observe``.

    N doubles from the smallest box holding the data until no site of the
    observation interval is contaminated.  ``observe`` defaults to the whole
    box, which only stabilizes for finite data.  When the window runs out
    first the result is flagged and the unstable sites are listed.
    """
    zeta = _as_pair(A, B)
    Nmax = _max_box(h)
    pts = [x for cf in (zeta.ones, zeta.twos) for x in cf.support]
    if observe is not None:
        pts += list(observe)
    need = max([1, h.params.range + 1] + [max(1 - x, x) for x in pts])
    N = max(need, N0 or 0)
    if N > Nmax:
        raise InvalidArgumentError(f"data or observation set does not fit the window (N={N} > {Nmax})")
    while True:
        r = run_series(h, zeta, [t], N=N, rule=rule)
        o_lo, o_hi = observe if observe is not None else (r.blo, r.bhi)
        lo = r.lo
        bad = np.flatnonzero(r.contaminated[0, o_lo - lo:o_hi - lo + 1]) + o_lo
        if bad.size == 0 or N == Nmax:
            return TwoTypeResult(r.config(), N, bad.size == 0,
                                 frozenset(bad.tolist()), (o_lo, o_hi))
        N = min(2 * N, Nmax)


def interface_from_rows(state: np.ndarray, cont: np.ndarray, may: np.ndarray, lo: int):
    """(r1, l2, r1 certified, l2 certified) from one snapshot.

    r1 is certified when its site is clean and no site to its right might
    hold type 1 in the unbounded process; l2 symmetrically.
    """
    ones = np.flatnonzero(state == 1)
    twos = np.flatnonzero(state == 2)
    may1 = np.flatnonzero(may & 1)
    may2 = np.flatnonzero(may & 2)
    if ones.size:
        i = int(ones[-1])
        r1 = float(i + lo)
        ok1 = cont[i] == 0 and not (may1.size and may1[-1] > i)
    else:
        r1, ok1 = -math.inf, may1.size == 0
    if twos.size:
        j = int(twos[0])
        l2 = float(j + lo)
        ok2 = cont[j] == 0 and not (may2.size and may2[0] < j)
    else:
        l2, ok2 = math.inf, may2.size == 0
    return r1, l2, bool(ok1), bool(ok2)


# ---------------------------------------------------------------------------
# priority audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorityAudit:
    changes: int
    displacements: int
    violations: tuple[tuple[float, int, int, int], ...]
    replay_consistent: bool

    @property
    def sound(self) -> bool:
        return not self.violations and self.replay_consistent


def audit_priority(h: HarrisRealization, A, B=None, t: float | None = None,
                   N: int | None = None, rule: PriorityRule = DEFAULT_RULE) -> PriorityAudit:
    """Replay the change log of one sweep against the rules.

    Every logged change is re-derived from the replayed state: deaths must
    empty the site, arrow changes must copy the source's current type, and a
    displacement of one type by the other must happen only outside the
    displaced type's priority region.  The replayed final state must match
    the sweep's snapshot.
    """
    zeta = _as_pair(A, B)
    w = h.window
    t = float(w.horizon if t is None else t)
    N = _max_box(h) if N is None else N
    blo, bhi = -N + 1, N
    state = np.zeros(w.n_sites, np.uint8)
    state[blo - w.lo:bhi - w.lo + 1] = zeta.array(blo, bhi)
    start = state.copy()
    allowed = np.zeros(w.n_sites, np.bool_)
    allowed[blo - w.lo:bhi - w.lo + 1] = True
    out = K.forward_two_type(h.times, h.kinds, h.src, h.dst, w.lo, state, allowed,
                             rule.boundary, 0.0, np.array([t]), blo, bhi,
                             int(h.params.range), 0, 0, False, True)
    final = out[0][0]
    lt, ls, lo_, ln, lsrc = out[4:]
    cur = start
    violations = []
    displacements = 0
    consistent = True
    for k in range(lt.shape[0]):
        x, old, new, y = int(ls[k]), int(lo_[k]), int(ln[k]), int(lsrc[k])
        ix = x - w.lo
        if cur[ix] != old:
            consistent = False
        if new == 0:
            if y != x:
                consistent = False
        else:
            if cur[y - w.lo] != new or not (blo <= y <= bhi):
                consistent = False
            if old != 0:
                displacements += 1
                if rule.priority(x) == old:
                    violations.append((float(lt[k]), x, old, new))
        cur[ix] = new
    consistent = consistent and np.array_equal(cur, final)
    return PriorityAudit(int(lt.shape[0]), displacements, tuple(violations), bool(consistent))


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------


def write_state_csv(path, rows: Iterable[tuple[int, float, TwoTypeConfiguration]]):
    """rows of (replica, time, configuration); columns (replica, time, site, type)."""
    out = []
    for rep, t, z in rows:
        out.extend((rep, float(t), x, v) for x, v in z.assignment().items())
    return write_csv(path, *STATE_SCHEMA, ["replica", "time", "site", "type"], out)


def write_interface_csv(path, rows: Iterable[tuple[int, float, InterfaceObs]]):
    out = [(rep, float(t), o.r1 if math.isinf(o.r1) else int(o.r1),
            o.l2 if math.isinf(o.l2) else int(o.l2)) for rep, t, o in rows]
    return write_csv(path, *INTERFACE_SCHEMA, ["replica", "time", "r1", "l2"], out)
