"""Plain data carried between runners, the report writer and the CLI."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import InvalidArgumentError
from ..harris import ModelParams

KINDS = ("speed", "tail", "coalesce", "outcomes", "marginals", "percolation",
         "renorm-closure", "symmetry", "lemma1", "expanding", "identities")

DEFAULT_CAP = 729


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a runner needs; ``options`` holds the kind-specific knobs."""

    kind: str
    lam: float = 2.0
    R: int = 1
    replicas: int = 1000
    seed: int = 0
    times: tuple[float, ...] = (50.0,)
    kappa: float = 4.0
    margin: int = 10
    E: tuple[int, ...] = (-1, 0, 1)
    A: str = "0"
    B: str = "1"
    options: dict = field(default_factory=dict)
    preset: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown experiment kind {self.kind!r}")
        if self.replicas < 1:
            raise InvalidArgumentError("replicas must be >= 1")
        if self.R < 1 or self.lam < 0:
            raise InvalidArgumentError("need lam >= 0 and R >= 1")
        if not self.times or any(t < 0 for t in self.times):
            raise InvalidArgumentError("times must be a nonempty list of nonnegative numbers")
        if list(self.times) != sorted(self.times):
            raise InvalidArgumentError("times must be ascending")
        if len(set(self.E)) != len(self.E):
            raise InvalidArgumentError("E must not repeat sites")
        cap = int(self.options.get("cap", DEFAULT_CAP))
        if 3 ** len(self.E) > cap:
            raise InvalidArgumentError(
                f"|{{0,1,2}}^E| = {3 ** len(self.E)} exceeds the table cap {cap}")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")

    @property
    def params(self) -> ModelParams:
        return ModelParams(float(self.lam), int(self.R))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def opt(self, key: str, default):
        """Option ``key`` coerced to the type of ``default``."""
        if key not in self.options:
            return default
        v = self.options[key]
        if isinstance(default, bool):
            return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")
        if isinstance(default, (tuple, list)):
            return tuple(v) if isinstance(v, (tuple, list)) else (v,)
        if default is None:
            return v
        return type(default)(v)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["times"] = list(self.times)
        d["E"] = list(self.E)
        d["options"] = {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in sorted(self.options.items())}
        return d


class Outcome(enum.Enum):
    BOTH_DIE = "BothDie"
    TYPE1_ONLY = "Type1Only"
    TYPE2_ONLY = "Type2Only"
    COEXIST = "Coexist"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class OutcomeLabel:
    """Survival to the horizon of each type plus the crossing proxies.

    ``chi`` is type 1 present in (-inf, 0] at the horizon and ``eta`` type 2
    present in [1, inf); both stand in for infinitely-often events.
    Both types alive without both flags is ``Unresolved``.
    """

    alive1: bool
    alive2: bool
    chi: bool
    eta: bool

    @property
    def outcome(self) -> Outcome:
        if not self.alive1 and not self.alive2:
            return Outcome.BOTH_DIE
        if self.alive1 and not self.alive2:
            return Outcome.TYPE1_ONLY
        if self.alive2 and not self.alive1:
            return Outcome.TYPE2_ONLY
        return Outcome.COEXIST if (self.chi and self.eta) else Outcome.UNRESOLVED

    @classmethod
    def of(cls, ones: Iterable[int], twos: Iterable[int], boundary: int = 0) -> "OutcomeLabel":
        ones, twos = list(ones), list(twos)
        return cls(bool(ones), bool(twos), any(x <= boundary for x in ones),
                   any(x > boundary for x in twos))


@dataclass(frozen=True)
class TailFit:
    statistic: str
    horizon: float | None
    thresholds: tuple[int, ...]
    survival: tuple[float, ...]
    counts: tuple[int, ...]
    replicas: int
    censored: int
    used: tuple[int, ...]
    slope: float
    intercept: float
    correlation: float

    @property
    def usable(self) -> bool:
        return len(self.used) >= 3 and math.isfinite(self.slope)

    @property
    def log_survival(self) -> tuple[float, ...]:
        return tuple(math.log(s) if s > 0 else -math.inf for s in self.survival)


class MarginalTable:
    """Counts of configurations restricted to E, indexed by base-3 codes."""

    def __init__(self, E: Sequence[int], counts=None, time: float | None = None):
        self.E = tuple(E)
        self.ncells = 3 ** len(self.E)
        self.counts = (np.zeros(self.ncells, np.int64) if counts is None
                       else np.asarray(counts, np.int64).copy())
        if self.counts.shape != (self.ncells,):
            raise InvalidArgumentError("counts length must be 3**|E|")
        self.time = time

    @property
    def replicas(self) -> int:
        return int(self.counts.sum())

    def code(self, values: Sequence[int]) -> int:
        c = 0
        for v in values:
            c = 3 * c + int(v)
        return c

    def add(self, values: Sequence[int]):
        self.counts[self.code(values)] += 1

    def add_code(self, code: int):
        self.counts[code] += 1

    @staticmethod
    def label(code: int, size: int) -> str:
        digits = []
        for _ in range(size):
            digits.append(str(code % 3))
            code //= 3
        return "".join(reversed(digits))

    def cells(self) -> Iterable[tuple[str, int]]:
        for c in range(self.ncells):
            yield self.label(c, len(self.E)), int(self.counts[c])

    def as_dict(self) -> dict[str, int]:
        return {k: v for k, v in self.cells() if v}

    def __add__(self, other: "MarginalTable") -> "MarginalTable":
        if other.E != self.E:
            raise InvalidArgumentError("tables on different E")
        return MarginalTable(self.E, self.counts + other.counts, self.time)

    def __eq__(self, other):
        return (isinstance(other, MarginalTable) and self.E == other.E
                and np.array_equal(self.counts, other.counts))

    def mirrored(self, boundary: int = 0) -> "MarginalTable":
        """The table of the mirrored configuration on 2b+1-E, types swapped.

        Cell order follows the mirrored E listed in ascending order."""
        c = 2 * boundary + 1
        newE = tuple(sorted(c - x for x in self.E))
        pos = {x: i for i, x in enumerate(self.E)}
        swap = (0, 2, 1)
        out = MarginalTable(newE, time=self.time)
        for code, label in ((k, self.label(k, len(self.E))) for k in range(self.ncells)):
            n = self.counts[code]
            if n:
                vals = [swap[int(label[pos[c - y]])] for y in newE]
                out.counts[out.code(vals)] += n
        return out


@dataclass
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    kind: str
    verdict: str
    metrics: dict
    tables: list[Table]
    spec: ExperimentSpec
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "undecidable"):
            raise ValueError(f"bad verdict {self.verdict}")

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 1, "undecidable": 3}[self.verdict]

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


def all_codes(size: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(3), repeat=size)
