"""Flat ``key = value`` configuration files and the shipped presets.

Recognised keys mirror ``ExperimentSpec``: kind, lam, R, replicas, seed,
times, kappa, margin, E, A, B, preset.  Any other key lands in ``options``.
Lists are comma separated; ``a..b`` is an inclusive integer range and in A
and B the ends may be ``-inf`` or ``inf`` for half-lines.  ``#`` starts a
comment.
"""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

from ..contact import Configuration
from ..errors import InvalidArgumentError
from .types import ExperimentSpec

_FIELDS = {"kind", "lam", "R", "replicas", "seed", "times", "kappa", "margin", "E", "A", "B",
           "preset"}

# alpha at (3, 2): edge_speed with T=40, kappa=2, 100 replicas, none tainted
ALPHA_3_2 = 9.94
ALPHA_3_2_SOURCE = "edge_speed lam=3 R=2 T=40 kappa=2 n=100: 9.94 +/- 0.07"

PRESETS: dict[str, dict] = {
    "speed": dict(kind="speed", lam=2.0, R=1, times="40", replicas=100, kappa=1.5),
    "speed-3-1": dict(kind="speed", lam=3.0, R=1, times="40", replicas=100, kappa=1.0),
    "speed-3-2": dict(kind="speed", lam=3.0, R=2, times="40", replicas=100, kappa=2.0),
    "identities": dict(kind="identities", lam=2.0, R=2, times="10", replicas=1000,
                       half_width=30, checkpoints=10),
    "lemma1": dict(kind="lemma1", replicas=10000, cases="2:5:1.5:1,3:4:1:1"),
    "percolation": dict(kind="percolation", replicas=10000, ps="0.6,0.8", ns="1..6",
                        Ns="1..4"),
    "tail": dict(kind="tail", lam=2.0, R=1, times="50", replicas=10000, statistic="r1",
                 x_start=1, half_width=60),
    "tail-nu": dict(kind="tail", lam=2.0, R=1, times="100", replicas=10000,
                    statistic="l2-r1", x_start=1, half_width=80),
    "symmetry": dict(kind="symmetry", lam=2.0, R=1, times="50", replicas=1000, half_width=60),
    "coalesce": dict(kind="coalesce", lam=3.0, R=1, A="0", B="1", E="-2..2",
                     times="5,10,20,40,80", replicas=1000, dt=1.0, kappa=1.0),
    "outcomes": dict(kind="outcomes", lam=2.0, R=1, A="0", B="1", E="-1..1", times="50",
                     replicas=10000, kappa=1.0, half_width=60),
    "marginals": dict(kind="marginals", lam=2.0, R=1, E="0..2", times="25,50,100",
                      replicas=10000, bootstrap=1000, half_width=80),
    "renorm-closure": dict(kind="renorm-closure", lam=3.0, R=2, replicas=150, Nhat="4,9",
                           Khat=1, alpha=ALPHA_3_2, alpha_source=ALPHA_3_2_SOURCE,
                           levels=4, columns=10, times="0"),
    "expanding": dict(kind="expanding", lam=3.0, R=2, replicas=400, Nhat=4, Khat=1,
                      alpha=ALPHA_3_2, alpha_source=ALPHA_3_2_SOURCE, levels=6,
                      sizes="1,5,25", times="0"),
}


def _scalar(tok: str):
    tok = tok.strip()
    for cast in (int, float):
        try:
            return cast(tok)
        except ValueError:
            pass
    return tok


def _int_list(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ".." in tok:
            a, b = tok.split("..", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return tuple(out)


def parse_option(text):
    """Option values: ranges expand, commas make tuples, numbers are cast."""
    if not isinstance(text, str):
        return text
    if ".." in text and ":" not in text:
        return _int_list(text)
    if "," in text:
        return tuple(_scalar(t) for t in text.split(",") if t.strip())
    return _scalar(text)


def parse_sites(text: str) -> Configuration:
    """A, B syntax: comma separated sites or ranges, ``-inf..a`` and ``b..inf``
    for half-lines, and an empty string or ``empty`` for the empty set."""
    text = str(text).strip()
    if text in ("", "empty", "none"):
        return Configuration()
    support: set[int] = set()
    left = right = None
    for tok in text.split(","):
        tok = tok.strip()
        if ".." in tok:
            a, b = (s.strip() for s in tok.split("..", 1))
            if a == "-inf" and b == "inf":
                raise InvalidArgumentError("use two half-lines for all of Z")
            if a == "-inf":
                left = int(b) if left is None else max(left, int(b))
            elif b == "inf":
                right = int(a) if right is None else min(right, int(a))
            else:
                support.update(range(int(a), int(b) + 1))
        else:
            try:
                support.add(int(tok))
            except ValueError as exc:
                raise InvalidArgumentError(f"bad site token {tok!r}") from exc
    return Configuration(frozenset(support), left, right)


def _build(raw: dict, overrides: dict | None = None) -> ExperimentSpec:
    raw = dict(raw)
    raw.update(overrides or {})
    kw: dict = {}
    options: dict = {}
    try:
        for key, val in raw.items():
            if key not in _FIELDS:
                options[key] = parse_option(val)
            elif key in ("kind", "preset", "A", "B"):
                kw[key] = str(val).strip()
            elif key in ("lam", "kappa"):
                kw[key] = float(val)
            elif key in ("R", "replicas", "margin", "seed"):
                kw[key] = int(val)
            elif key == "times":
                ts = val if isinstance(val, (tuple, list)) else str(val).split(",")
                kw[key] = tuple(float(t) for t in ts if str(t).strip())
            elif key == "E":
                kw[key] = _int_list(val) if isinstance(val, str) else tuple(int(v) for v in val)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"bad configuration value: {exc}") from exc
    if "kind" not in kw:
        raise InvalidArgumentError("configuration needs a kind")
    if any(not math.isfinite(t) for t in kw.get("times", ())):
        raise InvalidArgumentError("times must be finite")
    for key in ("A", "B"):
        if key in kw:
            parse_sites(kw[key])
    return ExperimentSpec(options=options, **kw)


def read_config(path) -> dict:
    raw: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from exc
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{no}: expected key = value")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    return raw


def preset(name: str, **overrides) -> ExperimentSpec:
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return _build(dict(PRESETS[name], preset=name), overrides)


def load_spec(kind: str | None = None, config: str | None = None, preset_name: str | None = None,
              **overrides) -> ExperimentSpec:
    """Merge, lowest priority first: preset (default: the kind's own), config file, overrides."""
    raw: dict = {}
    file_raw = read_config(config) if config else {}
    name = preset_name or file_raw.get("preset")
    if name is None and kind in PRESETS:
        name = kind
    if name is not None:
        if name not in PRESETS:
            raise InvalidArgumentError(f"unknown preset {name!r}")
        raw.update(PRESETS[name], preset=name)
    raw.update(file_raw)
    if kind is not None:
        if "kind" in file_raw and file_raw["kind"] != kind:
            raise InvalidArgumentError(f"config kind {file_raw['kind']!r} != subcommand {kind!r}")
        raw["kind"] = kind
    return _build(raw, {k: v for k, v in overrides.items() if v is not None})


def spec_replace(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    options = dict(spec.options)
    options.update(kw.pop("options", {}))
    return replace(spec, options=options, **kw)
