"""Experiment configuration.

Configs are TOML documents.  Grammar (every key optional unless noted)::

    kind = "certify"          # classify|rho|series|simulate|zeta|embedded|certify|scan|tree
    seed = 1                  # required, 64-bit unsigned
    group = "Z^1"             # Z^d, F_k or T_q
    law = "srw"               # "srw" or "elem:p,elem:p"; or a [law] table
    law_generating = false    # declare a partial support as generating
    mu = "1:0.5,3:0.5"        # or a point mass "2", or a [mu] table
    m = 2.0                   # mean offspring (classify/series; else taken from mu)
    rho = 0.866               # classify only; estimated when absent
    replicates = 1000
    depth = 6
    horizon = 1.0
    n = 4                     # level for zeta/scan
    n_max = 200               # rho/series/classify
    k = 2                     # embedded period; picked automatically when absent
    k_max = 200
    levels = 3
    delta = 0.1
    t = 0.0
    times = [0.0, 0.5, 1.0]
    workers = 1
    format = "json"           # json|csv
    dump_labels = false

    [law]                     # alternative to the law string
    "(1)" = 0.5
    "(-1)" = 0.5

    [mu]                      # alternative to the mu string
    1 = 0.5
    3 = 0.5

Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .groups import GroupFamily, LatticeZd, StepLaw, parse_family
from .gwtree import OffspringLaw

__all__ = ["ConfigError", "ExperimentConfig", "KINDS", "parse_config", "config_from_dict", "parse_law"]

KINDS = ("classify", "rho", "series", "simulate", "zeta", "embedded", "certify", "scan", "tree")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def _split_items(text: str) -> list:
    # split on commas that are not inside parentheses
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        out.append("".join(cur))
    return out


def parse_law(family: GroupFamily, value, generating: bool = False) -> StepLaw:
    """``"srw"``, ``"(1):0.7,(-1):0.3"``, ``"a:0.25,a':0.25,..."`` or a mapping."""
    if isinstance(value, dict):
        return StepLaw.from_mapping(family, {str(k): float(v) for k, v in value.items()}, generating)
    text = str(value).strip()
    if text.lower() in ("srw", "simple"):
        return StepLaw.simple(family)
    mapping = {}
    for item in _split_items(text):
        elem, sep, p = item.rpartition(":")
        if not sep:
            raise ValueError(f"cannot parse step-law item {item!r}; expected 'element:prob'")
        mapping[elem.strip()] = float(p)
    return StepLaw.from_mapping(family, mapping, generating)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    group: str = "Z^1"
    law: Any = "srw"
    law_generating: bool = False
    mu: Any = None
    m: Optional[float] = None
    rho: Optional[float] = None
    replicates: int = 1
    depth: Optional[int] = None
    horizon: float = 1.0
    n: Optional[int] = None
    n_max: Optional[int] = None
    k: Optional[int] = None
    k_max: int = 200
    levels: int = 3
    delta: float = 0.1
    t: float = 0.0
    times: Optional[list] = None
    workers: int = 1
    format: str = "json"
    dump_labels: bool = False
    # parsed objects
    family: GroupFamily = field(init=False, repr=False, compare=False)
    step_law: StepLaw = field(init=False, repr=False, compare=False)
    offspring: Optional[OffspringLaw] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.seed is None:
            raise ConfigError("seed", "an explicit seed is required (no default entropy)")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be an integer in [0, 2^64), got {self.seed!r}")
        try:
            self.family = parse_family(str(self.group))
        except ValueError as err:
            raise ConfigError("group", str(err)) from None
        try:
            self.step_law = parse_law(self.family, self.law, self.law_generating)
        except ValueError as err:
            raise ConfigError("law", str(err)) from None
        self.offspring = None
        if self.mu is not None:
            try:
                if isinstance(self.mu, dict):
                    self.offspring = OffspringLaw.from_mapping(self.mu)
                else:
                    self.offspring = OffspringLaw.parse(str(self.mu))
            except ValueError as err:
                raise ConfigError("mu", str(err)) from None
        if self.replicates < 1:
            raise ConfigError("replicates", f"must be >= 1, got {self.replicates}")
        if self.workers < 1:
            raise ConfigError("workers", f"must be >= 1, got {self.workers}")
        if not self.horizon > 0:
            raise ConfigError("horizon", f"must be positive, got {self.horizon}")
        if self.format not in FORMATS:
            raise ConfigError("format", f"must be one of {FORMATS}, got {self.format!r}")
        if self.m is not None and not self.m > 1:
            raise ConfigError("m", f"mean offspring must exceed 1, got {self.m}")
        if self.rho is not None and not 0 < self.rho <= 1:
            raise ConfigError("rho", f"must lie in (0, 1], got {self.rho}")
        if not 0 < self.delta < 0.5:
            raise ConfigError("delta", f"must lie in (0, 0.5), got {self.delta}")
        for key in ("depth", "n", "k"):
            val = getattr(self, key)
            if val is not None and val < (1 if key == "k" else 0):
                raise ConfigError(key, f"invalid value {val}")
        needs_mu = self.kind in ("simulate", "zeta", "embedded", "certify", "scan", "tree")
        if needs_mu and self.offspring is None:
            raise ConfigError("mu", f"experiment {self.kind!r} needs an offspring law")
        if self.kind in ("classify", "series") and self.m is None and self.offspring is None:
            raise ConfigError("m", f"experiment {self.kind!r} needs m (or mu)")
        if self.kind in ("simulate", "tree") and self.depth is None:
            raise ConfigError("depth", f"experiment {self.kind!r} needs depth")
        if self.kind in ("zeta", "scan") and self.n is None and self.depth is None:
            raise ConfigError("n", f"experiment {self.kind!r} needs the level n")

    @property
    def mean_offspring(self) -> float:
        if self.m is not None:
            return float(self.m)
        return self.offspring.mean

    def default_n_max(self) -> int:
        if self.n_max is not None:
            return self.n_max
        if isinstance(self.family, LatticeZd):
            return 200
        return 2000 if self.step_law.is_radial else 2 * 7

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.init:
                out[f.name] = getattr(self, f.name)
        return out


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig) if f.init}


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key (not ignored)")
    if "kind" not in data:
        raise ConfigError("kind", "missing experiment kind")
    if "seed" not in data:
        raise ConfigError("seed", "missing seed; an explicit seed is required (no default entropy)")
    return ExperimentConfig(**data)


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("<document>", f"malformed TOML: {err}") from None
    return config_from_dict(data)
