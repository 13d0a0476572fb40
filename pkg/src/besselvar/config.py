"""Run configuration: JSON in, validated dataclass out."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

from .errors import ConfigError

OUT_ENV = "BESSELVAR_OUT"

# defaults shared by the acceptance suite; experiments may override per run
DEFAULT_TOLERANCES = {
    "sine_identity": 1e-10,
    "kernel_oracle": 1e-9,
    "conservation": 1e-6,
    "semigroup_law": 1e-4,
    "bound_drift": 0.10,
    "bound_margin": 0.10,
    "derivatives": 1e-6,
    "structural": 1e-12,
    "mp": 1e-8,
    "uniformity_ratio": 10.0,
    "weak_drift": 0.10,
    "lp_drift": 0.10,
    "bmo_drift": 0.10,
    "cz_drift": 0.10,
    "cz_mean": 1e-12,
}


@dataclass
class TimeConfig:
    t_max: Optional[float] = None  # None: derived from the function support
    slots: int = 40
    refine: int = 8


@dataclass
class SpaceConfig:
    lo: float = 1e-3
    hi: float = 1e3
    per_decade: int = 32


@dataclass
class RunConfig:
    lambdas: Optional[List[float]] = None  # None: each experiment uses its own set
    kind: str = "poisson"
    rho: float = 3.0
    space: SpaceConfig = field(default_factory=SpaceConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    experiments: List[str] = field(default_factory=lambda: ["all"])
    seed: int = 20240101
    out_dir: str = ""
    workers: int = 1
    scale: float = 1.0  # multiplies trial counts

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lambdas is not None:
            if not self.lambdas or any(not (isinstance(v, (int, float)) and v > 0) for v in self.lambdas):
                raise ConfigError("lambdas must be a nonempty list of positive numbers", field="lambdas")
            self.lambdas = [float(v) for v in self.lambdas]
        if self.kind not in ("poisson", "heat"):
            raise ConfigError(f"kind must be poisson or heat, got {self.kind!r}", field="kind")
        if not self.rho > 2:
            raise ConfigError(f"rho must exceed 2, got {self.rho}", field="rho")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance {k!r} must be positive, got {v!r}", field=f"tolerances.{k}")
        if self.time.refine < 2 or self.time.slots < 1:
            raise ConfigError("time grid needs slots >= 1 and refine >= 2", field="time")
        if self.time.t_max is not None and not self.time.t_max > 0:
            raise ConfigError("time.t_max must be positive", field="time.t_max")
        if not 0 < self.space.lo < self.space.hi or self.space.per_decade < 2:
            raise ConfigError("space grid needs 0 < lo < hi and per_decade >= 2", field="space")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", field="workers")
        if not self.scale > 0:
            raise ConfigError("scale must be positive", field="scale")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer", field="seed")

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def output_dir(self) -> str:
        return self.out_dir or os.environ.get(OUT_ENV, "") or "besselvar-out"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown field {key!r}; valid: {', '.join(sorted(known))}", field=key)
        d = dict(d)
        try:
            if "space" in d:
                d["space"] = SpaceConfig(**d["space"])
            if "time" in d:
                d["time"] = TimeConfig(**d["time"])
        except TypeError as exc:
            raise ConfigError(str(exc), field="space/time") from exc
        if "tolerances" in d:
            tol = dict(DEFAULT_TOLERANCES)
            for k in d["tolerances"]:
                if k not in DEFAULT_TOLERANCES:
                    raise ConfigError(f"unknown tolerance {k!r}", field=f"tolerances.{k}")
            tol.update(d["tolerances"])
            d["tolerances"] = tol
        return cls(**d)

    @classmethod
    def from_json(cls, text: str, source: str = "<config>") -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}", line=exc.lineno) from exc
        try:
            return cls.from_dict(data)
        except ConfigError as exc:
            line = _field_line(text, exc.field)
            where = f"{source}:{line}" if line else source
            raise ConfigError(f"{where}: {exc}", field=exc.field, line=line) from None

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read(), path)


def _field_line(text: str, name: Optional[str]) -> Optional[int]:
    if not name:
        return None
    key = '"' + name.split(".")[-1].split("/")[0] + '"'
    for i, line in enumerate(text.splitlines(), 1):
        if key in line:
            return i
    return None
