"""Run configuration: a flat YAML mapping validated against the scenario catalog."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    type: type
    default: Any
    check: Callable[[Any], bool] | None = None
    message: str = ""
    doc: str = ""

    def coerce(self, value):
        t = self.type
        try:
            if t is bool:
                if not isinstance(value, bool):
                    raise TypeError
                out = value
            elif t is int:
                if isinstance(value, bool) or float(value) != int(value):
                    raise TypeError
                out = int(value)
            elif t is float:
                if isinstance(value, bool):
                    raise TypeError
                out = float(value)
            elif t is list:
                if not isinstance(value, (list, tuple)):
                    raise TypeError
                out = [float(v) for v in value]
            elif t is tuple:
                # list of names
                if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
                    raise TypeError
                out = tuple(value)
            else:
                out = t(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.name} must be of type {t.__name__}, got {value!r}") from None
        if self.check is not None and not self.check(out):
            raise ConfigError(f"{self.name} {self.message or 'is invalid'}")
        return out


def positive(x):
    return x > 0


def non_negative(x):
    return x >= 0


COMMON_PARAMS = [
    Param("seed", int, 0, non_negative, "must be >= 0", "master seed of every noise stream"),
    Param("replicas", int, None, lambda x: x >= 1, "must be >= 1", "independent replicas"),
    Param("batch", int, None, lambda x: x >= 1, "must be >= 1", "replicas evolved together"),
    Param("workers", int, 1, lambda x: x >= 1, "must be >= 1", "worker processes"),
    Param("output_dir", str, None, None, "", "where results are written"),
    Param("formats", tuple, None, None, "", "output formats"),
]


@dataclass
class RunConfig:
    scenario: str
    seed: int
    replicas: int
    batch: int
    workers: int
    output_dir: str
    formats: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"scenario": self.scenario, "seed": self.seed, "replicas": self.replicas,
             "batch": self.batch, "workers": self.workers, "output_dir": self.output_dir,
             "formats": list(self.formats)}
        d.update(self.params)
        return d

    def physics_dict(self) -> dict:
        """Everything that determines the numbers (not where or how they are run)."""
        d = self.to_dict()
        for k in ("workers", "output_dir", "formats"):
            d.pop(k)
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def __getitem__(self, key):
        return self.params[key]


VALID_FORMATS = {"csv", "json", "transcripts"}


def config_from_dict(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a flat mapping; unknown keys are rejected."""
    from .scenarios import CATALOG

    raw = dict(raw or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    name = raw.pop("scenario", None)
    if name is None:
        raise ConfigError("scenario is required")
    if name not in CATALOG:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(CATALOG)}")
    scen = CATALOG[name]
    spec = {p.name: p for p in COMMON_PARAMS}
    spec.update({p.name: p for p in scen.params})
    unknown = sorted(set(raw) - set(spec))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} for scenario {name!r}")
    vals = {}
    for key, p in spec.items():
        vals[key] = p.coerce(raw[key]) if key in raw and raw[key] is not None else p.default
    formats = vals.pop("formats")
    formats = tuple(formats) if formats is not None else ("csv", "json")
    bad = set(formats) - VALID_FORMATS
    if bad:
        raise ConfigError(f"formats must be drawn from {sorted(VALID_FORMATS)}, got {sorted(bad)}")
    replicas = vals.pop("replicas") or scen.default_replicas
    batch = vals.pop("batch") or min(scen.default_batch, replicas)
    cfg = RunConfig(
        scenario=name,
        seed=vals.pop("seed"),
        replicas=replicas,
        batch=batch,
        workers=vals.pop("workers"),
        output_dir=vals.pop("output_dir") or str(Path("results") / name),
        formats=formats,
        params=vals,
    )
    scen.validate(cfg)
    return cfg


def _coerce_formats(raw):
    f = raw.get("formats")
    if isinstance(f, str):
        raw["formats"] = [s.strip() for s in f.split(",") if s.strip()]
    return raw


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a flat YAML run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}: parse error: {problem}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a flat key: value mapping")
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: nested sections are not allowed ({nested})")
    return config_from_dict(_coerce_formats(raw), overrides)
