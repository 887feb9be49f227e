"""Experiment configuration: YAML file <-> validated dataclass, plus grid expansion."""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import yaml

from .topology import TOPOLOGY_KINDS


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "ring"
    p: float = 0.3
    seed: int = 0


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    k: int = 10
    k_x: int = 20
    noise_rate: float = 0.05
    path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    m: int = 16
    n: int = 200
    T: int = 5000
    total_examples: int | None = None
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    epsilon: float = math.inf
    lambda_base: float = 0.0
    sparsity_target: float | None = None
    R_w: float = 150.0
    L: float | str = 1.0
    clip: bool = False
    seeds: tuple[int, ...] = (0,)
    data: DataConfig = field(default_factory=DataConfig)
    holdout_fraction: float = 0.2
    output_dir: str = "results"
    diagnostic_trace: bool = False
    workers: int = 1
    grid: dict[str, tuple] = field(default_factory=dict)

    @property
    def private(self) -> bool:
        return math.isfinite(self.epsilon)

    @property
    def horizon(self) -> int:
        """Rounds per run: ``T``, or ``total_examples // m`` under a fixed example budget."""
        if self.total_examples is not None:
            return self.total_examples // self.m
        return self.T

    @property
    def holdout_size(self) -> int:
        f = self.holdout_fraction
        if f <= 0:
            return 0
        return int(round(self.m * self.horizon * f / (1.0 - f)))

    def cells(self) -> Iterator[tuple[int, "ExperimentConfig"]]:
        """Grid cells in row-major order of ``grid`` keys, each without a grid."""
        keys = list(self.grid)
        combos = itertools.product(*(self.grid[k] for k in keys)) if keys else [()]
        for cell_id, combo in enumerate(combos):
            cfg = dataclasses.replace(self, grid={})
            for key, value in zip(keys, combo):
                cfg = set_field(cfg, key, value)
            yield cell_id, cfg


_TOP_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
_SECTIONS = {"topology": TopologyConfig, "data": DataConfig}


def _parse_epsilon(value: Any) -> float:
    if value is None:
        return math.inf
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "none", "off", "disabled"):
            return math.inf
        try:
            value = float(value)
        except ValueError:
            raise ConfigError("epsilon", f"expected a positive number or 'inf', got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("epsilon", f"expected a positive number or 'inf', got {value!r}")
    return float(value)


def _coerce(name: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(name, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(name, f"expected a string, got {value!r}")
        return value
    return value


_TYPES = {
    "m": int, "n": int, "T": int, "lambda_base": float, "R_w": float, "clip": bool,
    "holdout_fraction": float, "output_dir": str, "diagnostic_trace": bool, "workers": int,
    "topology.kind": str, "topology.p": float, "topology.seed": int,
    "data.source": str, "data.k": int, "data.k_x": int, "data.noise_rate": float,
}


def set_field(cfg: ExperimentConfig, key: str, value: Any) -> ExperimentConfig:
    """Return a copy with one (possibly dotted, e.g. ``topology.kind``) field replaced."""
    head, _, tail = key.partition(".")
    if head in _SECTIONS and tail:
        section = getattr(cfg, head)
        if tail not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigError(key, "unknown key")
        if key == "data.path":
            value = None if value is None else _coerce(key, value, str)
        else:
            value = _coerce(key, value, _TYPES[key])
        return dataclasses.replace(cfg, **{head: dataclasses.replace(section, **{tail: value})})
    if head in _SECTIONS and isinstance(value, dict):
        out = cfg
        for k, v in value.items():
            out = set_field(out, f"{head}.{k}", v)
        return out
    if key not in _TOP_FIELDS or key == "grid":
        raise ConfigError(key, "unknown key")
    if key == "epsilon":
        value = _parse_epsilon(value)
    elif key == "L":
        if value != "auto":
            value = _coerce("L", value, float)
    elif key == "seeds":
        if isinstance(value, int) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError("seeds", f"expected a non-empty list of integers, got {value!r}")
        value = tuple(_coerce("seeds", v, int) for v in value)
    elif key == "total_examples":
        value = None if value is None else _coerce(key, value, int)
    elif key == "sparsity_target":
        value = None if value is None else _coerce(key, value, float)
    else:
        value = _coerce(key, value, _TYPES[key])
    return dataclasses.replace(cfg, **{key: value})


def _get_field(cfg: ExperimentConfig, key: str) -> Any:
    obj = cfg
    for part in key.split("."):
        obj = getattr(obj, part)
    return obj


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key == "grid":
            continue
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a mapping")
        cfg = set_field(cfg, key, value)
    grid = raw.get("grid") or {}
    if not isinstance(grid, dict):
        raise ConfigError("grid", "expected a mapping of field -> list of values")
    parsed = {}
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid.{key}", "expected a non-empty list")
        # type-check every grid value against its field and keep the coerced form
        parsed[key] = tuple(_get_field(set_field(cfg, key, v), key) for v in values)
    cfg = dataclasses.replace(cfg, grid=parsed)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Raise ConfigError naming the first offending field."""
    for _, cell in cfg.cells():
        _validate_cell(cell)


def _validate_cell(c: ExperimentConfig) -> None:
    if c.m < 1:
        raise ConfigError("m", f"must be >= 1, got {c.m}")
    if c.n < 1:
        raise ConfigError("n", f"must be >= 1, got {c.n}")
    if c.T < 0:
        raise ConfigError("T", f"must be >= 0, got {c.T}")
    if c.total_examples is not None and c.total_examples < c.m:
        raise ConfigError("total_examples", f"must be >= m, got {c.total_examples}")
    if c.topology.kind not in TOPOLOGY_KINDS:
        raise ConfigError("topology.kind", f"must be one of {TOPOLOGY_KINDS}, got {c.topology.kind!r}")
    if c.topology.kind == "grid" and math.isqrt(c.m) ** 2 != c.m:
        raise ConfigError("topology.kind", f"grid needs a perfect-square m, got m={c.m}")
    if not 0.0 <= c.topology.p <= 1.0:
        raise ConfigError("topology.p", f"must lie in [0, 1], got {c.topology.p}")
    if not c.epsilon > 0:
        raise ConfigError("epsilon", f"must be positive (or 'inf' for no noise), got {c.epsilon}")
    if c.lambda_base < 0:
        raise ConfigError("lambda_base", f"must be >= 0, got {c.lambda_base}")
    if c.sparsity_target is not None and not 0.0 < c.sparsity_target < 1.0:
        raise ConfigError("sparsity_target", f"must lie in (0, 1), got {c.sparsity_target}")
    if not c.R_w > 0:
        raise ConfigError("R_w", f"must be positive, got {c.R_w}")
    if c.L != "auto" and not c.L > 0:
        raise ConfigError("L", f"must be positive or 'auto', got {c.L}")
    if not 0.0 <= c.holdout_fraction < 1.0:
        raise ConfigError("holdout_fraction", f"must lie in [0, 1), got {c.holdout_fraction}")
    if c.workers < 1:
        raise ConfigError("workers", f"must be >= 1, got {c.workers}")
    d = c.data
    if d.source == "synthetic":
        if not 1 <= d.k <= c.n:
            raise ConfigError("data.k", f"must lie in [1, n={c.n}], got {d.k}")
        if not 1 <= d.k_x <= c.n:
            raise ConfigError("data.k_x", f"must lie in [1, n={c.n}], got {d.k_x}")
        if not 0.0 <= d.noise_rate < 0.5:
            raise ConfigError("data.noise_rate", f"must lie in [0, 0.5), got {d.noise_rate}")
    elif d.source == "file":
        if not d.path:
            raise ConfigError("data.path", "required when data.source is 'file'")
    else:
        raise ConfigError("data.source", f"must be 'synthetic' or 'file', got {d.source!r}")


def to_dict(cfg: ExperimentConfig) -> dict:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            v = dataclasses.asdict(v)
        elif f.name == "epsilon":
            v = "inf" if math.isinf(v) else v
        elif f.name == "seeds":
            v = list(v)
        elif f.name == "grid":
            v = {k: [("inf" if isinstance(x, float) and math.isinf(x) else x) for x in vals] for k, vals in v.items()}
        out[f.name] = v
    return out


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"not valid YAML: {exc}") from None
    return from_dict(raw or {})


def load(path: str | Path) -> ExperimentConfig:
    return loads(Path(path).read_text(encoding="utf-8"))
