"""Experiment configuration: a strict pydantic schema plus physical-admissibility checks.

Unknown keys are rejected.  Cross-field checks (p_+ < n on the actual grid,
s > n, k >= 1) run right after parsing and raise ``ConfigError`` with the
dotted path of the offending field.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, VarSobolevError
from .gridlab import Grid, build_grid

SUITES = ("holder", "scaling", "transport", "key-estimate", "log-lemma", "sobolev", "trace")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Strict):
    origin: List[float]
    extent: List[float]
    resolution: List[int]

    def build(self, n: int, half_space_axis: Optional[int] = None) -> Grid:
        return build_grid(n, self.origin, self.extent, self.resolution, half_space_axis)


class ExponentSpec(_Strict):
    kind: Literal["constant", "linear", "bump", "sine"] = "constant"
    base: float = 1.5
    gradient: Optional[List[float]] = None
    amplitude: float = 0.0
    center: Optional[List[float]] = None
    radius: float = 1.0
    frequency: Optional[List[float]] = None
    phase: float = 0.0

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "linear" and self.gradient is None:
            raise ValueError("linear exponent needs 'gradient'")
        if self.kind == "bump" and self.center is None:
            raise ValueError("bump exponent needs 'center'")
        if self.kind == "bump" and self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if self.kind == "sine" and self.frequency is None:
            raise ValueError("sine exponent needs 'frequency'")
        return self


class FamilySpec(_Strict):
    count: int = Field(5, ge=1)
    centers: Optional[List[List[float]]] = None
    radii: Optional[List[Union[float, List[float]]]] = None
    powers: Optional[List[float]] = None
    center_spread: float = Field(0.15, ge=0)
    radius_range: Tuple[float, float] = (0.45, 0.8)
    anisotropy: Tuple[float, float] = (0.6, 1.0)
    power_range: Tuple[float, float] = (0.5, 2.0)


class OTSpec(_Strict):
    method: Literal["exact", "entropic"] = "exact"
    epsilon: float = Field(1e-2, gt=0)
    # 1-D refinement study for the transport suite
    resolutions: List[int] = [64, 128, 256]


class Tolerances(_Strict):
    holder: float = Field(1e-10, ge=0)


class OutputSpec(_Strict):
    dir: Optional[str] = None
    formats: List[Literal["json", "csv"]] = ["json", "csv"]


class ExperimentConfig(_Strict):
    dimension: int = 2
    grid: GridSpec
    half_space: bool = False
    half_space_grid: Optional[GridSpec] = None
    exponent: ExponentSpec = ExponentSpec()
    functions: FamilySpec = FamilySpec(count=3)
    family: FamilySpec = FamilySpec()
    s: float = 4.0
    r: Optional[float] = None
    k_sweep: List[float] = [1.0, 2.0, 4.0]
    refine: bool = True
    ot: OTSpec = OTSpec()
    tolerances: Tolerances = Tolerances()
    output: OutputSpec = OutputSpec()
    seed: int = 0

    def build_grid(self) -> Grid:
        return self.grid.build(self.dimension)

    def build_half_space_grid(self) -> Grid:
        if self.half_space_grid is not None:
            return self.half_space_grid.build(self.dimension, 0)
        g = self.grid
        return build_grid(
            self.dimension,
            [0.0] + list(g.origin[1:]),
            [g.extent[0] / 2] + list(g.extent[1:]),
            [max(g.resolution[0] // 2, 3)] + list(g.resolution[1:]),
            0,
        )


def _admissibility(cfg: ExperimentConfig) -> None:
    # local import keeps config importable without the numeric modules loaded
    from .families import exponent_values

    n = cfg.dimension
    if n not in (1, 2, 3):
        raise ConfigError(f"dimension {n} not in (1, 2, 3)", "dimension")
    for name in ("origin", "extent", "resolution"):
        if len(getattr(cfg.grid, name)) != n:
            raise ConfigError(f"needs {n} entries", f"grid.{name}")
    try:
        grids = [("grid", cfg.build_grid())]
        if cfg.half_space:
            grids.append(("half_space_grid", cfg.build_half_space_grid()))
    except VarSobolevError as exc:
        raise ConfigError(str(exc), "grid") from exc
    for fld in ("gradient", "center", "frequency"):
        v = getattr(cfg.exponent, fld)
        if v is not None and len(v) != n:
            raise ConfigError(f"needs {n} entries", f"exponent.{fld}")
    for label, grid in grids:
        vals = exponent_values(grid, cfg.exponent)
        if vals.min() < 1.0:
            raise ConfigError(f"p_- = {vals.min():.6g} < 1 on {label}", "exponent")
        if vals.max() >= n:
            raise ConfigError(f"p_+ = {vals.max():.6g} >= n = {n} on {label}", "exponent")
    if cfg.s <= n:
        raise ConfigError(f"s = {cfg.s} must exceed n = {n}", "s")
    if cfg.r is not None and cfg.r < 1:
        raise ConfigError(f"r = {cfg.r} must be >= 1", "r")
    for i, k in enumerate(cfg.k_sweep):
        if k < 1:
            raise ConfigError(f"k = {k} must be >= 1", f"k_sweep.{i}")
    for fam in ("functions", "family"):
        fc = getattr(cfg, fam)
        lo, hi = fc.radius_range
        if not 0 < lo <= hi:
            raise ConfigError("need 0 < min <= max", f"{fam}.radius_range")
        if not 0 < fc.anisotropy[0] <= fc.anisotropy[1]:
            raise ConfigError("need 0 < min <= max", f"{fam}.anisotropy")
        if not 0 < fc.power_range[0] <= fc.power_range[1]:
            raise ConfigError("need 0 < min <= max", f"{fam}.power_range")


def parse_config(data: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(x) for x in err["loc"])
        raise ConfigError(err["msg"], path) from exc
    _admissibility(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path.name}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return parse_config(data)


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()
