"""Run configuration: a YAML document validated against a strict schema.

Unknown keys anywhere in the document are rejected.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .data import Role, Transform, TransformSpec
from .dgp import GarchSpec, Ordering, PlrSpec, SvarSpec
from .estimator import NuisanceSettings
from .folds import Scheme
from .montecarlo import BiasMode
from .tuning import Criterion, TuningGrid

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GarchModel(_Strict):
    omega_g: float = 0.05
    alpha_g: float = 0.10
    beta_g: float = 0.85


class SvarModel(_Strict):
    n: int = Field(100, ge=2)
    band: int = Field(5, ge=0)
    kappa: float = Field(0.3, ge=0)
    alpha_decay: float = 1.5
    beta_decay: float = 2.0
    delta: float = 1.5
    omega: float = 0.7
    gamma: float = 0.5
    rho_star: float = 0.95
    d_min: float = 0.8
    d_max: float = 1.2
    mu: float = 0.0
    burn_in: int = Field(300, ge=0)
    ordering: Ordering = Ordering.CORRECT
    garch: Optional[GarchModel] = None

    def build(self) -> SvarSpec:
        kw = self.model_dump(exclude={"garch"})
        return SvarSpec(**kw, garch=GarchSpec(**self.garch.model_dump()) if self.garch else None)


class PlrModel(_Strict):
    p: int = Field(100, ge=1)
    rho: float = 0.9
    cor: float = 0.0
    theta0: float = 0.5
    burn_in: int = Field(300, ge=0)
    coef_scale: float = 1.0
    noise_scale: float = Field(1.0, ge=0)

    def build(self) -> PlrSpec:
        return PlrSpec(**self.model_dump())


class DgpModel(_Strict):
    kind: Literal["svar", "plr"] = "svar"
    T: int = Field(200, ge=10)
    irf_horizon: Optional[int] = Field(None, ge=0)
    svar: SvarModel = SvarModel()
    plr: PlrModel = PlrModel()

    def build(self) -> SvarSpec | PlrSpec:
        return self.svar.build() if self.kind == "svar" else self.plr.build()


class GridModel(_Strict):
    lower: float = Field(0.1, ge=0)
    upper: float = Field(1.0, gt=0)
    size: int = Field(10, ge=1)

    def build(self) -> TuningGrid:
        return TuningGrid.linspace(self.lower, self.upper, self.size)


class EstimatorModel(_Strict):
    K: int = Field(8, ge=2)
    scheme: Scheme = Scheme.RCF
    criterion: Criterion = Criterion.GOLDILOCKS
    grid: GridModel = GridModel()
    l1_ratio: float = Field(1.0, ge=0, le=1)
    window: int = Field(3, ge=2)
    bandwidth: Optional[int] = Field(None, ge=0)
    tol: float = Field(1e-7, gt=0)
    max_iter: int = Field(10_000, ge=1)
    H: int = Field(8, ge=0)
    penalty_scale: Literal["mean", "sum"] = "mean"

    def settings(self) -> NuisanceSettings:
        return NuisanceSettings(self.grid.build(), self.criterion, self.l1_ratio, self.window, self.tol,
                                self.max_iter, self.penalty_scale)


class DataModel(_Strict):
    path: Path
    time_column: Optional[str] = None
    roles: dict[str, Role] = Field(default_factory=dict)
    transforms: dict[str, Transform] = Field(default_factory=dict)
    lags: int = Field(0, ge=0)

    def transform_spec(self) -> TransformSpec:
        return TransformSpec(dict(self.transforms), self.lags)


class MonteCarloModel(_Strict):
    replications: int = Field(500, ge=1)
    T_values: list[int] = Field(default_factory=lambda: [1000])
    K_values: list[int] = Field(default_factory=lambda: [8])
    schemes: list[Scheme] = Field(default_factory=lambda: [Scheme.RCF])
    criteria: list[Criterion] = Field(default_factory=lambda: [Criterion.RMSE])
    bias_mode: BiasMode = BiasMode.MEAN
    mode: Literal["static", "lp"] = "static"
    cache: bool = True

    @field_validator("T_values", "K_values")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("must be non-empty")
        return v


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=1)
    out: Path = Path("out")
    dgp: DgpModel = DgpModel()
    data: Optional[DataModel] = None
    estimator: EstimatorModel = EstimatorModel()
    montecarlo: MonteCarloModel = MonteCarloModel()

    @model_validator(mode="after")
    def _grid_bounds(self):
        g = self.estimator.grid
        if g.size > 1 and not g.upper > g.lower:
            raise ValueError("estimator.grid.upper must exceed estimator.grid.lower")
        return self

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def _format_error(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        if e["type"] == "extra_forbidden":
            parts.append(f"unknown key '{loc}'")
        else:
            parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse ``path`` (YAML) and apply flat ``overrides`` such as ``{"seed": 3}``.

    ``overrides`` keys are dotted paths; ``None`` values are ignored.
    """
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = loaded
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *head, last = dotted.split(".")
        for k in head:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override '{dotted}': '{k}' is not a section")
        node[last] = value
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None
