"""Replication engine: bias, coverage and standard-error summaries over experiment grids.

Replication ``r`` of every cell draws from ``RngStream(base_seed, r)``, so all
cells of a grid see the same simulated samples (common random numbers) and
results never depend on how replications are scheduled across workers.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import partial
from pathlib import Path

import numpy as np

from .dgp import PlrSpec, SvarSpec, fingerprint, simulate_plr, simulate_svar
from .estimator import NuisanceSettings, estimate, estimate_lp
from .folds import Scheme, make_plan
from .numerics import RngStream
from .tuning import Criterion, TuningGrid

__all__ = [
    "BiasMode",
    "Cell",
    "CellResult",
    "ExperimentGrid",
    "LpCellResult",
    "ReplicationOutcome",
    "lp_grid",
    "run_cell",
    "run_grid",
    "simulate",
]

log = logging.getLogger(__name__)

CACHE_VERSION = 1
MIN_CONVERGED_SHARE = 0.9
CSV_COLUMNS = [
    "dgp", "T", "K", "scheme", "criterion", "replications", "base_seed",
    "bias", "coverage", "mean_se", "mc_se_coverage", "n_converged", "n_failed",
    "low_convergence", "bias_mode", "fingerprint",
]


class BiasMode(str, Enum):
    MEAN = "mean"  # 100 |mean(theta_hat - theta0)| / |mean(theta0)|
    MAPE = "mape"  # 100 mean(|theta_hat - theta0| / |theta0|)


@dataclass(frozen=True)
class Cell:
    T: int
    K: int
    scheme: Scheme
    criterion: Criterion

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "criterion", Criterion(self.criterion))


@dataclass(frozen=True)
class ExperimentGrid:
    dgp: SvarSpec | PlrSpec
    T_values: tuple[int, ...]
    K_values: tuple[int, ...]
    schemes: tuple[Scheme, ...] = (Scheme.RCF,)
    criteria: tuple[Criterion, ...] = (Criterion.RMSE,)
    replications: int = 500
    base_seed: int = 0
    grid: TuningGrid = field(default_factory=lambda: TuningGrid.linspace(0.1, 1.0, 10))
    l1_ratio: float = 1.0
    penalty_scale: str = "mean"
    bandwidth: int | None = None
    bias_mode: BiasMode = BiasMode.MEAN

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        object.__setattr__(self, "criteria", tuple(Criterion(c) for c in self.criteria))
        object.__setattr__(self, "bias_mode", BiasMode(self.bias_mode))
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.T_values or not self.K_values:
            raise ValueError("T_values and K_values must be non-empty")
        if max(self.K_values) > min(self.T_values) // 2:
            raise ValueError("every K must be <= min(T) / 2")
        for T in self.T_values:
            for K in self.K_values:
                for scheme in self.schemes:
                    make_plan(T, K, scheme)

    def cells(self) -> list[Cell]:
        return [
            Cell(T, K, s, c)
            for T in self.T_values
            for K in self.K_values
            for s in self.schemes
            for c in self.criteria
        ]

    def settings(self) -> NuisanceSettings:
        return NuisanceSettings(self.grid, l1_ratio=self.l1_ratio, penalty_scale=self.penalty_scale)


@dataclass(frozen=True)
class ReplicationOutcome:
    r: int
    theta_hat: float
    se: float
    theta_true: float
    converged: bool
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.converged


@dataclass(frozen=True)
class CellResult:
    pct_bias: float
    coverage: float
    mean_se: float
    mc_se_coverage: float
    n_converged: int
    n_failed: int
    low_convergence: bool
    bias_mode: BiasMode = BiasMode.MEAN

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage outside [0, 1]")

    @property
    def replications(self) -> int:
        return self.n_converged + self.n_failed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bias_mode"] = self.bias_mode.value
        return d


@dataclass(frozen=True)
class LpCellResult:
    T: int
    abs_bias: tuple[float, ...]
    coverage: tuple[float, ...]
    mc_se_coverage: tuple[float, ...]
    mean_se: tuple[float, ...]
    n_converged: int
    n_failed: int
    theta_hat: tuple[tuple[float, ...], ...] = field(repr=False, default=())


def simulate(dgp: SvarSpec | PlrSpec, T: int, rng: RngStream, irf_horizon: int | None = None):
    if isinstance(dgp, SvarSpec):
        return simulate_svar(dgp, T, rng, irf_horizon=irf_horizon)
    return simulate_plr(dgp, T, rng)


def _one_replication(r: int, dgp, cell: Cell, settings: NuisanceSettings, seed: int, bandwidth) -> ReplicationOutcome:
    try:
        sample = simulate(dgp, cell.T, RngStream(seed, r))
    except Exception as exc:  # noqa: BLE001 - a failed draw is a counted failure
        return ReplicationOutcome(r, math.nan, math.nan, math.nan, False, f"{type(exc).__name__}: {exc}")
    try:
        s = replace(settings, criterion=cell.criterion)
        rep = estimate(sample.dataset, make_plan(cell.T, cell.K, cell.scheme), s, bandwidth)
    except (ArithmeticError, ValueError) as exc:
        return ReplicationOutcome(r, math.nan, math.nan, sample.theta_true, False, f"{type(exc).__name__}: {exc}")
    return ReplicationOutcome(r, rep.theta_hat, rep.se, sample.theta_true, rep.converged)


def _map(fn, items, threads: int):
    """Evaluate ``fn`` over ``items`` and return results in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    workers = min(threads, len(items))
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def _summarize(outcomes: list[ReplicationOutcome], bias_mode: BiasMode) -> CellResult:
    ok = [o for o in outcomes if o.ok]
    n_ok, n_fail = len(ok), len(outcomes) - len(ok)
    if n_ok == 0:
        first = next((o.error for o in outcomes if o.error), "no fit converged")
        raise RuntimeError(f"all {len(outcomes)} replications failed; first error: {first}")
    th = np.array([o.theta_hat for o in ok])
    t0 = np.array([o.theta_true for o in ok])
    se = np.array([o.se for o in ok])
    err = th - t0
    if bias_mode is BiasMode.MEAN:
        bias = 100.0 * abs(float(np.mean(err))) / abs(float(np.mean(t0)))
    else:
        bias = 100.0 * float(np.mean(np.abs(err) / np.abs(t0)))
    covered = np.abs(err) <= 1.96 * se
    p = float(np.mean(covered))
    low = n_ok < MIN_CONVERGED_SHARE * len(outcomes)
    if low:
        log.warning("only %d of %d replications converged", n_ok, len(outcomes))
    return CellResult(
        pct_bias=bias,
        coverage=p,
        mean_se=float(np.mean(se)),
        mc_se_coverage=math.sqrt(p * (1.0 - p) / n_ok),
        n_converged=n_ok,
        n_failed=n_fail,
        low_convergence=low,
        bias_mode=bias_mode,
    )


def run_cell(
    dgp: SvarSpec | PlrSpec,
    cell: Cell,
    settings: NuisanceSettings,
    replications: int,
    seed: int,
    *,
    threads: int = 1,
    bandwidth: int | None = None,
    bias_mode: BiasMode | str = BiasMode.MEAN,
    return_outcomes: bool = False,
):
    """Run ``replications`` independent estimates of one cell.

    Failed replications (exceptions or a non-converged selected fit) are
    excluded from every summary and counted in ``n_failed``; they are never
    retried with a fresh seed.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    fn = partial(_one_replication, dgp=dgp, cell=cell, settings=settings, seed=seed, bandwidth=bandwidth)
    outcomes = _map(fn, range(replications), threads)
    result = _summarize(outcomes, BiasMode(bias_mode))
    return (result, outcomes) if return_outcomes else result


def _cell_key(grid: ExperimentGrid, cell: Cell) -> str:
    return fingerprint(
        "cell", CACHE_VERSION, grid.dgp, cell, grid.grid.lambdas, grid.l1_ratio, grid.penalty_scale, grid.bandwidth,
        grid.replications, grid.base_seed, grid.bias_mode,
    )


def _dgp_name(dgp) -> str:
    if isinstance(dgp, SvarSpec):
        return f"svar-{dgp.ordering.value}" + ("-garch" if dgp.garch else "")
    return "plr"


def run_grid(
    grid: ExperimentGrid,
    *,
    cache_dir=None,
    out_csv=None,
    threads: int = 1,
    header_comment: str | None = None,
) -> list[dict]:
    """Evaluate every cell of ``grid``; one row per (T, K, scheme, criterion).

    With ``cache_dir`` set, each finished cell is stored as
    ``<cache_dir>/<fingerprint>.json`` and reused on later runs.
    """
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
    settings = grid.settings()
    rows = []
    for cell in grid.cells():
        key = _cell_key(grid, cell)
        path = cache / f"{key}.json" if cache is not None else None
        if path is not None and path.exists():
            stored = json.loads(path.read_text())
            stored["bias_mode"] = BiasMode(stored["bias_mode"])
            result = CellResult(**stored)
        else:
            result = run_cell(grid.dgp, cell, settings, grid.replications, grid.base_seed, threads=threads,
                              bandwidth=grid.bandwidth, bias_mode=grid.bias_mode)
            if path is not None:
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(result.to_dict(), sort_keys=True))
                os.replace(tmp, path)
        rows.append({
            "dgp": _dgp_name(grid.dgp),
            "T": cell.T,
            "K": cell.K,
            "scheme": cell.scheme.value,
            "criterion": cell.criterion.value,
            "replications": grid.replications,
            "base_seed": grid.base_seed,
            "bias": result.pct_bias,
            "coverage": result.coverage,
            "mean_se": result.mean_se,
            "mc_se_coverage": result.mc_se_coverage,
            "n_converged": result.n_converged,
            "n_failed": result.n_failed,
            "low_convergence": result.low_convergence,
            "bias_mode": result.bias_mode.value,
            "fingerprint": key,
        })
    if out_csv is not None:
        write_rows(rows, out_csv, CSV_COLUMNS, header_comment)
    return rows


def write_rows(rows: list[dict], path, columns: list[str], header_comment: str | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _one_lp_replication(r: int, spec: SvarSpec, T: int, K: int, H: int, scheme, settings, seed, bandwidth):
    sample = simulate_svar(spec, T, RngStream(seed, r), irf_horizon=H)
    try:
        rep = estimate_lp(sample.dataset, make_plan(T, K, scheme), settings, H, bandwidth)
    except (ArithmeticError, ValueError) as exc:
        return r, None, None, sample.irf_true, f"{type(exc).__name__}: {exc}"
    if not rep.converged:
        return r, rep.theta_h, rep.se_h, sample.irf_true, "not converged"
    return r, rep.theta_h, rep.se_h, sample.irf_true, None


def lp_grid(
    spec: SvarSpec,
    T_values,
    K: int,
    H: int,
    replications: int,
    seed: int,
    settings: NuisanceSettings,
    *,
    scheme: Scheme | str = Scheme.RCF,
    threads: int = 1,
    bandwidth: int | None = None,
) -> list[LpCellResult]:
    """Per-horizon mean absolute bias ``|mean(theta_h_hat - theta_h)|`` and coverage."""
    results = []
    for T in T_values:
        fn = partial(_one_lp_replication, spec=spec, T=T, K=K, H=H, scheme=Scheme(scheme), settings=settings,
                     seed=seed, bandwidth=bandwidth)
        outs = _map(fn, range(replications), threads)
        ok = [o for o in outs if o[4] is None]
        if not ok:
            raise RuntimeError(f"all LP replications failed at T={T}; first error: {outs[0][4]}")
        th = np.array([o[1] for o in ok])
        se = np.array([o[2] for o in ok])
        tr = np.array([o[3] for o in ok])
        err = th - tr
        cov = np.mean(np.abs(err) <= 1.96 * se, axis=0)
        n = len(ok)
        results.append(LpCellResult(
            T=T,
            abs_bias=tuple(float(v) for v in np.abs(err.mean(axis=0))),
            coverage=tuple(float(v) for v in cov),
            mc_se_coverage=tuple(float(math.sqrt(p * (1 - p) / n)) for p in cov),
            mean_se=tuple(float(v) for v in se.mean(axis=0)),
            n_converged=n,
            n_failed=len(outs) - n,
            theta_hat=tuple(tuple(float(v) for v in row) for row in th),
        ))
    return results
