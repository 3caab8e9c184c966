"""Penalty selection per fold: plain RMSE minimization and the Goldilocks-zone rule.

The Goldilocks rule slides a window of ``S`` adjacent grid points over the
per-penalty RMSE curve, scores each window by its min-max normalized RMSE
variance plus its min-max normalized mean RMSE, and picks the lowest-RMSE
penalty inside the best-scoring window.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "Criterion",
    "TuningGrid",
    "TuningTrace",
    "goldilocks_select",
    "rmse_select",
    "select",
    "window_stats",
]

DEFAULT_WINDOW = 3


class Criterion(str, Enum):
    RMSE = "rmse"
    GOLDILOCKS = "goldilocks"


@dataclass(frozen=True)
class TuningGrid:
    lambdas: tuple[float, ...]

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.ndim != 1 or lam.size < 1 or not np.all(np.isfinite(lam)):
            raise ValueError("grid must be a non-empty 1-D sequence of finite values")
        if lam.size > 1:
            step = np.diff(lam)
            if np.any(step <= 0):
                raise ValueError("grid must be strictly increasing")
            if np.max(np.abs(step - step[0])) > 1e-10 * max(abs(step[0]), np.max(np.abs(lam))):
                raise ValueError("grid must be equally spaced")

    @classmethod
    def linspace(cls, lower: float, upper: float, size: int) -> "TuningGrid":
        if size < 1:
            raise ValueError("grid size must be >= 1")
        if size > 1 and not upper > lower:
            raise ValueError("upper bound must exceed lower bound")
        return cls(tuple(float(v) for v in np.linspace(lower, upper, size)))

    @property
    def M(self) -> int:
        return len(self.lambdas)

    def scaled(self, c: float) -> "TuningGrid":
        return TuningGrid(tuple(c * v for v in self.lambdas))

    def as_array(self) -> NDArray[np.float64]:
        return np.asarray(self.lambdas, dtype=np.float64)


@dataclass(frozen=True)
class TuningTrace:
    grid: TuningGrid
    rmse_per_lambda: tuple[float, ...]
    chosen_index: int
    criterion: Criterion
    chosen_window: tuple[int, int] | None = None  # half-open grid-index range
    window_scores: tuple[float, ...] | None = None

    @property
    def chosen_lambda(self) -> float:
        return self.grid.lambdas[self.chosen_index]

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion.value,
            "grid": list(self.grid.lambdas),
            "rmse": list(self.rmse_per_lambda),
            "chosen_index": self.chosen_index,
            "chosen_lambda": self.chosen_lambda,
            "chosen_window": list(self.chosen_window) if self.chosen_window else None,
            "window_scores": list(self.window_scores) if self.window_scores is not None else None,
        }


def _as_rmse(rmse) -> NDArray[np.float64]:
    r = np.asarray(rmse, dtype=np.float64).ravel()
    if r.size == 0:
        raise ValueError("empty RMSE vector")
    if not np.all(np.isfinite(r)):
        raise ValueError("RMSE vector contains non-finite values")
    return r


def window_stats(rmse, S: int = DEFAULT_WINDOW) -> list[tuple[float, float]]:
    """Per-window ``(V_j, Rbar_j)``: population variance and mean over ``S`` adjacent points."""
    r = _as_rmse(rmse)
    if S < 2:
        raise ValueError("window size S must be >= 2")
    if S > r.size:
        raise ValueError(f"window size S={S} exceeds grid length {r.size}")
    win = np.lib.stride_tricks.sliding_window_view(r, S)
    means = win.mean(axis=1)
    var = ((win - means[:, None]) ** 2).mean(axis=1)
    return [(float(v), float(m)) for v, m in zip(var, means)]


def _minmax(x: NDArray[np.float64]) -> NDArray[np.float64]:
    lo, hi = x.min(), x.max()
    # a flat component carries no ranking information
    if hi - lo <= 0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def _first_argmin(x) -> int:
    x = np.asarray(x)
    return int(np.flatnonzero(x == x.min())[0])


def rmse_select(rmse, grid: TuningGrid) -> TuningTrace:
    r = _as_rmse(rmse)
    if r.size != grid.M:
        raise ValueError(f"{r.size} RMSE values for a grid of {grid.M}")
    return TuningTrace(grid, tuple(float(v) for v in r), _first_argmin(r), Criterion.RMSE)


def goldilocks_select(rmse, grid: TuningGrid, S: int = DEFAULT_WINDOW) -> TuningTrace:
    r = _as_rmse(rmse)
    if r.size != grid.M:
        raise ValueError(f"{r.size} RMSE values for a grid of {grid.M}")
    stats = np.asarray(window_stats(r, S))
    scores = _minmax(stats[:, 0]) + _minmax(stats[:, 1])
    j = _first_argmin(scores)
    chosen = j + _first_argmin(r[j:j + S])
    return TuningTrace(
        grid,
        tuple(float(v) for v in r),
        chosen,
        Criterion.GOLDILOCKS,
        chosen_window=(j, j + S),
        window_scores=tuple(float(s) for s in scores),
    )


def select(rmse, grid: TuningGrid, criterion: Criterion | str, S: int = DEFAULT_WINDOW) -> TuningTrace:
    if Criterion(criterion) is Criterion.GOLDILOCKS:
        return goldilocks_select(rmse, grid, S)
    return rmse_select(rmse, grid)
