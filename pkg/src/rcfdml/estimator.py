"""Cross-fitted residual-on-residual estimation, HAC inference and local projections."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from numpy.typing import NDArray

from .data import TimeSeriesDataset
from .folds import FoldPlan
from .learners import DEFAULT_MAX_ITER, DEFAULT_TOL, PathDesign, fit_path
from .tuning import DEFAULT_WINDOW, Criterion, TuningGrid, TuningTrace, select

__all__ = [
    "EstimateReport",
    "EstimationError",
    "LpReport",
    "NuisanceSettings",
    "ScoreSeries",
    "bartlett_weights",
    "crossfit_residualize",
    "default_bandwidth",
    "estimate",
    "estimate_lp",
    "fold_theta",
    "hac_inference",
    "long_run_variance",
]

Z95 = 1.96
# relative size below which the summed squared policy residual counts as degenerate
WEAK_RESIDUAL_FACTOR = 1e-10
# floor applied when kernel weighting drives the long-run variance to <= 0
SIGMA_FLOOR = 1e-12


class EstimationError(ArithmeticError):
    """Numerical failure inside the estimator (degenerate residuals, non-finite values)."""


@dataclass(frozen=True)
class NuisanceSettings:
    """Learner and tuning options shared by both nuisance regressions.

    ``grid`` may be a single :class:`TuningGrid` or a mapping with keys
    ``"policy"`` and ``"outcome"`` giving one grid per nuisance.

    ``penalty_scale`` fixes how grid values map to the learner penalty:
    ``"mean"`` uses them as ``alpha`` in the ``(2n)^-1``-normalized objective;
    ``"sum"`` reads them as penalties on the un-normalized ``1/2 ||r||^2``
    objective, i.e. ``alpha = lambda / n_aux`` for each fold.
    """

    grid: TuningGrid | Mapping[str, TuningGrid]
    criterion: Criterion = Criterion.RMSE
    l1_ratio: float = 1.0
    window: int = DEFAULT_WINDOW
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    penalty_scale: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        if self.penalty_scale not in ("mean", "sum"):
            raise ValueError("penalty_scale must be 'mean' or 'sum'")
        if isinstance(self.grid, Mapping):
            if set(self.grid) != {"policy", "outcome"}:
                raise ValueError("per-nuisance grids need exactly the keys 'policy' and 'outcome'")

    def grid_for(self, target: str) -> TuningGrid:
        return self.grid[target] if isinstance(self.grid, Mapping) else self.grid


@dataclass
class ScoreSeries:
    """Stacked residual pairs in time order plus the fold owning each row."""

    chi: NDArray[np.float64]
    xi: NDArray[np.float64]
    fold_of_t: NDArray[np.int64]
    theta_hat: float = math.nan
    traces: list[dict[str, TuningTrace]] = field(default_factory=list, repr=False)
    converged: bool = True

    def __post_init__(self):
        if not (self.chi.shape == self.xi.shape == self.fold_of_t.shape):
            raise ValueError("chi, xi and fold_of_t must have equal length")

    @property
    def T(self) -> int:
        return self.chi.shape[0]

    @property
    def scores(self) -> NDArray[np.float64]:
        if math.isnan(self.theta_hat):
            raise ValueError("theta_hat not set")
        return self.xi * (self.chi - self.theta_hat * self.xi)


@dataclass
class EstimateReport:
    theta_hat: float
    per_fold_thetas: NDArray[np.float64]
    se: float
    A_hat: float
    Sigma_hat: float
    bandwidth_used: int
    tuning_traces: list[dict[str, TuningTrace]] = field(repr=False)
    converged: bool = True
    scheme: str = ""
    T: int = 0

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.theta_hat - Z95 * self.se, self.theta_hat + Z95 * self.se)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "se": self.se,
            "ci95": list(self.ci95),
            "per_fold_thetas": [float(v) for v in self.per_fold_thetas],
            "A_hat": self.A_hat,
            "Sigma_hat": self.Sigma_hat,
            "bandwidth_used": self.bandwidth_used,
            "kernel": "bartlett",
            "converged": self.converged,
            "scheme": self.scheme,
            "T": self.T,
            "tuning_traces": [{k: v.to_dict() for k, v in fold.items()} for fold in self.tuning_traces],
        }

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps({**self.to_dict(), **extra}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class LpReport:
    theta_h: NDArray[np.float64]
    se_h: NDArray[np.float64]
    per_fold_thetas: list[NDArray[np.float64]] = field(repr=False)
    bandwidth_used: list[int] = field(repr=False)
    converged: bool = True

    # cumulative bands add per-horizon variances and ignore cross-horizon covariance
    CUMULATIVE_NOTE = "cumulative variance = sum of per-horizon variances (cross-horizon covariance ignored)"

    @property
    def H(self) -> int:
        return self.theta_h.shape[0] - 1

    @property
    def horizons(self) -> NDArray[np.int64]:
        return np.arange(self.H + 1)

    @property
    def cumulative_theta(self) -> NDArray[np.float64]:
        return np.cumsum(self.theta_h)

    @property
    def cumulative_se(self) -> NDArray[np.float64]:
        return np.sqrt(np.cumsum(self.se_h**2))

    @property
    def cumulative_ci(self) -> NDArray[np.float64]:
        c, s = self.cumulative_theta, self.cumulative_se
        return np.column_stack([c - Z95 * s, c + Z95 * s])

    def to_dict(self) -> dict:
        ci = self.cumulative_ci
        return {
            "horizons": self.horizons.tolist(),
            "theta_h": self.theta_h.tolist(),
            "se_h": self.se_h.tolist(),
            "cumulative_theta": self.cumulative_theta.tolist(),
            "cumulative_ci": ci.tolist(),
            "per_fold_thetas": [v.tolist() for v in self.per_fold_thetas],
            "bandwidth_used": list(self.bandwidth_used),
            "converged": self.converged,
            "cumulative_note": self.CUMULATIVE_NOTE,
        }

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps({**self.to_dict(), **extra}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, path, header_comment: str | None = None) -> None:
        ci = self.cumulative_ci
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                for line in header_comment.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["horizon", "theta", "se", "cum_theta", "cum_lo95", "cum_hi95"])
            for h in range(self.H + 1):
                w.writerow([h, *(repr(float(v)) for v in (self.theta_h[h], self.se_h[h],
                                                           self.cumulative_theta[h], ci[h, 0], ci[h, 1]))])


def _check_plan(data: TimeSeriesDataset, plan: FoldPlan):
    if plan.T != data.T:
        raise ValueError(f"plan covers T={plan.T} but data has T={data.T}")
    if plan.K < 2:
        raise ValueError("need K >= 2 folds")
    for k, f in enumerate(plan.folds):
        if f.n_aux == 0:
            raise ValueError(f"fold {k + 1} has an empty auxiliary set")


def _tuned_residuals(design, y_aux, X_main, y_main, grid, settings: NuisanceSettings):
    """Fit the grid on auxiliary rows, score each penalty on the main block, return main residuals."""
    alphas = grid.as_array()
    if settings.penalty_scale == "sum":
        alphas = alphas / design.n
    fits = fit_path(design, y_aux, alphas, settings.l1_ratio, settings.tol, settings.max_iter)
    resid = [y_main - (f.intercept + X_main @ f.coefficients) for f in fits]
    rm = [float(np.sqrt(np.mean(r**2))) for r in resid]
    trace = select(rm, grid, settings.criterion, settings.window)
    i = trace.chosen_index
    return resid[i], trace, fits[i].converged


def _policy_pass(X, d, plan: FoldPlan, settings: NuisanceSettings):
    """Per fold: auxiliary design, policy residuals on the main block, policy trace."""
    out = []
    grid = settings.grid_for("policy")
    for f in plan.folds:
        aux, main = f.aux_index(), f.main_index()
        design = PathDesign(X[aux])
        r, trace, conv = _tuned_residuals(design, d[aux], X[main], d[main], grid, settings)
        out.append((design, r, trace, conv))
    return out


def _outcome_pass(X, y, plan: FoldPlan, settings: NuisanceSettings, h: int, policy):
    """Outcome residuals for target ``y_{t+h}``; rows whose lead falls outside the sample are dropped."""
    T = X.shape[0]
    grid = settings.grid_for("outcome")
    out = []
    for k, f in enumerate(plan.folds):
        aux, main = f.aux_index(), f.main_index()
        design = policy[k][0]
        if h > 0:
            aux = aux[aux + h < T]
            if aux.size < 2:
                raise EstimationError(f"fold {k + 1}: fewer than 2 auxiliary rows at horizon {h}")
            design = PathDesign(X[aux])
        keep = main + h < T
        m = main[keep]
        if m.size == 0:
            out.append((m, None, None, None, True))
            continue
        r, trace, conv = _tuned_residuals(design, y[aux + h], X[m], y[m + h], grid, settings)
        out.append((m, keep, r, trace, conv))
    return out


def _assemble(plan: FoldPlan, policy, outcome, T_eff: int) -> ScoreSeries:
    chi = np.empty(T_eff)
    xi = np.empty(T_eff)
    fold_of_t = np.empty(T_eff, dtype=np.int64)
    traces = []
    conv = True
    for k, ((_, rpol, tpol, cpol), (m, keep, rout, tout, cout)) in enumerate(zip(policy, outcome)):
        if m.size == 0:
            continue
        chi[m] = rout
        xi[m] = rpol[keep]
        fold_of_t[m] = k
        traces.append({"policy": tpol, "outcome": tout})
        conv = conv and cpol and cout
    if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(xi))):
        raise EstimationError("non-finite residuals")
    return ScoreSeries(chi, xi, fold_of_t, traces=traces, converged=conv)


def crossfit_residualize(
    data: TimeSeriesDataset, plan: FoldPlan, settings: NuisanceSettings
) -> ScoreSeries:
    """Residualize outcome and policy on the controls fold by fold.

    Both nuisances are trained on the fold's auxiliary rows only and evaluated
    on its main block; residuals are returned in time order.
    """
    _check_plan(data, plan)
    X = data.control_matrix()
    policy = _policy_pass(X, data.policy, plan, settings)
    outcome = _outcome_pass(X, data.outcome, plan, settings, 0, policy)
    return _assemble(plan, policy, outcome, data.T)


def fold_theta(chi, xi) -> float:
    """Residual-on-residual slope ``sum(chi*xi) / sum(xi^2)``."""
    chi = np.asarray(chi, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if chi.shape != xi.shape or chi.size == 0:
        raise ValueError("chi and xi must be non-empty and of equal length")
    den = float(xi @ xi)
    if not den >= WEAK_RESIDUAL_FACTOR * xi.size:
        raise EstimationError(
            f"weak residualization: sum of squared policy residuals {den:.3e} on a block of {xi.size} rows"
        )
    return float(chi @ xi) / den


def _per_fold(series: ScoreSeries, K: int) -> NDArray[np.float64]:
    thetas = []
    for k in range(K):
        sel = series.fold_of_t == k
        if np.any(sel):
            thetas.append(fold_theta(series.chi[sel], series.xi[sel]))
    return np.asarray(thetas)


def default_bandwidth(T: int) -> int:
    return int(math.floor(1.3 * T**0.25))


def bartlett_weights(H: int) -> NDArray[np.float64]:
    """Kernel weights ``k(h/H) = 1 - h/H`` for ``h = 0..H``."""
    if H < 0:
        raise ValueError("bandwidth must be >= 0")
    if H == 0:
        return np.ones(1)
    return 1.0 - np.arange(H + 1) / H


def long_run_variance(scores, bandwidth: int | None = None) -> tuple[float, int]:
    """Bartlett-kernel long-run variance of the centered scores; returns (Sigma_hat, H)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    T = s.size
    if T < 4:
        raise ValueError("need T >= 4 scores")
    H = default_bandwidth(T) if bandwidth is None else int(bandwidth)
    if H < 0 or H >= T:
        raise ValueError(f"bandwidth {H} invalid for T={T}")
    e = s - s.mean()
    w = bartlett_weights(H)
    sigma = float(e @ e) / T
    for h in range(1, H + 1):
        sigma += 2.0 * w[h] * float(e[h:] @ e[:-h]) / T
    if not sigma > 0:
        sigma = SIGMA_FLOOR
    return sigma, H


def hac_inference(series: ScoreSeries, bandwidth: int | None = None) -> tuple[float, float, float, int]:
    """Return ``(A_hat, Sigma_hat, se, H)`` for the stacked score process."""
    sigma, H = long_run_variance(series.scores, bandwidth)
    A = float(series.xi @ series.xi) / series.T
    if not A > 0:
        raise EstimationError("policy residuals are identically zero")
    se = math.sqrt(sigma / (series.T * A * A))
    return A, sigma, se, H


def _finish(series: ScoreSeries, K: int, bandwidth):
    thetas = _per_fold(series, K)
    series.theta_hat = float(np.mean(thetas))
    A, sigma, se, H = hac_inference(series, bandwidth)
    return thetas, A, sigma, se, H


def estimate(
    data: TimeSeriesDataset,
    plan: FoldPlan,
    settings: NuisanceSettings,
    bandwidth: int | None = None,
) -> EstimateReport:
    """Average of the per-fold residual slopes with a HAC standard error."""
    series = crossfit_residualize(data, plan, settings)
    thetas, A, sigma, se, H = _finish(series, plan.K, bandwidth)
    return EstimateReport(
        theta_hat=series.theta_hat,
        per_fold_thetas=thetas,
        se=se,
        A_hat=A,
        Sigma_hat=sigma,
        bandwidth_used=H,
        tuning_traces=series.traces,
        converged=series.converged,
        scheme=plan.scheme.value,
        T=data.T,
    )


def estimate_lp(
    data: TimeSeriesDataset,
    plan: FoldPlan,
    settings: NuisanceSettings,
    H: int,
    bandwidth: int | None = None,
) -> LpReport:
    """Local-projection responses for horizons ``0..H``.

    The policy residual is computed once; the outcome nuisance is refit per
    horizon on auxiliary rows whose lead ``t + h`` is observed. A fold whose
    main block has no usable rows at some horizon is left out of that
    horizon's average.
    """
    _check_plan(data, plan)
    if H < 0:
        raise ValueError("H must be >= 0")
    min_block = min(f.main[1] - f.main[0] for f in plan.folds)
    if data.T <= H + min_block:
        raise ValueError(f"H={H} too large for T={data.T}")
    X = data.control_matrix()
    policy = _policy_pass(X, data.policy, plan, settings)
    theta, se, per_fold, bw = [], [], [], []
    conv = True
    for h in range(H + 1):
        outcome = _outcome_pass(X, data.outcome, plan, settings, h, policy)
        series = _assemble(plan, policy, outcome, data.T - h)
        thetas, _, _, s, used = _finish(series, plan.K, bandwidth)
        theta.append(series.theta_hat)
        se.append(s)
        per_fold.append(thetas)
        bw.append(used)
        conv = conv and series.converged
    return LpReport(np.asarray(theta), np.asarray(se), per_fold, bw, conv)
