"""Penalized linear nuisance learners fit by cyclic coordinate descent.

The objective is

    (2n)^-1 ||y - b0 - X b||^2 + alpha * (l1_ratio * ||b||_1 + 0.5 * (1 - l1_ratio) * ||b||_2^2)

with the intercept unpenalized. Fitting happens on standardized predictors and a
standardized response; coefficients are mapped back to the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from numpy.typing import NDArray

from .numerics import Standardizer, as_matrix

__all__ = [
    "LinearFit",
    "PenaltySpec",
    "PathDesign",
    "fit_elastic_net",
    "fit_path",
    "kkt_violation",
    "objective",
    "predict",
    "rmse",
]

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class PenaltySpec:
    alpha: float
    l1_ratio: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ValueError(f"l1_ratio must lie in [0, 1], got {self.l1_ratio}")


@dataclass
class LinearFit:
    """Affine predictor ``intercept + x @ coefficients`` plus fit diagnostics.

    ``std_coef`` holds the solution in standardized units; ``fitted`` the
    in-sample predictions (only kept when requested).
    """

    intercept: float
    coefficients: NDArray[np.float64]
    penalty: PenaltySpec
    n_iterations: int
    converged: bool
    kkt: float = np.nan
    std_coef: NDArray[np.float64] | None = field(default=None, repr=False)
    fitted: NDArray[np.float64] | None = field(default=None, repr=False)
    objective_trace: NDArray[np.float64] | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def to_dict(self) -> dict:
        return {
            "intercept": float(self.intercept),
            "coefficients": [float(c) for c in self.coefficients],
            "alpha": self.penalty.alpha,
            "l1_ratio": self.penalty.l1_ratio,
            "n_iterations": int(self.n_iterations),
            "converged": bool(self.converged),
        }


@numba.njit(cache=True, nogil=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@numba.njit(cache=True, nogil=True)
def _objective(G, c, yy, b, l1pen, l2pen):
    q = G @ b
    val = 0.5 * yy - c @ b + 0.5 * (b @ q)
    return val + l1pen * np.sum(np.abs(b)) + 0.5 * l2pen * (b @ b)


@numba.njit(cache=True, nogil=True)
def _kkt(G, c, b, l1pen, l2pen, active):
    worst = 0.0
    q = G @ b
    for j in range(b.shape[0]):
        if not active[j]:
            continue
        g = c[j] - q[j] - l2pen * b[j]
        if b[j] != 0.0:
            v = abs(g - l1pen * np.sign(b[j]))
        else:
            v = abs(g) - l1pen
        if v > worst:
            worst = v
    return worst


@numba.njit(cache=True, nogil=True)
def _cd_gram(G, c, yy, b, l1pen, l2pen, active, tol, max_iter, trace):
    """Covariance-update coordinate descent. ``b`` is updated in place.

    Returns (n_sweeps, converged, kkt). When ``trace`` has length > 0 the
    objective after each sweep is written into it.
    """
    p = b.shape[0]
    q = G @ b
    kkt = np.inf
    for it in range(max_iter):
        max_delta = 0.0
        for j in range(p):
            if not active[j]:
                continue
            gjj = G[j, j]
            z = c[j] - q[j] + gjj * b[j]
            new = _soft(z, l1pen) / (gjj + l2pen)
            delta = new - b[j]
            if delta != 0.0:
                b[j] = new
                row = G[j]
                for k in range(p):
                    q[k] += row[k] * delta
                ad = abs(delta)
                if ad > max_delta:
                    max_delta = ad
        if trace.shape[0] > it:
            trace[it] = _objective(G, c, yy, b, l1pen, l2pen)
        if max_delta < tol:
            # refresh the running gradient before certifying optimality
            q = G @ b
            kkt = _kkt(G, c, b, l1pen, l2pen, active)
            if kkt <= tol:
                return it + 1, True, kkt
    kkt = _kkt(G, c, b, l1pen, l2pen, active)
    return max_iter, False, kkt


def _validate(X, y):
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"y has {y.shape[0]} rows, X has {X.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to fit")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite entries")
    return X, y


class PathDesign:
    """Standardized design and Gram matrix shared by every fit on the same rows.

    Building this once lets a whole penalty grid, and several responses, reuse
    one ``O(n p^2)`` Gram computation.
    """

    def __init__(self, X):
        X = as_matrix(X, "X")
        if X.shape[0] < 2:
            raise ValueError("need at least two rows to fit")
        self.n, self.p = X.shape
        self.standardizer = Standardizer.fit(X)
        self.Z = self.standardizer.transform(X)
        self.G = np.ascontiguousarray(self.Z.T @ self.Z) / self.n
        self.active = np.ones(self.p, dtype=np.bool_)
        if self.standardizer.constant:
            self.active[list(self.standardizer.constant)] = False

    def response(self, y) -> tuple[float, float, NDArray[np.float64], float]:
        """Return (mean, scale, c = Z'y~/n, y~'y~/n) for standardized response y~."""
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != self.n:
            raise ValueError(f"y has {y.shape[0]} rows, design has {self.n}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        ybar = float(y.mean())
        yc = y - ybar
        sy = float(np.sqrt(np.mean(yc**2)))
        if sy <= 1e-13 * max(1.0, abs(ybar)):
            sy = 0.0
        yt = yc / sy if sy > 0 else np.zeros_like(yc)
        c = self.Z.T @ yt / self.n
        return ybar, sy, c, float(yt @ yt / self.n)


def _make_fit(design: PathDesign, ybar, sy, b, penalty, n_it, conv, kkt, trace=None) -> LinearFit:
    st = design.standardizer
    coef = sy * b / st.scales
    intercept = ybar - float(st.means @ coef)
    return LinearFit(
        intercept=intercept,
        coefficients=coef,
        penalty=penalty,
        n_iterations=int(n_it),
        converged=bool(conv),
        kkt=float(kkt),
        std_coef=b.copy(),
        objective_trace=trace,
    )


def _solve(design, c, yy, sy, b, penalty, tol, max_iter, trace_len=0):
    if sy == 0.0:
        b[:] = 0.0
        return 0, True, 0.0, (np.zeros(0) if trace_len else None)
    # dividing the objective by sy^2 rescales only the L1 term
    l1pen = penalty.alpha * penalty.l1_ratio / sy
    l2pen = penalty.alpha * (1.0 - penalty.l1_ratio)
    trace = np.full(trace_len, np.nan)
    # at or above the entry threshold zero is the exact solution; rounding must not leak through
    if design.active.any() and np.max(np.abs(c[design.active])) <= l1pen * (1.0 + 1e-12):
        b[:] = 0.0
        return 0, True, 0.0, (trace[:0] if trace_len else None)
    n_it, conv, kkt = _cd_gram(design.G, c, yy, b, l1pen, l2pen, design.active, tol, max_iter, trace)
    return n_it, conv, kkt, (trace[:n_it] if trace_len else None)


def fit_elastic_net(
    X,
    y,
    penalty: PenaltySpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    warm_start: NDArray[np.float64] | None = None,
    keep_fitted: bool = False,
    trace_objective: bool = False,
) -> LinearFit:
    """Fit one elastic net by coordinate descent.

    ``tol`` bounds the largest standardized coefficient change in the final
    sweep and the KKT violation at the returned point. Hitting ``max_iter``
    returns the current iterate with ``converged=False``.
    """
    X, y = _validate(X, y)
    design = PathDesign(X)
    ybar, sy, c, yy = design.response(y)
    b = np.zeros(design.p) if warm_start is None else np.array(warm_start, dtype=np.float64)
    n_it, conv, kkt, trace = _solve(
        design, c, yy, sy, b, penalty, tol, max_iter, trace_len=max_iter if trace_objective else 0
    )
    fit = _make_fit(design, ybar, sy, b, penalty, n_it, conv, kkt, trace)
    if keep_fitted:
        fit.fitted = predict(fit, X)
    return fit


def fit_path(
    design: PathDesign | NDArray[np.float64],
    y,
    alphas: Sequence[float],
    l1_ratio: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[LinearFit]:
    """Fit a penalty path with warm starts, largest penalty first.

    The returned list is aligned with ``alphas`` as given.
    """
    if not isinstance(design, PathDesign):
        design = PathDesign(design)
    ybar, sy, c, yy = design.response(y)
    alphas = np.asarray(alphas, dtype=np.float64)
    fits: list[LinearFit | None] = [None] * len(alphas)
    b = np.zeros(design.p)
    for i in np.argsort(-alphas, kind="stable"):
        pen = PenaltySpec(float(alphas[i]), l1_ratio)
        n_it, conv, kkt, _ = _solve(design, c, yy, sy, b, pen, tol, max_iter)
        fits[i] = _make_fit(design, ybar, sy, b, pen, n_it, conv, kkt)
    return fits  # type: ignore[return-value]


def predict(fit: LinearFit, X) -> NDArray[np.float64]:
    X = as_matrix(X, "X")
    if X.shape[1] != fit.n_features:
        raise ValueError(f"fit has {fit.n_features} features, X has {X.shape[1]}")
    return fit.intercept + X @ fit.coefficients


def rmse(predictions, truth) -> float:
    a = np.asarray(predictions, dtype=np.float64).ravel()
    b = np.asarray(truth, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def objective(fit: LinearFit, X, y) -> float:
    """Original-scale objective value of ``fit`` on ``(X, y)``."""
    X, y = _validate(X, y)
    r = y - predict(fit, X)
    b = fit.coefficients
    a, l1 = fit.penalty.alpha, fit.penalty.l1_ratio
    return float(r @ r / (2 * len(y)) + a * (l1 * np.abs(b).sum() + 0.5 * (1 - l1) * b @ b))


def kkt_violation(fit: LinearFit, X, y) -> float:
    """Largest stationarity violation of ``fit`` for data ``(X, y)``.

    Measured in standardized-predictor units with the response on its original
    scale: for active j, ``|n^-1 z_j'r - alpha(1-l1) b_j - alpha l1 sign(b_j)|``;
    for inactive j, ``max(0, |n^-1 z_j'r| - alpha l1)``.
    """
    X, y = _validate(X, y)
    st = Standardizer.fit(X)
    Z = st.transform(X)
    yc = y - y.mean()
    bs = fit.coefficients * st.scales
    r = yc - Z @ bs
    g = Z.T @ r / len(y)
    a, l1 = fit.penalty.alpha, fit.penalty.l1_ratio
    g = g - a * (1 - l1) * bs
    nz = bs != 0
    v = np.where(nz, np.abs(g - a * l1 * np.sign(bs)), np.maximum(0.0, np.abs(g) - a * l1))
    if st.constant:
        v[list(st.constant)] = 0.0
    return float(v.max()) if v.size else 0.0
