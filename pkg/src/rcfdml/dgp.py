"""Simulation designs: recursive SVAR (optionally with GARCH shocks) and an approximately sparse PLR.

Ground truth for the SVAR comes from population second moments of the model,
never from simulated data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum

import numba
import numpy as np
from numpy.typing import NDArray

from .data import Role, TimeSeriesDataset
from .numerics import RngStream, solve_discrete_lyapunov, spectral_radius

__all__ = [
    "GarchSpec",
    "Ordering",
    "PlrSpec",
    "SimulatedSample",
    "SvarSpec",
    "build_svar_matrices",
    "fingerprint",
    "garch_filter",
    "policy_outcome_index",
    "simulate_plr",
    "simulate_svar",
    "svar_columns",
    "true_irf_svar",
    "true_theta_svar",
]


class Ordering(str, Enum):
    CORRECT = "correct"
    MISSPECIFIED = "misspecified"


@dataclass(frozen=True)
class GarchSpec:
    omega_g: float = 0.05
    alpha_g: float = 0.10
    beta_g: float = 0.85

    def __post_init__(self):
        if self.omega_g <= 0 or self.alpha_g < 0 or self.beta_g < 0:
            raise ValueError("GARCH parameters must be positive")
        if self.alpha_g + self.beta_g >= 1:
            raise ValueError("alpha_g + beta_g must be < 1 for covariance stationarity")

    @property
    def unconditional_variance(self) -> float:
        return self.omega_g / (1.0 - self.alpha_g - self.beta_g)


@dataclass(frozen=True)
class SvarSpec:
    n: int = 100
    band: int = 5
    kappa: float = 0.3
    alpha_decay: float = 1.5
    beta_decay: float = 2.0
    delta: float = 1.5
    omega: float = 0.7
    gamma: float = 0.5
    rho_star: float = 0.95
    d_min: float = 0.8
    d_max: float = 1.2
    mu: float = 0.0
    burn_in: int = 300
    ordering: Ordering = Ordering.CORRECT
    garch: GarchSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        if isinstance(self.garch, dict):
            object.__setattr__(self, "garch", GarchSpec(**self.garch))
        if self.n < 2:
            raise ValueError("SVAR needs n >= 2 variables")
        if self.ordering is Ordering.MISSPECIFIED and self.n < 4:
            raise ValueError("the mis-specified ordering needs n >= 4")
        if not 0 < self.rho_star < 1:
            raise ValueError("rho_star must lie in (0, 1)")
        if self.d_min <= 0 or self.d_max < self.d_min:
            raise ValueError("need 0 < d_min <= d_max")
        if self.band < 0 or self.burn_in < 0 or self.kappa < 0:
            raise ValueError("band, burn_in and kappa must be non-negative")


@dataclass(frozen=True)
class PlrSpec:
    p: int = 100
    rho: float = 0.9
    cor: float = 0.0
    theta0: float = 0.5
    burn_in: int = 300
    coef_scale: float = 1.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("need p >= 1 confounders")
        if not abs(self.rho) < 1 or not abs(self.cor) < 1:
            raise ValueError("|rho| and |cor| must be < 1")
        if self.burn_in < 0 or self.noise_scale < 0:
            raise ValueError("burn_in and noise_scale must be non-negative")


@dataclass
class SimulatedSample:
    dataset: TimeSeriesDataset
    theta_true: float
    fingerprint: str
    irf_true: NDArray[np.float64] | None = None
    matrices: dict[str, NDArray[np.float64]] = field(default_factory=dict, repr=False)


def fingerprint(*parts) -> str:
    def default(o):
        if isinstance(o, Enum):
            return o.value
        if isinstance(o, RngStream):
            return [o.seed, o.stream_id]
        if hasattr(o, "__dataclass_fields__"):
            return asdict(o)
        raise TypeError(f"cannot fingerprint {type(o).__name__}")

    blob = json.dumps(parts, default=default, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _gen(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


def policy_outcome_index(n: int, ordering: Ordering | str) -> tuple[int, int]:
    """0-based (policy, outcome) variable positions. The outcome is always last."""
    if Ordering(ordering) is Ordering.CORRECT:
        return n - 2, n - 1
    return (n - 1) // 2, n - 1


def build_svar_matrices(spec: SvarSpec, rng) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Draw the banded autoregressive matrix and the lower-triangular impact matrix.

    The policy-to-outcome impact is fixed at ``gamma`` for both candidate policy
    positions, so the two orderings share identical matrices.
    """
    gen = _gen(rng)
    n, b = spec.n, spec.band
    eta = gen.uniform(0.8, 1.2, size=(n, n))
    i, j = np.indices((n, n))
    dist = np.abs(i - j).astype(np.float64)
    phi = np.where(i > j, spec.kappa / (1.0 + dist**spec.alpha_decay), 0.0)
    phi = np.where(i < j, 0.6 * spec.kappa / (1.0 + dist**spec.beta_decay), phi)
    phi = np.where(i == j, spec.kappa, phi) * eta
    phi[dist > b] = 0.0
    rho = spectral_radius(phi)
    if rho > spec.rho_star:
        phi *= spec.rho_star / rho

    diag = gen.uniform(spec.d_min, spec.d_max, size=n)
    xi = gen.uniform(0.4, 1.6, size=(n, n))
    P = np.where(i > j, spec.omega * xi / (1.0 + dist**spec.delta), 0.0)
    P[np.diag_indices(n)] = diag
    out = n - 1
    for ordering in Ordering:
        if ordering is Ordering.MISSPECIFIED and n < 4:
            continue
        pol, _ = policy_outcome_index(n, ordering)
        P[out, pol] = spec.gamma
    return phi, P


@numba.njit(cache=True)
def _var1_recursion(phi, mu, E):
    T, n = E.shape
    Y = np.empty((T, n))
    prev = np.zeros(n)
    for t in range(T):
        cur = mu + phi @ prev + E[t]
        Y[t] = cur
        prev = cur
    return Y


@numba.njit(cache=True)
def _garch_shocks(Z, omega, alpha, beta):
    T, n = Z.shape
    U = np.empty((T, n))
    h = np.full(n, omega / (1.0 - alpha - beta))
    for t in range(T):
        for i in range(n):
            if h[i] <= 0.0:
                raise ValueError("GARCH conditional variance became non-positive")
            U[t, i] = np.sqrt(h[i]) * Z[t, i]
            h[i] = omega + alpha * U[t, i] ** 2 + beta * h[i]
    return U


def garch_filter(Z, spec: GarchSpec) -> NDArray[np.float64]:
    """Scale i.i.d. draws ``Z`` (rows = time) by GARCH(1,1) volatilities, one process per column."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    return _garch_shocks(Z, spec.omega_g, spec.alpha_g, spec.beta_g)


def svar_columns(n: int) -> tuple[list[str], list[str]]:
    names = [f"y{i + 1}" for i in range(n)]
    return names, [f"{c}_lag1" for c in names]


def _svar_dataset(Y: NDArray[np.float64], ordering: Ordering) -> TimeSeriesDataset:
    n = Y.shape[1]
    cur, lag = Y[1:], Y[:-1]
    names, lag_names = svar_columns(n)
    pol, out = policy_outcome_index(n, ordering)
    cols: dict[str, NDArray[np.float64]] = {}
    roles: dict[str, Role] = {}
    for k, name in enumerate(names):
        cols[name] = np.ascontiguousarray(cur[:, k])
        roles[name] = Role.OUTCOME if k == out else Role.POLICY if k == pol else Role.CONTROL
    for k, name in enumerate(lag_names):
        cols[name] = np.ascontiguousarray(lag[:, k])
        roles[name] = Role.CONTROL
    return TimeSeriesDataset(cols, roles, tuple(str(t) for t in range(cur.shape[0])))


def simulate_svar(spec: SvarSpec, T: int, rng, irf_horizon: int | None = None) -> SimulatedSample:
    """Simulate ``T + burn_in + 1`` steps from a zero state and keep the last ``T``.

    The extra step supplies the first-lag controls, so the dataset has exactly
    ``T`` rows: all contemporaneous non-outcome, non-policy variables plus one
    lag of every variable enter as controls.
    """
    if T < 10:
        raise ValueError("need T >= 10")
    gen = _gen(rng)
    phi, P = build_svar_matrices(spec, gen)
    steps = T + spec.burn_in + 1
    Z = gen.standard_normal((steps, spec.n))
    if spec.garch is not None:
        U = garch_filter(Z, spec.garch)
    else:
        U = Z
    E = U @ P.T
    Y = _var1_recursion(phi, np.full(spec.n, float(spec.mu)), np.ascontiguousarray(E))
    data = _svar_dataset(Y[-(T + 1):], spec.ordering)
    theta = true_theta_svar(phi, P, spec.ordering)
    irf = None if irf_horizon is None else true_irf_svar(phi, P, irf_horizon, spec.ordering)
    fp = fingerprint("svar", spec, T, rng if isinstance(rng, RngStream) else None)
    return SimulatedSample(data, theta, fp, irf, {"Phi1": phi, "P": P})


def _stationary_blocks(phi, P):
    """Covariance of Y_t and cross-covariance Cov(Y_t, Y_{t-1}) of the stable VAR(1)."""
    sigma = solve_discrete_lyapunov(phi, P @ P.T)
    return sigma, phi @ sigma


def _regressor_layout(n: int, ordering: Ordering):
    pol, out = policy_outcome_index(n, ordering)
    contemp = [pol] + [k for k in range(n) if k not in (pol, out)]
    return pol, out, contemp


def true_theta_svar(Phi1, P, ordering: Ordering | str = Ordering.CORRECT) -> float:
    """Population coefficient on the policy variable when the outcome is projected on
    the policy, every other contemporaneous variable and one lag of all variables."""
    ordering = Ordering(ordering)
    Phi1, P = np.asarray(Phi1, float), np.asarray(P, float)
    n = Phi1.shape[0]
    sigma, cross = _stationary_blocks(Phi1, P)
    _, out, contemp = _regressor_layout(n, ordering)
    # stacked state (Y_t, Y_{t-1})
    joint = np.block([[sigma, cross], [cross.T, sigma]])
    reg = contemp + [n + k for k in range(n)]
    Sxx = joint[np.ix_(reg, reg)]
    Sxy = joint[reg, out]
    cond = np.linalg.cond(Sxx)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"projection covariance is singular (condition {cond:.2e})")
    return float(np.linalg.solve(Sxx, Sxy)[0])


def true_irf_svar(Phi1, P, H: int, ordering: Ordering | str = Ordering.CORRECT) -> NDArray[np.float64]:
    """Outcome response at horizons ``0..H`` to a unit move in the policy variable.

    The impulse vector is ``Cov(Y_t, xi_t) / Var(xi_t)``, where ``xi_t`` is the
    policy variable net of its projection on the controls. Under the correct
    ordering this is the policy column of ``P`` divided by its diagonal entry.
    """
    if H < 0:
        raise ValueError("H must be >= 0")
    ordering = Ordering(ordering)
    Phi1, P = np.asarray(Phi1, float), np.asarray(P, float)
    n = Phi1.shape[0]
    sigma, cross = _stationary_blocks(Phi1, P)
    pol, out, contemp = _regressor_layout(n, ordering)
    joint = np.block([[sigma, cross], [cross.T, sigma]])
    ctrl = contemp[1:] + [n + k for k in range(n)]
    # projection of the policy on controls; residual loadings on the stacked state
    w = np.zeros(2 * n)
    w[pol] = 1.0
    if ctrl:
        S = joint[np.ix_(ctrl, ctrl)]
        w[ctrl] = -np.linalg.solve(S, joint[ctrl, pol])
    cov_state_xi = joint @ w
    impulse = cov_state_xi[:n] / float(w @ joint @ w)
    irf = np.empty(H + 1)
    v = impulse
    for h in range(H + 1):
        irf[h] = v[out]
        v = Phi1 @ v
    return irf


def simulate_plr(spec: PlrSpec, T: int, rng) -> SimulatedSample:
    """Partially linear design with VAR(1) confounders and Beta-weighted decaying coefficients."""
    if T < 10:
        raise ValueError("need T >= 10")
    gen = _gen(rng)
    p = spec.p
    idx = np.arange(1, p + 1, dtype=np.float64)
    beta = spec.coef_scale * gen.beta(1.0, 0.7, size=p) * (1.0 / idx) ** 2
    gamma = spec.coef_scale * gen.beta(0.25, 0.8, size=p) * (2.0 / idx) ** 2
    omega = spec.cor ** np.abs(np.subtract.outer(idx, idx))
    chol = np.linalg.cholesky(omega)
    steps = T + spec.burn_in
    V = gen.standard_normal((steps, p)) @ chol.T
    X = _var1_recursion(np.diag(np.full(p, spec.rho)), np.zeros(p), np.ascontiguousarray(V))[-T:]
    xi = gen.standard_normal(T)
    eps = gen.standard_normal(T)
    d = X @ beta + xi
    y = spec.theta0 * d + X @ gamma + spec.noise_scale * eps
    cols = {"y": y, "d": d}
    roles = {"y": Role.OUTCOME, "d": Role.POLICY}
    for k in range(p):
        cols[f"x{k + 1}"] = np.ascontiguousarray(X[:, k])
        roles[f"x{k + 1}"] = Role.CONTROL
    data = TimeSeriesDataset(cols, roles, tuple(str(t) for t in range(T)))
    fp = fingerprint("plr", spec, T, rng if isinstance(rng, RngStream) else None)
    return SimulatedSample(data, float(spec.theta0), fp, None, {"beta": beta, "gamma": gamma})
