"""Dense linear-algebra kernels, seeded random streams and column standardization.

Matrices are plain 2-D ``float64`` numpy arrays in row-major (C) order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "RankDeficiencyError",
    "RngStream",
    "Standardizer",
    "as_matrix",
    "ols_solve",
    "solve_discrete_lyapunov",
    "spectral_radius",
    "standard_normal_draws",
]

# Designs with a larger 2-norm condition number are rejected by ols_solve.
MAX_CONDITION = 1e12


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when a least-squares design is singular or too ill-conditioned."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


def as_matrix(a, name: str = "matrix") -> NDArray[np.float64]:
    """Return ``a`` as a finite, C-contiguous 2-D float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Every call to :meth:`generator` returns a fresh Philox generator positioned
    at the start of the stream, so a replication's draws never depend on which
    worker ran it or in what order.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, offset: int) -> "RngStream":
        """Derive an independent stream (e.g. one per nested sub-task)."""
        return RngStream(self.seed, (int(self.stream_id) * 1_000_003 + int(offset) + 1) % 2**64)


def standard_normal_draws(rng: RngStream | np.random.Generator, n: int) -> NDArray[np.float64]:
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return gen.standard_normal(n)


@dataclass(frozen=True)
class Standardizer:
    """Column centring and scaling with population (ddof=0) standard deviations.

    Columns with zero spread get scale 1 and are listed in ``constant``.
    """

    means: NDArray[np.float64]
    scales: NDArray[np.float64]
    constant: tuple[int, ...] = ()

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = as_matrix(X, "X")
        means = X.mean(axis=0)
        sd = np.sqrt(((X - means) ** 2).mean(axis=0))
        # spread below ~1e-13 relative to the level is rounding noise
        tiny = sd <= 1e-13 * np.maximum(1.0, np.abs(means))
        scales = np.where(tiny, 1.0, sd)
        return cls(means, scales, tuple(int(j) for j in np.flatnonzero(tiny)))

    def transform(self, X) -> NDArray[np.float64]:
        X = as_matrix(X, "X")
        if X.shape[1] != self.means.shape[0]:
            raise ValueError(f"expected {self.means.shape[0]} columns, got {X.shape[1]}")
        Z = (X - self.means) / self.scales
        if self.constant:
            Z[:, list(self.constant)] = 0.0
        return Z

    def inverse_transform(self, Z) -> NDArray[np.float64]:
        Z = as_matrix(Z, "Z")
        return Z * self.scales + self.means


def ols_solve(X, y) -> NDArray[np.float64]:
    """Least-squares coefficients via a Householder QR factorization.

    Raises
    ------
    RankDeficiencyError
        If ``X`` has fewer rows than columns or its condition number exceeds
        ``MAX_CONDITION``.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} rows, X has {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite entries")
    if n < p:
        raise RankDeficiencyError(f"design has {n} rows but {p} columns", np.inf)
    Q, R = np.linalg.qr(X, mode="reduced")
    d = np.abs(np.diag(R))
    cond = np.linalg.cond(R) if d.min() > 0 else np.inf
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise RankDeficiencyError(
            f"design is rank deficient: condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}", cond
        )
    return np.linalg.solve(R, Q.T @ y)


def spectral_radius(A) -> float:
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {A.shape}")
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def solve_discrete_lyapunov(A, Q, tol: float = 1e-12, max_iter: int = 200) -> NDArray[np.float64]:
    """Solve ``S = A S A' + Q`` by the doubling fixed-point recursion.

    Requires ``spectral_radius(A) < 1``. Iterates ``S <- S + A_k S A_k'`` with
    ``A_k <- A_k @ A_k`` until the increment falls below ``tol`` relative to ``S``.
    """
    A = as_matrix(A, "A")
    if spectral_radius(A) >= 1.0:
        raise np.linalg.LinAlgError("Lyapunov equation needs spectral_radius(A) < 1")
    S = as_matrix(Q, "Q").copy()
    Ak = A.copy()
    for _ in range(max_iter):
        inc = Ak @ S @ Ak.T
        S = S + inc
        if not np.all(np.isfinite(S)):
            break
        if np.max(np.abs(inc)) <= tol * max(1.0, np.max(np.abs(S))):
            return 0.5 * (S + S.T)
        Ak = Ak @ Ak
    raise np.linalg.LinAlgError("Lyapunov recursion did not converge; is the system stable?")
