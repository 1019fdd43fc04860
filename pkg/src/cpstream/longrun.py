"""Long-run (asymptotic) covariance estimation with the Bartlett kernel.

The long-run covariance of a stationary series is the sum of its
autocovariances over all lags; it is what normalises CUSUM statistics when
observations are serially dependent. The estimator used throughout is the
kernel-truncated sum

    Omega_hat = S_0 + sum_{l=1..L} w(l / (L + 1)) * (S_l + S_l^T)

with triangular (Bartlett) weights w(x) = 1 - |x|, which keeps the result
symmetric positive semidefinite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .timeseries import SeriesLike, as_matrix

__all__ = [
    "LongRunCov",
    "autocov",
    "bartlett_bandwidth",
    "bartlett_weight",
    "bartlett_lrv",
    "regularize_spd",
    "inverse",
    "inverse_sqrt",
]

# A matrix counts as numerically singular when its smallest eigenvalue drops
# below SINGULAR_RTOL * trace; inversion sites then add RIDGE_RTOL * trace / d
# to the diagonal. ZERO_TRACE_RIDGE covers the all-constant-input case where
# the trace itself is zero and a relative ridge would vanish.
SINGULAR_RTOL = 1e-10
RIDGE_RTOL = 1e-8
ZERO_TRACE_RIDGE = 1e-12


@dataclass(frozen=True, eq=False)
class LongRunCov:
    """Estimated long-run covariance with the bandwidth it was built from."""

    omega: np.ndarray
    bandwidth_L: int
    n_used: int

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float)
        scale = np.max(np.abs(omega))
        if scale > 0 and np.max(np.abs(omega - omega.T)) > 1e-10 * scale:
            raise ValueError("long-run covariance estimate is not symmetric")
        trace = float(np.trace(omega))
        if np.linalg.eigvalsh(omega).min() < -1e-10 * max(trace, 0.0):
            raise ValueError("long-run covariance estimate is not positive semidefinite")
        omega = omega.copy()
        omega.flags.writeable = False
        object.__setattr__(self, "omega", omega)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]


def autocov(s: SeriesLike, lag: int) -> np.ndarray:
    """Empirical autocovariance matrix at a given lag.

    Computes (1/N) * sum_{n=lag+1..N} (X_n - mean)(X_{n-lag} - mean)^T.
    The divisor is N, not N - lag. Not symmetric for lag > 0.
    """
    mat = as_matrix(s)
    n = mat.shape[0]
    if lag < 0:
        raise ValueError("lag must be non-negative")
    if lag >= n:
        raise ValueError(f"lag {lag} must be smaller than the sample count {n}")
    centered = mat - mat.mean(axis=0)
    return centered[lag:].T @ centered[: n - lag] / n


def bartlett_bandwidth(n: int) -> int:
    """Default truncation lag floor(log10(N)), computed exactly on integers."""
    if n < 1:
        raise ValueError("sample count must be positive")
    level, power = 0, 10
    while power <= n:
        level += 1
        power *= 10
    return level


def bartlett_weight(x: float) -> float:
    """Triangular kernel: 1 - |x| inside [-1, 1], zero outside."""
    return max(0.0, 1.0 - abs(x))


def bartlett_lrv(s: SeriesLike, bandwidth: int | None = None) -> LongRunCov:
    """Bartlett estimate of the long-run covariance of a series.

    ``bandwidth`` is the truncation lag L; when omitted it defaults to
    ``bartlett_bandwidth(N)``. A (near-)singular result is not an error here;
    inversion sites regularize via :func:`regularize_spd`.
    """
    mat = as_matrix(s)
    n = mat.shape[0]
    if bandwidth is None:
        bandwidth = bartlett_bandwidth(n)
    if bandwidth < 0:
        raise ValueError("bandwidth must be non-negative")
    if bandwidth >= n:
        raise ValueError(f"bandwidth {bandwidth} must be smaller than the sample count {n}")
    omega = autocov(s, 0)
    for lag in range(1, bandwidth + 1):
        gamma = autocov(s, lag)
        omega = omega + bartlett_weight(lag / (bandwidth + 1)) * (gamma + gamma.T)
    # symmetrize away rounding drift before the PSD check
    omega = (omega + omega.T) / 2.0
    eigvals = np.linalg.eigvalsh(omega)
    if eigvals.min() < 0:
        omega = omega - min(eigvals.min(), 0.0) * np.eye(omega.shape[0])
    return LongRunCov(omega=omega, bandwidth_L=bandwidth, n_used=n)


def regularize_spd(matrix: np.ndarray) -> np.ndarray:
    """Ridge a symmetric PSD matrix just enough to make it safely invertible.

    Leaves well-conditioned input untouched. Near-singular input (smallest
    eigenvalue below SINGULAR_RTOL * trace) gains RIDGE_RTOL * trace / d on
    the diagonal; an exactly zero matrix gains the absolute floor
    ZERO_TRACE_RIDGE so that quadratic forms over zero vectors stay zero
    instead of dividing by zero.
    """
    matrix = np.asarray(matrix, dtype=float)
    d = matrix.shape[0]
    trace = float(np.trace(matrix))
    smallest = float(np.linalg.eigvalsh(matrix).min())
    if trace > 0 and smallest >= SINGULAR_RTOL * trace:
        return matrix
    ridge = RIDGE_RTOL * trace / d
    if ridge <= 0:
        ridge = ZERO_TRACE_RIDGE
    if smallest < 0:
        ridge += -smallest
    return matrix + ridge * np.eye(d)


def inverse(matrix: np.ndarray | LongRunCov) -> np.ndarray:
    """Regularized inverse of a symmetric PSD matrix."""
    if isinstance(matrix, LongRunCov):
        matrix = matrix.omega
    return np.linalg.inv(regularize_spd(matrix))


def inverse_sqrt(matrix: np.ndarray | LongRunCov) -> np.ndarray:
    """Regularized inverse square root via symmetric eigendecomposition."""
    if isinstance(matrix, LongRunCov):
        matrix = matrix.omega
    safe = regularize_spd(matrix)
    eigvals, eigvecs = np.linalg.eigh(safe)
    return (eigvecs * (1.0 / np.sqrt(eigvals))) @ eigvecs.T
