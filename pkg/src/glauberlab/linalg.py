"""Small dense linear-algebra helpers shared by the exact engines."""

from __future__ import annotations

import numpy as np

DENSE_LIMIT = 300
POWER_RTOL = 1e-10
POWER_MAXITER = 100_000


def op_norm(a: np.ndarray, *, dense_limit: int = DENSE_LIMIT) -> float:
    """Operator (spectral) norm of a symmetric matrix.

    Uses a symmetric eigensolver up to ``dense_limit`` rows and power
    iteration above that.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    if a.shape[0] <= dense_limit:
        w = np.linalg.eigvalsh(a)
        return float(max(abs(w[0]), abs(w[-1])))
    return power_norm(a)


def op_norm_batch(a: np.ndarray) -> np.ndarray:
    """Operator norms of a stack of symmetric matrices, shape (..., d, d)."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-2])
    w = np.linalg.eigvalsh(a)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))


def power_norm(a: np.ndarray, *, rtol: float = POWER_RTOL, maxiter: int = POWER_MAXITER,
               seed: int = 0) -> float:
    # ||A v|| converges to max |lambda| even when +lambda and -lambda tie.
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(maxiter):
        w = a @ v
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - est) <= rtol * nrm:
            return nrm
        est = nrm
    return est


def symmetrize_reversible(p: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Return D^{1/2} P D^{-1/2} for a pi-reversible P (symmetric up to rounding)."""
    s = np.sqrt(pi)
    m = (s[:, None] * p) / s[None, :]
    return 0.5 * (m + m.T)
