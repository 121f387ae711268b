"""Pseudolikelihood estimation of Ising models.

The model is p(x) proportional to exp(1/2 <x, J x> + <h, x>) with J symmetric and
zero on the diagonal.  The conditional law of x_j given the rest is logistic
in the margin x_j (<J_j, x> + h_j), and the loss is the average negative
conditional log-likelihood summed over sites.  Samples enter only through
their empirical distribution, so duplicated data gives the same estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit, rel_entr

from .exact import ExactGibbsTable, gibbs_table, sample_exact
from .hamiltonian import DimensionError, SpinHamiltonian, corners
from .linalg import op_norm


@dataclass(frozen=True)
class IsingParams:
    J: np.ndarray
    h: np.ndarray
    R: float | None = None
    alpha_max: float | None = None

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        h = np.array(self.h, dtype=float)
        n = h.shape[0]
        if h.ndim != 1 or J.shape != (n, n):
            raise DimensionError("J must be n x n and h length n")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(h))):
            raise ValueError("parameters must be finite")
        if np.max(np.abs(J - J.T), initial=0.0) > 1e-12:
            raise ValueError("J must be symmetric")
        if np.any(np.diag(J) != 0):
            raise ValueError("J must have zero diagonal")
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "IsingParams":
        return cls(np.zeros((n, n)), np.zeros(n))

    def hamiltonian(self) -> SpinHamiltonian:
        return SpinHamiltonian.from_ising(self.J, self.h)

    def table(self) -> ExactGibbsTable:
        return gibbs_table(self.hamiltonian())

    def op_norm(self) -> float:
        return op_norm(self.J)

    def to_json(self, final_loss: float | None = None) -> dict:
        return {"J": self.J.tolist(), "h": self.h.tolist(), "R": self.R,
                "final_loss": final_loss, "op_norm": self.op_norm()}

    @classmethod
    def from_json(cls, obj) -> "IsingParams":
        return cls(np.array(obj["J"], dtype=float), np.array(obj["h"], dtype=float), obj.get("R"))


def save_params(params: IsingParams, path: str | Path, final_loss: float | None = None) -> None:
    Path(path).write_text(json.dumps(params.to_json(final_loss), indent=1, sort_keys=True) + "\n")


def load_params(path: str | Path) -> IsingParams:
    return IsingParams.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Empirical:
    """Distinct sample rows with their frequencies."""

    rows: np.ndarray
    freq: np.ndarray
    m: int


def compress(samples) -> Empirical:
    x = np.asarray(samples)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionError("samples must be a nonempty m x n matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or infinity")
    if np.any(np.abs(x) != 1):
        raise ValueError("samples must be +-1")
    rows, counts = np.unique(x.astype(np.int8), axis=0, return_counts=True)
    return Empirical(rows.astype(float), counts / x.shape[0], x.shape[0])


def _data(samples) -> Empirical:
    return samples if isinstance(samples, Empirical) else compress(samples)


def _margins(J, h, data: Empirical) -> np.ndarray:
    return data.rows * (data.rows @ J + h)


def pl_loss(params: IsingParams, samples) -> float:
    """(1/m) sum_i sum_j log(1 + exp(-2 x_ij (<J_j, x_i> + h_j)))."""
    data = _data(samples)
    if data.rows.shape[1] != params.n:
        raise DimensionError("samples and parameters disagree on n")
    return _loss(params.J, params.h, data)


def _loss(J, h, data: Empirical) -> float:
    return float(data.freq @ np.logaddexp(0.0, -2.0 * _margins(J, h, data)).sum(axis=1))


def _grad(J, h, data: Empirical):
    g = -2.0 * expit(-2.0 * _margins(J, h, data))  # d loss / d margin
    w = data.freq[:, None] * g * data.rows
    gh = w.sum(axis=0)
    rows = w.T @ data.rows
    gJ = rows + rows.T
    np.fill_diagonal(gJ, 0.0)
    return gJ, gh


def pl_grad(params: IsingParams, samples) -> tuple[np.ndarray, np.ndarray]:
    """Gradient in (J, h) where J_ij = J_ji is a single shared parameter."""
    return _grad(params.J, params.h, _data(samples))


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of v onto {||x||_1 <= radius}."""
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(u) + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1)
    out = np.sign(v) * np.maximum(a - theta, 0.0)
    # rounding can leave the sum an ulp above the radius
    while np.abs(out).sum() > radius:
        theta = np.nextafter(theta, np.inf)
        out = np.sign(v) * np.maximum(a - theta, 0.0)
    return out


def _project_rows(J: np.ndarray, R: float) -> np.ndarray:
    out = np.empty_like(J)
    n = J.shape[0]
    for j in range(n):
        off = np.delete(J[j], j)
        out[j] = np.insert(project_l1_ball(off, R), j, 0.0)
    return out


def _feasible(J, R, tol=0.0) -> bool:
    return bool(np.all(np.abs(J).sum(axis=1) <= R + tol) and np.array_equal(J, J.T)
                and not np.any(np.diag(J)))


def project(J: np.ndarray, h: np.ndarray, R: float, *, iters: int = 500,
            tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Projection onto {J symmetric, zero diagonal, row l1 <= R} x {|h_j| <= R}.

    Dykstra's alternating projections between the row-l1 set and the symmetric
    matrices, followed by an exact symmetrization and a uniform rescaling so
    the result is feasible to machine precision.
    """
    J = np.array(J, dtype=float)
    np.fill_diagonal(J, 0.0)
    hp = np.clip(h, -R, R)
    sym = 0.5 * (J + J.T)
    if _feasible(sym, R) and np.array_equal(sym, J):
        return J, hp
    x = J
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iters):
        y = _project_rows(x + p, R)
        p = x + p - y
        x_new = 0.5 * ((y + q) + (y + q).T)
        q = y + q - x_new
        if np.max(np.abs(x_new - x)) <= tol:
            x = x_new
            break
        x = x_new
    x = 0.5 * (x + x.T)
    np.fill_diagonal(x, 0.0)
    worst = float(np.abs(x).sum(axis=1).max(initial=0.0))
    scale = R / worst if worst > R else 1.0
    y = x * scale
    while np.abs(y).sum(axis=1).max(initial=0.0) > R:
        scale = np.nextafter(scale, 0.0)
        y = x * scale
    x = y
    return x, hp


@dataclass(frozen=True)
class FitResult:
    params: IsingParams
    final_loss: float
    iterations: int
    losses: tuple

    @property
    def op_norm(self) -> float:
        return self.params.op_norm()


class DivergenceError(RuntimeError):
    pass


def fit_pl(samples, R: float, iters: int = 1000, *, step0: float = 1.0, min_step: float = 1e-12,
           tol: float = 1e-8, init: IsingParams | None = None) -> FitResult:
    """Projected gradient descent on the pseudolikelihood loss.

    Each step backtracks by halving from ``step0`` until the sufficient-decrease
    condition holds.  The best iterate seen is returned.
    """
    data = _data(samples)
    n = data.rows.shape[1]
    if R <= 0:
        raise ValueError("R must be positive")
    J0 = np.zeros((n, n)) if init is None else np.array(init.J)
    h0 = np.zeros(n) if init is None else np.array(init.h)
    J, h = project(J0, h0, R)
    f = _loss(J, h, data)
    best = (f, J, h)
    losses = [f]
    bad = 0
    it = 0
    for it in range(1, iters + 1):
        gJ, gh = _grad(J, h, data)
        step = step0
        while True:
            # Frobenius geometry on symmetric J: the gradient there is gJ / 2
            Jn, hn = project(J - step * 0.5 * gJ, h - step * gh, R)
            dJ, dh = Jn - J, hn - h
            inner = 0.5 * np.sum(gJ * dJ) + gh @ dh
            sq = np.sum(dJ**2) + dh @ dh
            fn = _loss(Jn, hn, data)
            if fn <= f + inner + sq / (2 * step) + 1e-15 or step <= min_step:
                break
            step *= 0.5
        if fn > f and step <= min_step:
            bad += 1
            if bad >= 10:
                raise DivergenceError(f"loss rose for 10 steps at the minimum step (loss {fn!r})")
        else:
            bad = 0
        moved = math.sqrt(sq)
        J, h, f = Jn, hn, fn
        losses.append(f)
        if f < best[0]:
            best = (f, J, h)
        if moved <= tol * step:
            break
    f, J, h = best
    return FitResult(IsingParams(J, h, R), f, it, tuple(losses))


def exact_kl(p_table: ExactGibbsTable, params: IsingParams) -> float:
    """KL(p || p_hat) with p_hat the Gibbs table of ``params``."""
    if p_table.n != params.n:
        raise DimensionError("table and parameters disagree on n")
    if params.n > 14:
        raise DimensionError("exact_kl needs n <= 14")
    q = params.table()
    return float(np.sum(rel_entr(p_table.probs, q.probs)))


def sk_params(n: int, beta: float, rng: np.random.Generator) -> IsingParams:
    """SK couplings J_ij = beta g_ij / sqrt(n), no field."""
    g = rng.standard_normal((n, n))
    J = np.triu(g, 1)
    J = beta * (J + J.T) / math.sqrt(n)
    return IsingParams(J, np.zeros(n))


def cycle_params(n: int, beta: float, h: float = 0.0) -> IsingParams:
    J = np.zeros((n, n))
    for i in range(n):
        J[i, (i + 1) % n] = J[(i + 1) % n, i] = beta
    return IsingParams(J, np.full(n, h))


def exact_samples(params_or_table, m: int, rng: np.random.Generator) -> np.ndarray:
    table = params_or_table if isinstance(params_or_table, ExactGibbsTable) else params_or_table.table()
    return corners(table.n, sample_exact(table, m, rng))


def learning_curve(true_params: IsingParams, m_grid: Sequence[int], seeds: Sequence[int], *,
                   R: float | None = None, iters: int = 1000) -> list[dict]:
    """Mean and spread of exact KL(p || p_hat) over seeds for each sample size."""
    if not len(m_grid):
        return []
    table = true_params.table()
    if R is None:
        R = max(1.0, 2.0 * float(max(np.abs(true_params.J).sum(axis=1).max(),
                                     np.abs(true_params.h).max())))
    rows = []
    for m in m_grid:
        kls = []
        for s in seeds:
            rng = np.random.default_rng([int(s), int(m)])
            fit = fit_pl(exact_samples(table, int(m), rng), R, iters)
            kls.append(exact_kl(table, fit.params))
        kls = np.array(kls)
        rows.append({"m": int(m), "mean_kl": float(kls.mean()), "std_kl": float(kls.std(ddof=1))
                     if len(kls) > 1 else 0.0, "seeds": len(kls)})
    ref0 = rows[0]["mean_kl"] * math.sqrt(rows[0]["m"])
    for r in rows:
        r["reference"] = ref0 / math.sqrt(r["m"])
    return rows
