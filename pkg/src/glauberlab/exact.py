"""Exact enumeration of Gibbs measures on {-1,+1}^n.

Everything here materializes the 2^n state space: Gibbs tables, the Glauber
transition matrix, spectral gaps, correlation matrices, entropy functionals and
heuristic searches for entropy-inequality constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh
from scipy.special import kl_div, logsumexp

from .hamiltonian import (DimensionError, SpinHamiltonian, corner_table, corners, gradient,
                          site_bit)

GIBBS_MAX_N = 20
OPERATOR_MAX_N = 14
DENSE_OPERATOR_MAX_N = 10
DENSE_EIG_LIMIT = 4096
REVERSIBLE_TOL = 1e-10


class NotReversibleError(ValueError):
    pass


class NotErgodicError(ValueError):
    pass


# ---------------------------------------------------------------- types

@dataclass(frozen=True)
class ExactGibbsTable:
    """Probabilities of all 2^n corners in corner order, plus log Z."""

    n: int
    probs: np.ndarray
    log_Z: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (2**self.n,):
            raise DimensionError(f"expected {2**self.n} probabilities, got {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_log_weights(cls, n: int, logw: np.ndarray) -> "ExactGibbsTable":
        logw = np.asarray(logw, dtype=float)
        log_Z = float(logsumexp(logw))
        p = np.exp(logw - log_Z)
        return cls(n, p / p.sum(), log_Z)

    @property
    def full_support(self) -> bool:
        return bool(np.all(self.probs > 0))

    def spins(self) -> np.ndarray:
        return corners(self.n)

    def marginals(self) -> np.ndarray:
        """P[sigma_i = +1] for every site."""
        return self.probs @ (self.spins() > 0)


@dataclass(frozen=True)
class WalkOperator:
    """Row-stochastic transition matrix with its stationary distribution.

    ``matrix`` is a dense array or a scipy sparse matrix.  ``labels`` optionally
    names the states (corner indices, subset bitmasks).
    """

    matrix: object
    stationary: np.ndarray
    kind: str
    labels: np.ndarray | None = None
    check: bool = True

    def __post_init__(self):
        pi = np.asarray(self.stationary, dtype=float)
        object.__setattr__(self, "stationary", pi)
        if self.check:
            self.validate()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def flow(self):
        """pi(x) P(x, y) as a matrix of the same storage kind."""
        if self.is_sparse:
            return sp.diags(self.stationary) @ self.matrix
        return self.stationary[:, None] * self.matrix

    def validate(self, tol: float = REVERSIBLE_TOL) -> None:
        m = self.matrix
        rows = np.asarray(m.sum(axis=1)).ravel()
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise ValueError("transition matrix rows do not sum to 1")
        pi = self.stationary
        drift = np.asarray(pi @ m).ravel() - pi
        if np.max(np.abs(drift)) > tol:
            raise ValueError("stationary vector is not fixed by the walk")

    def reversibility_error(self) -> float:
        f = self.flow()
        d = f - f.T
        if sp.issparse(d):
            return float(abs(d).max()) if d.nnz else 0.0
        return float(np.max(np.abs(d)))

    def is_reversible(self, tol: float = REVERSIBLE_TOL) -> bool:
        return self.reversibility_error() <= tol

    def is_irreducible(self) -> bool:
        support = self.stationary > 0
        m = sp.csr_matrix(self.matrix)[support][:, support]
        k, _ = connected_components(m, directed=True, connection="strong")
        return k == 1

    def symmetrized(self):
        """D^{1/2} P D^{-1/2}, restricted to states with positive mass."""
        keep = self.stationary > 0
        s = np.sqrt(self.stationary[keep])
        if self.is_sparse:
            m = sp.csr_matrix(self.matrix)[keep][:, keep]
            m = sp.diags(s) @ m @ sp.diags(1.0 / s)
            return ((m + m.T) * 0.5).tocsr()
        m = self.dense()[np.ix_(keep, keep)]
        m = (s[:, None] * m) / s[None, :]
        return 0.5 * (m + m.T)


@dataclass(frozen=True)
class CorrelationMatrix:
    """Rows condition, columns respond: entry (a, b) = P[b | a] - P[b]."""

    matrix: np.ndarray
    marginals: np.ndarray
    lambda_max: float
    elements: tuple = ()
    pruned: tuple = ()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


# ---------------------------------------------------------------- tables and operators

def gibbs_table(h: SpinHamiltonian) -> ExactGibbsTable:
    if h.n > GIBBS_MAX_N:
        raise DimensionError(f"gibbs_table needs n <= {GIBBS_MAX_N}")
    return ExactGibbsTable.from_log_weights(h.n, corner_table(h))


def _flip_index(n: int) -> np.ndarray:
    x = np.arange(2**n, dtype=np.int64)
    return np.stack([x ^ site_bit(n, j) for j in range(n)], axis=1)


def glauber_operator(table: ExactGibbsTable, *, sparse: bool | None = None) -> WalkOperator:
    """Heat-bath Glauber dynamics: pick a uniform site, resample it."""
    n = table.n
    if n > OPERATOR_MAX_N:
        raise DimensionError(f"glauber_operator needs n <= {OPERATOR_MAX_N}")
    if n == 0:
        return WalkOperator(np.ones((1, 1)), table.probs.copy(), "glauber")
    p = table.probs
    if not table.full_support:
        raise ValueError("Glauber operator needs a full-support table")
    if sparse is None:
        sparse = n > DENSE_OPERATOR_MAX_N
    dim = 2**n
    flip = _flip_index(n)
    off = p[flip] / (p[:, None] + p[flip]) / n
    diag = 1.0 - off.sum(axis=1)
    rows = np.concatenate([np.arange(dim), np.repeat(np.arange(dim), n)])
    cols = np.concatenate([np.arange(dim), flip.ravel()])
    vals = np.concatenate([diag, off.ravel()])
    m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    if not sparse:
        m = m.toarray()
    return WalkOperator(m, p.copy(), "glauber", np.arange(dim))


def eigenvalues_reversible(op: WalkOperator, k: int | None = None) -> np.ndarray:
    """Spectrum (descending) of a reversible walk; top ``k`` only for large sparse walks."""
    if not op.is_reversible():
        raise NotReversibleError(f"walk is not reversible (error {op.reversibility_error():.3g})")
    s = op.symmetrized()
    dim = s.shape[0]
    if dim <= DENSE_EIG_LIMIT or k is None:
        dense = s.toarray() if sp.issparse(s) else s
        w = np.linalg.eigvalsh(dense)[::-1]
        return w if k is None else w[:k]
    w = eigsh(s, k=k, which="LA", tol=1e-13, return_eigenvectors=False)
    return np.sort(w)[::-1]


def second_eigenvalue(op: WalkOperator) -> float:
    if op.dim == 1 or np.count_nonzero(op.stationary) == 1:
        return 0.0
    return float(eigenvalues_reversible(op, k=2)[1])


def spectral_gap(op: WalkOperator) -> float:
    """1 - lambda_2 of a reversible walk (0 for a reducible one)."""
    return 1.0 - second_eigenvalue(op)


def gap_eigenvector(op: WalkOperator) -> np.ndarray:
    """A lambda_2 right eigenvector g of P, normalized to Var_pi(g) = 1."""
    s = op.symmetrized()
    dense = s.toarray() if sp.issparse(s) else s
    w, v = np.linalg.eigh(dense)
    keep = op.stationary > 0
    g = np.zeros(op.dim)
    g[keep] = v[:, -2] / np.sqrt(op.stationary[keep])
    pi = op.stationary
    g -= pi @ g
    return g / np.sqrt(pi @ g**2)


# ---------------------------------------------------------------- Dirichlet forms

def dirichlet_form(op: WalkOperator, f, g=None) -> float:
    """1/2 sum_{x,y} pi(x) P(x,y) (f(x)-f(y)) (g(x)-g(y))."""
    f = np.asarray(f, dtype=float)
    g = f if g is None else np.asarray(g, dtype=float)
    if f.shape != (op.dim,) or g.shape != (op.dim,):
        raise DimensionError("function length does not match the state space")
    c = sp.coo_matrix(op.flow())
    return 0.5 * float(np.sum(c.data * (f[c.row] - f[c.col]) * (g[c.row] - g[c.col])))


def dirichlet_form_cosh(h: SpinHamiltonian, table: ExactGibbsTable, f, *,
                        per_step: bool = True) -> float:
    """Glauber Dirichlet form via cavity fields.

    Computes 1/4 sum_sigma mu(sigma) sum_j cosh(B_j)^-2 (f(sigma)-f(flip_j sigma))^2.
    With ``per_step`` the sum is divided by n so it matches the discrete-time
    operator from :func:`glauber_operator`; without it the value matches the
    rate-1-per-site generator.
    """
    n = h.n
    f = np.asarray(f, dtype=float)
    if f.shape != (2**n,) or table.n != n:
        raise DimensionError("function length does not match the state space")
    fields = gradient(h, corners(n))
    diff = f[:, None] - f[_flip_index(n)]
    total = 0.25 * float(np.sum(table.probs[:, None] * diff**2 / np.cosh(fields) ** 2))
    return total / n if per_step else total


# ---------------------------------------------------------------- correlation matrices

def covariance_to_correlation(joint: np.ndarray, marg: np.ndarray, elements=(),
                              pruned=()) -> CorrelationMatrix:
    psi = joint / marg[:, None] - marg[None, :]
    cov = joint - np.outer(marg, marg)
    s = 1.0 / np.sqrt(marg)
    sym = s[:, None] * cov * s[None, :]
    lam = float(np.linalg.eigvalsh(0.5 * (sym + sym.T))[-1]) if len(marg) else 0.0
    return CorrelationMatrix(psi, marg, lam, tuple(elements), tuple(pruned))


def element_indicators(n: int) -> np.ndarray:
    """Corner-by-element incidence for the 2n elements (i,+) -> 2i, (i,-) -> 2i+1."""
    s = corners(n)
    ind = np.empty((2**n, 2 * n))
    ind[:, 0::2] = s > 0
    ind[:, 1::2] = s < 0
    return ind


def correlation_matrix_spin(table: ExactGibbsTable) -> CorrelationMatrix:
    """2n x 2n matrix P[sigma_j = t | sigma_i = s] - P[sigma_j = t], rows (i, s)."""
    n = table.n
    if n > OPERATOR_MAX_N:
        raise DimensionError(f"correlation matrix needs n <= {OPERATOR_MAX_N}")
    if not table.full_support:
        raise ValueError("spin correlation matrix needs a full-support table")
    ind = element_indicators(n)
    joint = ind.T @ (table.probs[:, None] * ind)
    marg = table.probs @ ind
    labels = tuple((i, s) for i in range(n) for s in (1, -1))
    return covariance_to_correlation(joint, marg, labels)


def spectral_independence_eta(table: ExactGibbsTable) -> float:
    return correlation_matrix_spin(table).lambda_max


def tilt(table: ExactGibbsTable, lam) -> ExactGibbsTable:
    """Multiply the weight of sigma_i = +1 by lam_i and renormalize."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (table.n,):
        raise DimensionError("one field value per site")
    if np.any(lam <= 0):
        raise ValueError("tilt must be positive")
    with np.errstate(divide="ignore"):
        logw = np.log(table.probs) + (corners(table.n) > 0) @ np.log(lam)
    return ExactGibbsTable.from_log_weights(table.n, logw)


@dataclass(frozen=True)
class FLCResult:
    passed: bool
    checked: int
    max_eigenvalue: float
    witness_lambda: np.ndarray | None = None
    witness_eigenvalue: float | None = None


def flc_matrix(table: ExactGibbsTable, alpha: float) -> np.ndarray:
    """alpha^2 D Psi - alpha D for the 2n-element homogenized measure."""
    ind = element_indicators(table.n)
    marg = table.probs @ ind
    cov = ind.T @ (table.probs[:, None] * ind) - np.outer(marg, marg)
    return alpha**2 * cov - alpha * np.diag(marg)


def flc_falsify(table: ExactGibbsTable, alpha: float, tilt_samples: int = 256, seed: int = 0,
                *, tol: float = 1e-10) -> FLCResult:
    """Search sampled tilts for a point where log g(z^alpha) fails concavity.

    Tilts are the all-ones field plus ``tilt_samples`` log-uniform draws from
    [1e-3, 1e3]^n.  Passing means no violation was found, not that the
    measure is fractionally log-concave.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    fields = [np.ones(table.n)]
    fields += list(np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(tilt_samples, table.n))))
    worst = -np.inf
    for lam in fields:
        t = tilt(table, lam)
        top = float(np.linalg.eigvalsh(flc_matrix(t, alpha))[-1])
        worst = max(worst, top)
        if top > tol:
            return FLCResult(False, len(fields), worst, lam, top)
    return FLCResult(True, len(fields), worst)


# ---------------------------------------------------------------- entropy

def _check_f(table: ExactGibbsTable, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (2**table.n,):
        raise DimensionError("function length does not match the state space")
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    if not np.any(f * table.probs > 0):
        raise ValueError("f vanishes on the support")
    return f


_SERIES = 1e-2
_SERIES_TERMS = np.array([(-1.0) ** k / (k * (k - 1)) for k in range(2, 12)])


def _kl(f, m):
    """Elementwise m phi(f/m) with phi(r) = r log r - r + 1.

    Near r = 1 the direct form cancels catastrophically, so a power series in
    r - 1 is used there.
    """
    f, m = np.broadcast_arrays(np.asarray(f, dtype=float), np.asarray(m, dtype=float))
    out = kl_div(f, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = f / m - 1.0
    near = (m > 0) & (np.abs(d) < _SERIES)
    if np.any(near):
        dn = d[near]
        powers = dn[:, None] ** np.arange(2, 12)
        out = np.array(out, dtype=float)
        out[near] = m[near] * (powers @ _SERIES_TERMS)
    return out


def entropy_functional(table: ExactGibbsTable, f) -> float:
    """Ent_mu f = E[f log f] - E f log E f, summed in a cancellation-free form."""
    f = _check_f(table, f)
    mean = float(table.probs @ f)
    return float(table.probs @ _kl(f, mean))


def _conditional_means(table: ExactGibbsTable, f: np.ndarray) -> np.ndarray:
    p = table.probs
    flip = _flip_index(table.n)
    pf = p[flip]
    tot = p[:, None] + pf
    with np.errstate(invalid="ignore"):
        m = (p[:, None] * f[:, None] + pf * f[flip]) / tot
    return np.where(tot > 0, m, 0.0)


def site_entropy_sum(table: ExactGibbsTable, f) -> float:
    """sum_v E_mu[Ent_v f], with Ent_v under the exact one-site conditional."""
    f = _check_f(table, f)
    m = _conditional_means(table, f)
    return float(table.probs @ _kl(f[:, None], m).sum(axis=1))


def site_entropies(table: ExactGibbsTable, f) -> np.ndarray:
    f = _check_f(table, f)
    m = _conditional_means(table, f)
    return table.probs @ _kl(f[:, None], m)


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a heuristic extremum search; ``bound`` says which side it certifies."""

    value: float
    witness: np.ndarray
    bound: str
    evaluations: int = 0
    history: tuple = field(default=(), repr=False)


_THETA_BOUND = 20.0


def _random_theta(n: int, rng: np.random.Generator, spins: np.ndarray) -> np.ndarray:
    kind = rng.integers(3)
    if kind == 0:
        return rng.normal(scale=rng.uniform(0.1, 3.0), size=2**n)
    a = rng.normal(scale=rng.uniform(0.1, 3.0), size=n)
    theta = spins @ a
    if kind == 2:
        b = rng.normal(scale=rng.uniform(0.1, 1.5), size=(n, n))
        theta = theta + np.einsum("si,ij,sj->s", spins, np.triu(b, 1), spins)
    return theta


def _ratio_at(table, theta):
    f = np.exp(theta - theta.max())
    return entropy_functional(table, f) / site_entropy_sum(table, f)


def at_constant_search(table: ExactGibbsTable, restarts: int = 20, iters: int = 200,
                       seed: int = 0) -> SearchResult:
    """Lower bound on the approximate-tensorization constant.

    Maximizes Ent(f) / sum_v E[Ent_v f] over f = exp(theta) from random
    exponential-family starts with L-BFGS-B.  The returned value is attained by
    the witness, so it never exceeds the true constant; it is not an upper bound.
    """
    n = table.n
    if n > 10:
        raise DimensionError("at_constant_search needs n <= 10")
    if not table.full_support:
        raise ValueError("full support required")
    p = table.probs
    spins = corners(n).astype(float)
    if n == 1:
        return SearchResult(1.0, np.array([1.0, 2.0]), "lower", 1)
    def neg_ratio(theta):
        f = np.exp(theta - theta.max())
        mean = p @ f
        ent = float(p @ _kl(f, mean))
        m = _conditional_means(table, f)
        site = float(p @ _kl(f[:, None], m).sum(axis=1))
        if site <= 1e-300:
            return 0.0, np.zeros_like(theta)
        d_ent = p * f * np.log(f / mean)
        d_site = p * f * np.log(f[:, None] / m).sum(axis=1)
        r = ent / site
        return -r, -(d_ent - r * d_site) / site

    rng = np.random.default_rng(seed)
    best, best_theta, evals = -np.inf, None, 0
    bounds = [(-_THETA_BOUND, _THETA_BOUND)] * p.size
    for _ in range(restarts):
        theta0 = np.clip(_random_theta(n, rng, spins), -_THETA_BOUND, _THETA_BOUND)
        if site_entropy_sum(table, np.exp(theta0 - theta0.max())) < 1e-14:
            continue
        res = minimize(neg_ratio, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": iters})
        evals += res.nfev
        val = _ratio_at(table, res.x)
        if val > best:
            best, best_theta = val, res.x
    if best_theta is None:
        raise ValueError("every restart was degenerate")
    return SearchResult(float(best), np.exp(best_theta - best_theta.max()), "lower", evals)


def mlsi_ratio(table: ExactGibbsTable, op: WalkOperator, f) -> float:
    f = _check_f(table, f)
    if np.any(f <= 0):
        raise ValueError("f must be positive for E(f, log f)")
    return dirichlet_form(op, f, np.log(f)) / entropy_functional(table, f)


def mlsi_search(table: ExactGibbsTable, op: WalkOperator, restarts: int = 20, iters: int = 200,
                seed: int = 0, *, eps: float = 1e-3) -> SearchResult:
    """Upper bound on the modified log-Sobolev constant of ``op``.

    Minimizes E_P(f, log f) / Ent(f) over f = exp(theta).  One start is the
    small perturbation 1 + eps*g of the lambda_2 eigenvector g, whose ratio is
    close to 2 * gap.  Every reported value is attained by the witness, so it
    upper-bounds the true constant.
    """
    n = table.n
    if op.dim != 2**n:
        raise DimensionError("walk and table disagree on the state space")
    p = table.probs
    flow = sp.csr_matrix(op.flow())
    rowsum = np.asarray(flow.sum(axis=1)).ravel()
    spins = corners(n).astype(float)

    def ratio_grad(theta):
        f = np.exp(theta - theta.max())
        mean = p @ f
        ent = float(p @ _kl(f, mean))
        if ent <= 1e-300:
            return 0.0, np.zeros_like(theta)
        lt = np.log(f)
        wf, wl = flow @ f, flow @ lt
        e = float(f @ (lt * rowsum - wl))
        d_e = f * (lt * rowsum - wl) + (f * rowsum - wf)
        d_ent = p * f * np.log(f / mean)
        r = e / ent
        return r, (d_e - r * d_ent) / ent

    candidates = []
    if n >= 1 and op.dim > 1:
        g = gap_eigenvector(op)
        f_lin = 1.0 + eps * g / np.max(np.abs(g))
        candidates.append((mlsi_ratio(table, op, f_lin), f_lin))
    rng = np.random.default_rng(seed)
    bounds = [(-_THETA_BOUND, _THETA_BOUND)] * p.size
    evals = 0
    for _ in range(restarts):
        theta0 = np.clip(_random_theta(n, rng, spins), -_THETA_BOUND, _THETA_BOUND)
        if entropy_functional(table, np.exp(theta0 - theta0.max())) < 1e-14:
            continue
        res = minimize(ratio_grad, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": iters})
        evals += res.nfev
        f = np.exp(res.x - res.x.max())
        if entropy_functional(table, f) > 1e-14:
            candidates.append((mlsi_ratio(table, op, f), f))
    val, f = min(candidates, key=lambda c: c[0])
    return SearchResult(float(val), f, "upper", evals)


# ---------------------------------------------------------------- mixing times

def mixing_time_bounds(gamma: float, rho: float | None, min_prob: float, eps: float) -> dict:
    """Spectral-gap sandwich and the MLSI upper bound on the eps-mixing time."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if rho is not None and not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    if not 0 < min_prob < 1 and min_prob != 1.0:
        raise ValueError("min_prob must lie in (0, 1)")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    out = {
        "lower_gamma": (1.0 / gamma - 1.0) * math.log(1.0 / (2.0 * eps)),
        "upper_gamma": (1.0 / gamma) * math.log(1.0 / (eps * min_prob)),
        "upper_mlsi": None,
    }
    if rho is not None:
        out["upper_mlsi"] = (1.0 / rho) * (math.log(math.log(1.0 / min_prob))
                                           + math.log(1.0 / (2.0 * eps**2)))
    return out


def tv_rows(dist: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(dist - pi[None, :]).sum(axis=1)


def measured_mixing_time(op: WalkOperator, eps: float = 0.25, *, max_steps: int = 100_000) -> int:
    """Worst-start eps-mixing time, from exact rows of P^t."""
    m = op.dense()
    pi = op.stationary
    rows = np.eye(op.dim)
    for t in range(max_steps + 1):
        if tv_rows(rows, pi).max() <= eps:
            return t
        rows = rows @ m
    raise RuntimeError(f"no mixing within {max_steps} steps")


# ---------------------------------------------------------------- comparison and misc

def comparison_check(base: ExactGibbsTable, W, trials: int = 1000, seed: int = 0) -> dict:
    """Test Ent_mu f <= exp(2 ||W||_inf) Ent_base f for mu proportional to base * exp(W)."""
    W = np.asarray(W, dtype=float)
    if W.shape != base.probs.shape:
        raise DimensionError("W must be a corner table")
    with np.errstate(divide="ignore"):
        mu = ExactGibbsTable.from_log_weights(base.n, np.log(base.probs) + W)
    factor = math.exp(2.0 * float(np.max(np.abs(W))))
    rng = np.random.default_rng(seed)
    violations, min_slack = 0, np.inf
    for t in range(trials):
        f = np.exp(rng.normal(scale=rng.uniform(0.1, 4.0), size=W.size))
        if t % 4 == 3:
            f[rng.random(W.size) < 0.3] = 0.0
            if not np.any(f > 0):
                f[0] = 1.0
        lhs = entropy_functional(mu, f)
        rhs = factor * entropy_functional(base, f)
        slack = rhs - lhs
        min_slack = min(min_slack, slack)
        if slack < -1e-9:
            violations += 1
    return {"trials": trials, "factor": factor, "violations": violations,
            "min_slack": float(min_slack), "pass": violations == 0}


def si_from_contraction(kappa: float, n: int) -> float:
    """eta = 1/eps for a chain contracting by kappa <= 1 - eps/n."""
    if not 0 <= kappa < 1:
        raise ValueError("kappa must lie in [0, 1)")
    return 1.0 / (n * (1.0 - kappa))


def sample_exact(table: ExactGibbsTable, m: int, rng: np.random.Generator) -> np.ndarray:
    """m i.i.d. corner indices by inverse CDF."""
    cdf = np.cumsum(table.probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(m), side="right").astype(np.int64)


def empirical_table(n: int, index: np.ndarray) -> np.ndarray:
    return np.bincount(np.asarray(index, dtype=np.int64), minlength=2**n) / len(index)
