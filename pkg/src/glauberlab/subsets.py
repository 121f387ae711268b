"""Distributions on k-subsets and their down/up walks.

Subsets of the ground set {0..n-1} are int bitmasks (element e is bit 1<<e).
Walk state spaces are materialized explicitly and restricted to the support of
the distribution (level k) or to the sets with positive down-marginal (lower
levels).
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .exact import (CorrelationMatrix, ExactGibbsTable, NotErgodicError, WalkOperator,
                    covariance_to_correlation, second_eigenvalue, spectral_gap)
from .hamiltonian import DimensionError, corners

DENSE_WALK_LIMIT = 3000


class DegenerateMarginalWarning(UserWarning):
    """Ground elements with zero marginal were dropped."""


def to_mask(elements: Iterable[int]) -> int:
    m = 0
    for e in elements:
        m |= 1 << int(e)
    return m


def elements_of(mask: int) -> tuple[int, ...]:
    out = []
    e = 0
    while mask:
        if mask & 1:
            out.append(e)
        mask >>= 1
        e += 1
    return tuple(out)


def level_masks(n: int, k: int) -> np.ndarray:
    """All k-subsets of {0..n-1} as sorted bitmasks."""
    return np.array(sorted(to_mask(c) for c in itertools.combinations(range(n), k)), dtype=np.int64)


def _popcount(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    out = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        out += a & 1
        a = a >> 1
    return out


def _submasks(mask: int, l: int) -> list[int]:
    return [to_mask(c) for c in itertools.combinations(elements_of(mask), l)]


@dataclass(frozen=True)
class SubsetDistribution:
    """Nonnegative weights on k-subsets of an n-element ground set.

    Only positive weights are stored; ``masks`` is sorted ascending.
    """

    n: int
    k: int
    masks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if masks.shape != w.shape or masks.ndim != 1:
            raise DimensionError("masks and weights must be 1-d of equal length")
        if not 0 <= self.k <= self.n:
            raise DimensionError("need 0 <= k <= n")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(masks < 0) or np.any(masks >> self.n):
            raise DimensionError("set outside the ground set")
        if np.any(_popcount(masks) != self.k):
            raise DimensionError(f"every set must have exactly {self.k} elements")
        if len(np.unique(masks)) != len(masks):
            raise ValueError("duplicate set")
        keep = w > 0
        if not np.any(keep):
            raise ValueError("at least one positive weight is required")
        order = np.argsort(masks[keep])
        m, w = masks[keep][order], w[keep][order]
        m.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "masks", m)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_dict(cls, n: int, k: int, weights: Mapping[Sequence[int], float]) -> "SubsetDistribution":
        items = [(to_mask(s), float(w)) for s, w in weights.items()]
        for s in weights:
            if len(set(s)) != len(s):
                raise ValueError(f"repeated element in {s!r}")
        return cls(n, k, np.array([m for m, _ in items], dtype=np.int64),
                   np.array([w for _, w in items]))

    @classmethod
    def uniform(cls, n: int, k: int) -> "SubsetDistribution":
        m = level_masks(n, k)
        return cls(n, k, m, np.full(len(m), 1.0 / len(m)))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def normalized(self) -> bool:
        return abs(self.total - 1.0) <= 1e-12

    @property
    def probs(self) -> np.ndarray:
        return self.weights / self.total

    def normalize(self) -> "SubsetDistribution":
        return SubsetDistribution(self.n, self.k, self.masks, self.probs)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {elements_of(int(m)): float(w) for m, w in zip(self.masks, self.weights)}

    def incidence(self) -> np.ndarray:
        """Support-by-element 0/1 matrix."""
        return ((self.masks[:, None] >> np.arange(self.n)) & 1).astype(float)

    def marginals(self) -> np.ndarray:
        """P[e in S] for each ground element."""
        return self.probs @ self.incidence()

    def to_json(self) -> dict:
        return {"n": self.n, "k": self.k,
                "weights": [{"set": [e + 1 for e in elements_of(int(m))], "w": float(w)}
                            for m, w in zip(self.masks, self.weights)]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SubsetDistribution":
        n, k = int(obj["n"]), int(obj["k"])
        d = {}
        for item in obj["weights"]:
            s = [int(e) for e in item["set"]]
            if any(e < 1 or e > n for e in s):
                raise DimensionError(f"element out of range 1..{n}: {s}")
            key = tuple(e - 1 for e in s)
            if tuple(sorted(set(key))) in {tuple(sorted(x)) for x in d}:
                raise ValueError(f"duplicate set {s}")
            d[key] = float(item["w"])
        return cls.from_dict(n, k, d)


def load_subset_distribution(path: str | Path) -> SubsetDistribution:
    return SubsetDistribution.from_json(json.loads(Path(path).read_text()))


def save_subset_distribution(mu: SubsetDistribution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mu.to_json(), indent=1) + "\n")


@dataclass(frozen=True)
class LevelOperator:
    """Rectangular row-stochastic map between two levels, with state labels."""

    source: int
    target: int
    matrix: object
    rows: np.ndarray
    cols: np.ndarray
    removed: tuple = ()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)


# ---------------------------------------------------------------- level operators

def _down_matrix(rows: np.ndarray, cols: np.ndarray, k: int, l: int) -> sp.csr_matrix:
    index = {int(m): i for i, m in enumerate(cols)}
    r, c = [], []
    for i, s in enumerate(rows):
        for t in _submasks(int(s), l):
            j = index.get(t)
            if j is not None:
                r.append(i)
                c.append(j)
    val = np.full(len(r), 1.0 / math.comb(k, l))
    return sp.csr_matrix((val, (r, c)), shape=(len(rows), len(cols)))


def down_operator(n: int, k: int, l: int) -> LevelOperator:
    """D_{k->l}: drop to a uniformly random l-subset."""
    if not n >= k >= l >= 0:
        raise DimensionError("need n >= k >= l >= 0")
    rows, cols = level_masks(n, k), level_masks(n, l)
    return LevelOperator(k, l, _down_matrix(rows, cols, k, l).toarray(), rows, cols)


def lower_level(mu: SubsetDistribution, l: int) -> tuple[np.ndarray, np.ndarray]:
    """l-sets with positive down-marginal and their probabilities under mu D_{k->l}."""
    acc: dict[int, float] = {}
    share = 1.0 / math.comb(mu.k, l)
    for m, p in zip(mu.masks, mu.probs):
        for t in _submasks(int(m), l):
            acc[t] = acc.get(t, 0.0) + p * share
    keys = np.array(sorted(acc), dtype=np.int64)
    return keys, np.array([acc[int(t)] for t in keys])


def _up_matrix(mu: SubsetDistribution, lower: np.ndarray, l: int) -> sp.csr_matrix:
    d = _down_matrix(mu.masks, lower, mu.k, l)
    inc = (d > 0).astype(float).T.tocsr()  # lower x support incidence
    w = inc @ sp.diags(mu.weights)
    tot = np.asarray(w.sum(axis=1)).ravel()
    return (sp.diags(1.0 / tot) @ w).tocsr()


def up_operator(mu: SubsetDistribution, l: int, k: int | None = None) -> LevelOperator:
    """U_{l->k}: from an l-set, move to a superset drawn proportionally to mu."""
    k = mu.k if k is None else k
    if k != mu.k:
        raise DimensionError(f"mu lives on level {mu.k}, not {k}")
    if not 0 <= l <= k:
        raise DimensionError("need 0 <= l <= k")
    lower, _ = lower_level(mu, l)
    everything = level_masks(mu.n, l)
    removed = tuple(int(t) for t in np.setdiff1d(everything, lower))
    return LevelOperator(l, k, _up_matrix(mu, lower, l).toarray(), lower, mu.masks.copy(),
                         removed)


def _walk(matrix: sp.csr_matrix, pi: np.ndarray, kind: str, labels: np.ndarray) -> WalkOperator:
    m = matrix.toarray() if matrix.shape[0] <= DENSE_WALK_LIMIT else matrix.tocsr()
    return WalkOperator(m, pi, kind, labels)


def down_up_walk(mu: SubsetDistribution, k: int | None = None, l: int | None = None) -> WalkOperator:
    """D_{k->l} U_{l->k} on the support of mu (default l = k-1)."""
    k = mu.k if k is None else k
    if k != mu.k:
        raise DimensionError(f"mu lives on level {mu.k}, not {k}")
    l = k - 1 if l is None else l
    if not 0 <= l <= k:
        raise DimensionError("need 0 <= l <= k")
    lower, _ = lower_level(mu, l)
    d = _down_matrix(mu.masks, lower, k, l)
    u = _up_matrix(mu, lower, l)
    return _walk(d @ u, mu.probs.copy(), "down-up", mu.masks.copy())


def up_down_walk(mu: SubsetDistribution, l: int, k: int | None = None) -> WalkOperator:
    """U_{l->k} D_{k->l} on the l-sets with positive marginal."""
    k = mu.k if k is None else k
    if k != mu.k:
        raise DimensionError(f"mu lives on level {mu.k}, not {k}")
    if not 0 <= l <= k:
        raise DimensionError("need 0 <= l <= k")
    lower, pi = lower_level(mu, l)
    d = _down_matrix(mu.masks, lower, k, l)
    u = _up_matrix(mu, lower, l)
    return _walk(u @ d, pi, "up-down", lower)


def active_walk(op: WalkOperator) -> WalkOperator:
    """Remove holding probability and renormalize each row."""
    m = op.dense().copy()
    np.fill_diagonal(m, 0.0)
    s = m.sum(axis=1)
    if np.any(s <= 0):
        raise ValueError("a state never moves")
    return WalkOperator(m / s[:, None], op.stationary, op.kind + "-active", op.labels)


def is_ergodic(op: WalkOperator) -> bool:
    return op.is_irreducible()


def link(mu: SubsetDistribution, T: Iterable[int]) -> SubsetDistribution:
    """Conditional law of S \\ T given T in S; elements keep their labels."""
    t = to_mask(T)
    size = bin(t).count("1")
    if size > mu.k:
        raise DimensionError("T is larger than the sets of mu")
    sel = (mu.masks & t) == t
    if not np.any(sel):
        raise ValueError(f"T = {sorted(elements_of(t))} has zero marginal")
    return SubsetDistribution(mu.n, mu.k - size, mu.masks[sel] & ~t,
                              mu.probs[sel] / mu.probs[sel].sum())


# ---------------------------------------------------------------- correlation and identities

def correlation_matrix_subset(mu: SubsetDistribution, *, warn: bool = True) -> CorrelationMatrix:
    """Psi[i, j] = P[j | i] - P[j], diagonal 1 - P[i], on elements with positive marginal."""
    inc = mu.incidence()
    marg = mu.probs @ inc
    keep = np.flatnonzero(marg > 0)
    pruned = tuple(int(e) for e in np.flatnonzero(marg <= 0))
    if pruned and warn:
        warnings.warn(f"dropped zero-marginal elements {list(pruned)}", DegenerateMarginalWarning,
                      stacklevel=2)
    inc = inc[:, keep]
    joint = inc.T @ (mu.probs[:, None] * inc)
    return covariance_to_correlation(joint, marg[keep], tuple(int(e) for e in keep), pruned)


def si_local_identity_check(mu: SubsetDistribution, tol: float = 1e-9) -> dict:
    """Compare k * lambda_2(U_{1->k} D_{k->1}) with lambda_max(Psi)."""
    walk = up_down_walk(mu, 1)
    lam2 = second_eigenvalue(walk)
    psi = correlation_matrix_subset(mu, warn=False).lambda_max
    dev = abs(mu.k * lam2 - psi)
    return {"k": mu.k, "lambda2": lam2, "lambda_max_psi": psi, "deviation": dev,
            "pass": bool(dev <= tol), "tolerance": tol}


def trickledown_bound(lam: float, k: int) -> float:
    """Upper bound (1 - 2/k) lam / (1 - lam) on lambda_2 of the 1<->k walk."""
    if k < 3:
        raise ValueError("need k >= 3")
    if lam >= 1:
        raise ValueError("need lambda < 1")
    return (1.0 - 2.0 / k) * lam / (1.0 - lam)


def _support_elements(mu: SubsetDistribution) -> list[int]:
    return [int(e) for e in np.flatnonzero(mu.marginals() > 0)]


def oppenheim_verify(mu: SubsetDistribution, tol: float = 1e-9) -> dict:
    """Check lambda_2(1<->k walk) against the bound from the links' 1<->k-1 walks."""
    k = mu.k
    if k < 3:
        raise ValueError("need k >= 3")
    lam2 = second_eigenvalue(up_down_walk(mu, 1))
    link_vals = [second_eigenvalue(up_down_walk(link(mu, [i]), 1)) for i in _support_elements(mu)]
    lam = max(link_vals)
    out = {"k": k, "lambda2": lam2, "link_lambda": lam, "tolerance": tol}
    if lam2 >= 1 or lam >= 1:
        out.update(applicable=False, bound=None, pass_=True)
    else:
        bound = trickledown_bound(lam, k)
        out.update(applicable=True, bound=bound, slack=bound - lam2)
        out["pass_"] = bool(lam2 <= bound + tol)
    out["pass"] = out.pop("pass_")
    return out


def continuity_bound(C: float, k: int) -> float:
    """C'' = C (k - 1 - C) / (k - 2C); the k<->k-1 gap is at least 1 / (C'' k)."""
    if k < 3:
        raise ValueError("need k >= 3")
    if k <= 2 * C:
        raise ValueError("hypothesis violated: need k > 2C")
    return C * (k - 1 - C) / (k - 2 * C)


def continuity_verify(mu: SubsetDistribution, tol: float = 1e-9) -> dict:
    """Gap of the k<->k-1 walk versus the bound from the links' k-1<->k-2 gaps."""
    k = mu.k
    if k < 3:
        raise ValueError("need k >= 3")
    walk = down_up_walk(mu)
    if not walk.is_irreducible():
        raise NotErgodicError("the k<->k-1 down-up walk is not ergodic")
    link_gaps = []
    for i in _support_elements(mu):
        lw = down_up_walk(link(mu, [i]))
        if not lw.is_irreducible():
            raise NotErgodicError(f"link at {i} is not ergodic")
        link_gaps.append(spectral_gap(lw))
    worst = min(link_gaps)
    C = math.inf if worst <= 0 else 1.0 / ((k - 1) * worst)
    gap = spectral_gap(walk)
    out = {"k": k, "gap": gap, "C": C, "tolerance": tol}
    if not k > 2 * C:
        out.update(applicable=False, C2=None, bound=None)
        out["pass"] = True
        return out
    c2 = continuity_bound(C, k)
    bound = 1.0 / (c2 * k)
    out.update(applicable=True, C2=c2, bound=bound, slack=gap - bound)
    out["pass"] = bool(gap >= bound - tol)
    return out


def homogenized_masks(n: int) -> np.ndarray:
    """Bitmask of the transversal set for each corner, in corner order."""
    s = corners(n)
    elem = 2 * np.arange(n) + (s < 0)
    return (np.int64(1) << elem.astype(np.int64)).sum(axis=1)


def homogenize(table: ExactGibbsTable) -> SubsetDistribution:
    """Spin measure as a distribution on n-subsets of {(i,+) -> 2i, (i,-) -> 2i+1}."""
    if table.n > 14:
        raise DimensionError("homogenize needs n <= 14")
    return SubsetDistribution(2 * table.n, table.n, homogenized_masks(table.n), table.probs.copy())


def corner_permutation(mu_hom: SubsetDistribution, n: int) -> np.ndarray:
    """Position in ``mu_hom.masks`` of each corner (corner order)."""
    return np.searchsorted(mu_hom.masks, homogenized_masks(n))


def generating_polynomial_eval(mu: SubsetDistribution, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (mu.n,):
        raise DimensionError("one variable per ground element")
    if np.any(z <= 0):
        raise ValueError("z must be positive")
    return float(mu.weights @ np.exp(mu.incidence() @ np.log(z)))


def log_hessian(mu: SubsetDistribution, z, alpha: float = 1.0) -> np.ndarray:
    """Hessian in z of log g(z_1^alpha, ..., z_n^alpha)."""
    z = np.asarray(z, dtype=float)
    if z.shape != (mu.n,):
        raise DimensionError("one variable per ground element")
    if np.any(z <= 0):
        raise ValueError("z must be positive")
    inc = mu.incidence()
    logw = np.log(mu.weights) + alpha * (inc @ np.log(z))
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = w @ inc
    cov = inc.T @ (w[:, None] * inc) - np.outer(mean, mean)
    return (alpha**2 * cov - alpha * np.diag(mean)) / np.outer(z, z)


def fact_matrix(mu: SubsetDistribution, alpha: float) -> np.ndarray:
    """alpha^2 D Psi - alpha D assembled from the correlation matrix (all elements)."""
    psi = correlation_matrix_subset(mu, warn=False)
    full = np.zeros((mu.n, mu.n))
    keep = np.array(psi.elements, dtype=int)
    d = np.diag(psi.marginals)
    full[np.ix_(keep, keep)] = alpha**2 * d @ psi.matrix - alpha * d
    return full


def dirichlet_form_covariance(mu: SubsetDistribution, f, g=None) -> float:
    """E over S_{k-1} ~ mu D_{k->k-1} of Cov(f, g | S contains S_{k-1})."""
    f = np.asarray(f, dtype=float)
    g = f if g is None else np.asarray(g, dtype=float)
    if f.shape != mu.masks.shape or g.shape != mu.masks.shape:
        raise DimensionError("function length does not match the support")
    lower, pi = lower_level(mu, mu.k - 1)
    u = _up_matrix(mu, lower, mu.k - 1)
    return float(pi @ (u @ (f * g) - (u @ f) * (u @ g)))


# ---------------------------------------------------------------- generators

def random_subset_distribution(n: int, k: int, rng: np.random.Generator, *,
                               sparse: bool = False) -> SubsetDistribution:
    """i.i.d. Exp(1) weights on all k-subsets; ``sparse`` zeroes each w.p. 1/2."""
    masks = level_masks(n, k)
    w = rng.exponential(size=len(masks))
    if sparse:
        w[rng.random(len(masks)) < 0.5] = 0.0
        if not np.any(w > 0):
            w[rng.integers(len(w))] = rng.exponential()
    return SubsetDistribution(n, k, masks, w / w.sum())


def random_ergodic_subset_distribution(n: int, k: int, rng: np.random.Generator, *,
                                       sparse: bool = False, links: bool = False,
                                       max_tries: int = 1000) -> SubsetDistribution:
    """Rejection-sample until the k<->k-1 walk (and optionally every link's) is ergodic."""
    for _ in range(max_tries):
        mu = random_subset_distribution(n, k, rng, sparse=sparse)
        if not down_up_walk(mu).is_irreducible():
            continue
        if links and not all(down_up_walk(link(mu, [i])).is_irreducible()
                             for i in _support_elements(mu)):
            continue
        if links and not up_down_walk(mu, 1).is_irreducible():
            continue
        return mu
    raise NotErgodicError("no ergodic instance found")
