"""Spin Hamiltonians on the hypercube and their multilinear extensions.

A :class:`SpinHamiltonian` stores the Fourier coefficients ``c_S`` of a function
``H : {-1,+1}^n -> R`` sparsely, keyed by sorted site tuples (0-based in the
Python API, 1-based in JSON files).  ``H(x) = sum_S c_S prod_{i in S} x_i`` is
then defined for every real ``x``.

Corner order is lexicographic in ``(sigma_1, ..., sigma_n)`` with ``+1 < -1``:
corner index ``x`` has bit ``n-1-i`` set iff ``sigma_i = -1``.  With that
convention the Fourier transform is a Walsh-Hadamard transform and the
coefficient of ``S`` sits at the index whose bits are the sites of ``S``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import op_norm, op_norm_batch

EXHAUSTIVE_TABLE_MAX_N = 24
EXHAUSTIVE_BETA_MAX_N = 20
T_CONSTANT_MAX_N = 12
_CHUNK = 4096


class DimensionError(ValueError):
    """Raised when array shapes or site counts do not match."""


# ---------------------------------------------------------------- corners

def site_bit(n: int, i: int) -> int:
    return 1 << (n - 1 - i)


def subset_mask(n: int, sites: Iterable[int]) -> int:
    m = 0
    for i in sites:
        m |= site_bit(n, i)
    return m


def corners(n: int, index: np.ndarray | None = None) -> np.ndarray:
    """Spin vectors for corner indices (all 2^n corners by default), int8."""
    if index is None:
        index = np.arange(2**n, dtype=np.int64)
    index = np.asarray(index, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = (index[..., None] >> shifts) & 1
    return (1 - 2 * bits).astype(np.int8)


def corner_index(sigma: np.ndarray) -> np.ndarray:
    """Inverse of :func:`corners` for arrays of shape (..., n)."""
    sigma = np.asarray(sigma)
    n = sigma.shape[-1]
    bits = (sigma < 0).astype(np.int64)
    weights = (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    return bits @ weights


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis (length 2^n)."""
    a = np.array(a, dtype=float, copy=True)
    size = a.shape[-1]
    h = 1
    lead = a.shape[:-1]
    while h < size:
        v = a.reshape(*lead, size // (2 * h), 2, h)
        x = v[..., 0, :].copy()
        y = v[..., 1, :]
        v[..., 0, :] = x + y
        v[..., 1, :] = x - y
        h *= 2
    return a


def _log2_exact(size: int) -> int:
    n = size.bit_length() - 1
    if size < 1 or 2**n != size:
        raise DimensionError(f"table length {size} is not a power of two")
    return n


# ---------------------------------------------------------------- types

def _canonical_terms(n: int, terms: Mapping[Sequence[int], float]) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    for key, coeff in terms.items():
        sites = tuple(int(i) for i in key)
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in term {key!r}")
        if any(i < 0 or i >= n for i in sites):
            raise DimensionError(f"term {key!r} has a site outside 0..{n - 1}")
        sites = tuple(sorted(sites))
        if sites in out:
            raise ValueError(f"duplicate term {sites!r}")
        c = float(coeff)
        if not np.isfinite(c):
            raise ValueError(f"non-finite coefficient for {sites!r}")
        if c != 0.0:
            out[sites] = c
    return dict(sorted(out.items(), key=lambda kv: (len(kv[0]), kv[0])))


@dataclass(frozen=True)
class SpinHamiltonian:
    """Sparse Fourier representation of H on {-1,+1}^n (sites 0..n-1)."""

    n: int
    terms: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 0:
            raise DimensionError("n must be nonnegative")
        object.__setattr__(self, "terms", _canonical_terms(self.n, self.terms))

    # -- constructors
    @classmethod
    def from_ising(cls, J: np.ndarray, h: np.ndarray | None = None) -> "SpinHamiltonian":
        """H = 1/2 <s, J s> + <h, s> with J symmetric, zero diagonal."""
        J = np.asarray(J, dtype=float)
        n = J.shape[0]
        if J.shape != (n, n) or not np.allclose(J, J.T, atol=1e-14):
            raise DimensionError("J must be a symmetric square matrix")
        terms: dict[tuple[int, ...], float] = {}
        for i, j in itertools.combinations(range(n), 2):
            terms[(i, j)] = J[i, j]
        if h is not None:
            h = np.asarray(h, dtype=float)
            if h.shape != (n,):
                raise DimensionError("h must have length n")
            for i in range(n):
                terms[(i,)] = h[i]
        return cls(n, terms)

    # -- derived structure
    @property
    def degree(self) -> int:
        return max((len(s) for s in self.terms), default=0)

    def coefficient(self, sites: Iterable[int]) -> float:
        return self.terms.get(tuple(sorted(sites)), 0.0)

    @cached_property
    def _groups(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        groups: dict[int, tuple[list, list]] = {}
        for s, c in self.terms.items():
            idx, cs = groups.setdefault(len(s), ([], []))
            idx.append(s)
            cs.append(c)
        return {d: (np.array(idx, dtype=np.int64).reshape(len(idx), d), np.array(cs))
                for d, (idx, cs) in groups.items()}

    @cached_property
    def _scatter(self) -> dict[int, tuple[list, list]]:
        # Per degree: one-hot maps from term slots to gradient / Hessian entries.
        n = self.n
        out = {}
        for d, (idx, coef) in self._groups.items():
            t = len(coef)
            rows = np.arange(t)
            grad = []
            for k in range(d):
                m = sp.csr_matrix((coef, (rows, idx[:, k])), shape=(t, n))
                grad.append((k, m))
            hess = []
            for a, b in itertools.combinations(range(d), 2):
                flat_ij = idx[:, a] * n + idx[:, b]
                flat_ji = idx[:, b] * n + idx[:, a]
                m = sp.csr_matrix((np.concatenate([coef, coef]),
                                   (np.concatenate([rows, rows]), np.concatenate([flat_ij, flat_ji]))),
                                  shape=(t, n * n))
                hess.append(((a, b), m))
            out[d] = (grad, hess)
        return out

    def coefficient_vector(self) -> np.ndarray:
        """Dense coefficients indexed by subset mask (length 2^n)."""
        if self.n > EXHAUSTIVE_TABLE_MAX_N:
            raise DimensionError(f"n={self.n} too large for a dense table")
        v = np.zeros(2**self.n)
        for s, c in self.terms.items():
            v[subset_mask(self.n, s)] += c
        return v

    # -- JSON
    def to_json(self) -> dict:
        return {"n": self.n,
                "terms": [{"sites": [i + 1 for i in s], "coeff": c} for s, c in self.terms.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SpinHamiltonian":
        n = int(obj["n"])
        terms: dict[tuple[int, ...], float] = {}
        for t in obj.get("terms", []):
            sites = [int(i) for i in t["sites"]]
            if any(b <= a for a, b in zip(sites, sites[1:])):
                raise ValueError(f"sites must be strictly increasing: {sites}")
            if any(i < 1 or i > n for i in sites):
                raise DimensionError(f"site out of range 1..{n}: {sites}")
            key = tuple(i - 1 for i in sites)
            if key in terms:
                raise ValueError(f"duplicate site-set {sites}")
            terms[key] = float(t["coeff"])
        return cls(n, terms)

    def __call__(self, x) -> np.ndarray | float:
        return evaluate(self, x)


def load_hamiltonian(path: str | Path) -> SpinHamiltonian:
    return SpinHamiltonian.from_json(json.loads(Path(path).read_text()))


def save_hamiltonian(h: SpinHamiltonian, path: str | Path) -> None:
    Path(path).write_text(json.dumps(h.to_json(), indent=1) + "\n")


@dataclass(frozen=True)
class PinningContext:
    """Sites in ``A`` pinned to ``sigma_A``; sites in ``B`` set to 0."""

    n: int
    A: tuple[int, ...] = ()
    sigma_A: tuple[int, ...] = ()
    B: tuple[int, ...] = ()

    def __post_init__(self):
        A = tuple(int(i) for i in self.A)
        B = tuple(int(i) for i in self.B)
        s = tuple(int(v) for v in self.sigma_A)
        if len(s) != len(A):
            raise DimensionError("sigma_A must have one entry per pinned site")
        if any(v not in (-1, 1) for v in s):
            raise ValueError("sigma_A entries must be +1 or -1")
        if len(set(A)) != len(A) or len(set(B)) != len(B):
            raise ValueError("repeated site in A or B")
        if set(A) & set(B):
            raise ValueError(f"A and B overlap: {sorted(set(A) & set(B))}")
        if any(i < 0 or i >= self.n for i in A + B):
            raise DimensionError("pinning site out of range")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma_A", s)

    @property
    def free(self) -> tuple[int, ...]:
        fixed = set(self.A) | set(self.B)
        return tuple(i for i in range(self.n) if i not in fixed)

    def embed(self, sigma_free: np.ndarray) -> np.ndarray:
        """Full-length point (sigma_A, sigma_free, 0_B); accepts batches."""
        sigma_free = np.asarray(sigma_free, dtype=float)
        out = np.zeros(sigma_free.shape[:-1] + (self.n,))
        out[..., list(self.free)] = sigma_free
        if self.A:
            out[..., list(self.A)] = np.array(self.sigma_A, dtype=float)
        return out

    def then(self, inner: "PinningContext") -> "PinningContext":
        """Merge with a context expressed on this context's free sites."""
        free = self.free
        if inner.n != len(free):
            raise DimensionError("inner context has the wrong site count")
        A = self.A + tuple(free[i] for i in inner.A)
        s = self.sigma_A + inner.sigma_A
        B = self.B + tuple(free[i] for i in inner.B)
        return PinningContext(self.n, A, s, B)


@dataclass(frozen=True)
class SmoothnessReport:
    beta: float
    argmax_corner: np.ndarray
    method: str  # "exhaustive" | "sampled-lower-bound"


# ---------------------------------------------------------------- operations

def fourier_transform(values: np.ndarray) -> SpinHamiltonian:
    """Fourier coefficients of a full corner table of length 2^n."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise DimensionError("expected a 1-d table of corner values")
    n = _log2_exact(values.shape[0])
    if n > EXHAUSTIVE_TABLE_MAX_N:
        raise DimensionError(f"n={n} exceeds the exhaustive limit {EXHAUSTIVE_TABLE_MAX_N}")
    coef = fwht(values) / values.shape[0]
    nz = np.flatnonzero(coef)
    sites_of = corners(n, nz) < 0
    terms = {tuple(np.flatnonzero(row).tolist()): coef[m] for m, row in zip(nz, sites_of)}
    return SpinHamiltonian(n, terms)


def corner_table(h: SpinHamiltonian) -> np.ndarray:
    """H at every corner, in corner order."""
    return fwht(h.coefficient_vector())


def _as_points(h: SpinHamiltonian, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != h.n:
        raise DimensionError(f"point has {x.shape[-1]} coordinates, expected {h.n}")
    return np.clip(x, -1.0, 1.0), single


def evaluate(h: SpinHamiltonian, x) -> np.ndarray | float:
    """Multilinear extension at x in [-1,1]^n (rows of a 2-d array are points)."""
    x, single = _as_points(h, x)
    x = x.copy()
    out = np.zeros(x.shape[0])
    for d, (idx, coef) in h._groups.items():
        if d == 0:
            out += coef.sum()
            continue
        out += np.prod(x[:, idx], axis=2) @ coef
    return float(out[0]) if single else out


def _products_without(vals: np.ndarray, skip: Sequence[int]) -> np.ndarray:
    keep = [k for k in range(vals.shape[-1]) if k not in skip]
    if not keep:
        return np.ones(vals.shape[:-1])
    return np.prod(vals[..., keep], axis=-1)


def gradient(h: SpinHamiltonian, x) -> np.ndarray:
    x, single = _as_points(h, x)
    out = np.zeros((x.shape[0], h.n))
    for d, (grads, _) in h._scatter.items():
        if d == 0:
            continue
        idx = h._groups[d][0]
        vals = x[:, idx]
        for k, m in grads:
            out += np.asarray((m.T @ _products_without(vals, (k,)).T).T)
    return out[0] if single else out


def cavity_field(h: SpinHamiltonian, j: int, sigma) -> np.ndarray | float:
    """B_j(sigma) = d/dx_j of the multilinear extension; independent of sigma_j."""
    if not 0 <= j < h.n:
        raise DimensionError(f"site {j} out of range")
    sigma, single = _as_points(h, sigma)
    out = np.zeros(sigma.shape[0])
    for d, (idx, coef) in h._groups.items():
        rows, pos = np.nonzero(idx == j)
        if rows.size == 0:
            continue
        vals = sigma[:, idx[rows]]
        vals[:, np.arange(rows.size), pos] = 1.0
        out += np.prod(vals, axis=2) @ coef[rows]
    return float(out[0]) if single else out


def cavity_fields(h: SpinHamiltonian, sigma) -> np.ndarray:
    """All cavity fields at once; equals :func:`gradient` at corners."""
    return gradient(h, sigma)


def hessian(h: SpinHamiltonian, x) -> np.ndarray:
    """Hessian of the multilinear extension; zero diagonal by multilinearity."""
    x, single = _as_points(h, x)
    n = h.n
    out = np.zeros((x.shape[0], n * n))
    for d, (_, hess) in h._scatter.items():
        if d < 2:
            continue
        idx = h._groups[d][0]
        vals = x[:, idx]
        for (a, b), m in hess:
            out += np.asarray((m.T @ _products_without(vals, (a, b)).T).T)
    out = out.reshape(-1, n, n)
    return out[0] if single else out


def smoothness_beta(h: SpinHamiltonian, mode: str = "exhaustive", *, trials: int = 200,
                    restarts: int = 50, seed: int = 0) -> SmoothnessReport:
    """beta = max over corners of the Hessian operator norm.

    ``mode="exhaustive"`` enumerates all corners (n <= 20).  ``mode="sampled"``
    evaluates ``trials`` uniform corners plus ``restarts`` greedy single-flip
    ascents and returns a certified lower bound.
    """
    n = h.n
    if n == 0 or h.degree < 2:
        return SmoothnessReport(0.0, np.ones(n, dtype=np.int8),
                                "exhaustive" if mode == "exhaustive" else "sampled-lower-bound")
    if mode == "exhaustive":
        if n > EXHAUSTIVE_BETA_MAX_N:
            raise DimensionError(f"exhaustive smoothness needs n <= {EXHAUSTIVE_BETA_MAX_N}")
        best, arg = -1.0, 0
        total = 2**n
        for start in range(0, total, _CHUNK):
            ids = np.arange(start, min(total, start + _CHUNK))
            norms = op_norm_batch(hessian(h, corners(n, ids)))
            k = int(np.argmax(norms))
            if norms[k] > best:
                best, arg = float(norms[k]), int(ids[k])
        return SmoothnessReport(best, corners(n, np.array(arg)), "exhaustive")
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    cand = rng.choice([-1, 1], size=(trials, n)).astype(np.int8)
    norms = op_norm_batch(hessian(h, cand))
    k = int(np.argmax(norms))
    best, best_sigma = float(norms[k]), cand[k].copy()
    flips = 1 - 2 * np.eye(n, dtype=np.int8)
    for _ in range(restarts):
        s = rng.choice([-1, 1], size=n).astype(np.int8)
        cur = op_norm(hessian(h, s))
        while True:
            nb = s[None, :] * flips
            vals = op_norm_batch(hessian(h, nb))
            k = int(np.argmax(vals))
            if vals[k] <= cur * (1 + 1e-12):
                break
            s, cur = nb[k], float(vals[k])
        if cur > best:
            best, best_sigma = cur, s.copy()
    return SmoothnessReport(best, best_sigma, "sampled-lower-bound")


def pin(h: SpinHamiltonian, ctx: PinningContext) -> SpinHamiltonian:
    """Hamiltonian on the free sites of ``ctx`` (relabelled 0.. in order)."""
    if ctx.n != h.n:
        raise DimensionError("context and Hamiltonian disagree on n")
    pinned = dict(zip(ctx.A, ctx.sigma_A))
    zeroed = set(ctx.B)
    relabel = {i: k for k, i in enumerate(ctx.free)}
    acc: dict[tuple[int, ...], float] = {}
    for s, c in h.terms.items():
        if zeroed.intersection(s):
            continue
        sign = 1
        rest = []
        for i in s:
            if i in pinned:
                sign *= pinned[i]
            else:
                rest.append(relabel[i])
        key = tuple(rest)
        acc[key] = acc.get(key, 0.0) + sign * c
    return SpinHamiltonian(len(ctx.free), acc)


def _ternary_points(n: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0, 0.0), repeat=n))).reshape(-1, n)


def t_constant(h: SpinHamiltonian, *, reduce: bool | None = None) -> tuple[float, PinningContext]:
    """sup over (A, B, sigma_A, free spins) of the pinned Hessian norm.

    Enumerates every point of {-1,0,+1}^n (zeros = B) and every split of its
    support into pinned and free sites.  With ``reduce=True`` (default for
    n > 8) only the split with all support sites free is kept, which gives the
    same supremum because a principal submatrix never has larger norm.
    Returns the value and a maximizing context.
    """
    n = h.n
    if n > T_CONSTANT_MAX_N:
        raise DimensionError(f"t_constant needs n <= {T_CONSTANT_MAX_N}")
    if reduce is None:
        reduce = n > 8
    empty = PinningContext(n)
    if n < 2 or h.degree < 2:
        return 0.0, empty
    pts = _ternary_points(n)
    hs = hessian(h, pts)
    nonzero = pts != 0
    best, arg = -1.0, (empty, None)
    if reduce:
        norms = np.array([op_norm(m[np.ix_(nz, nz)]) for m, nz in zip(hs, nonzero)])
        k = int(np.argmax(norms))
        zeros = tuple(np.flatnonzero(~nonzero[k]).tolist())
        return float(norms[k]), PinningContext(n, (), (), zeros)
    for r in range(2, n + 1):
        for free in itertools.combinations(range(n), r):
            f = list(free)
            sel = np.all(nonzero[:, f], axis=1)
            sub = hs[sel][:, f][:, :, f]
            norms = op_norm_batch(sub)
            k = int(np.argmax(norms))
            if norms[k] > best:
                best = float(norms[k])
                arg = (free, pts[sel][k])
    free, x = arg
    A = tuple(i for i in range(n) if i not in free and x[i] != 0)
    B = tuple(i for i in range(n) if x[i] == 0)
    return best, PinningContext(n, A, tuple(int(x[i]) for i in A), B)


# ---------------------------------------------------------------- generators

def random_hamiltonian(n: int, degree: int, rng: np.random.Generator, *, law: str = "gauss",
                       scale: float = 1.0, field_scale: float | None = None) -> SpinHamiltonian:
    """All terms of size 1..degree with i.i.d. coefficients.

    ``law`` is ``"gauss"`` (standard normal) or ``"exp"`` (Exp(1), positive).
    Degree-1 terms use ``field_scale`` (defaults to ``scale``).
    """
    if field_scale is None:
        field_scale = scale
    terms = {}
    for d in range(1, degree + 1):
        for s in itertools.combinations(range(n), d):
            z = rng.standard_normal() if law == "gauss" else rng.exponential()
            if law not in ("gauss", "exp"):
                raise ValueError(f"unknown law {law!r}")
            terms[s] = (field_scale if d == 1 else scale) * z
    return SpinHamiltonian(n, terms)


def interaction_part(h: SpinHamiltonian) -> SpinHamiltonian:
    """Terms of degree >= 2 only."""
    return SpinHamiltonian(h.n, {s: c for s, c in h.terms.items() if len(s) >= 2})


def add_field(h: SpinHamiltonian, field_: np.ndarray) -> SpinHamiltonian:
    terms = dict(h.terms)
    for i, v in enumerate(np.asarray(field_, dtype=float)):
        terms[(i,)] = terms.get((i,), 0.0) + float(v)
    return SpinHamiltonian(h.n, terms)


def scale_interactions(h: SpinHamiltonian, factor: float) -> SpinHamiltonian:
    return SpinHamiltonian(h.n, {s: (c * factor if len(s) >= 2 else c) for s, c in h.terms.items()})
