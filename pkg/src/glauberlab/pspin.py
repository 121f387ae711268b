"""Random mixed p-spin Hamiltonians and their pinned interaction matrices.

H(sigma) = sum_p beta_p / N^((p-1)/2) sum_{distinct ordered (i_1..i_p)} g_{i_1..i_p} sigma_{i_1}..sigma_{i_p}
           + <h, sigma>

The Gaussians g are drawn from a counter-based stream keyed on
(seed, p, i_1, ..., i_p), so any coefficient can be regenerated on demand.
The Fourier coefficient of a p-set S collects the g of all p! orderings of S.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import rng as crng
from .hamiltonian import DimensionError, SpinHamiltonian
from .linalg import op_norm

_DISORDER = 0x5053_5049  # domain tag for disorder draws
MATERIALIZE_MAX_N = 24
MATERIALIZE_MAX_P = 4
DELTA_MAX_N = 32


@dataclass(frozen=True)
class PSpinSpec:
    """Mixed p-spin instance: sites, inverse temperatures per p, field, seed."""

    N: int
    betas: tuple = ()
    h: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise DimensionError("N must be positive")
        betas = self.betas.items() if isinstance(self.betas, Mapping) else self.betas
        clean = []
        for p, b in sorted((int(p), float(b)) for p, b in betas):
            if p < 2:
                raise ValueError(f"p must be >= 2, got {p}")
            if b < 0 or not math.isfinite(b):
                raise ValueError(f"beta_{p} must be finite and nonnegative")
            if p > self.N and b > 0:
                raise DimensionError(f"p = {p} exceeds N = {self.N}")
            clean.append((p, b))
        if len({p for p, _ in clean}) != len(clean):
            raise ValueError("repeated p")
        h = tuple(float(v) for v in self.h) if len(self.h) else (0.0,) * self.N
        if len(h) != self.N:
            raise DimensionError("field must have length N")
        if not all(math.isfinite(v) for v in h):
            raise ValueError("field must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a uint64")
        object.__setattr__(self, "betas", tuple(clean))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def beta_map(self) -> dict[int, float]:
        return dict(self.betas)

    @property
    def active(self) -> list[tuple[int, float]]:
        return [(p, b) for p, b in self.betas if b > 0]

    @property
    def max_p(self) -> int:
        return max((p for p, _ in self.active), default=0)

    def scale(self, p: int) -> float:
        return self.beta_map.get(p, 0.0) / self.N ** ((p - 1) / 2)

    def with_(self, **kw) -> "PSpinSpec":
        d = {"N": self.N, "betas": self.betas, "h": self.h, "seed": self.seed}
        d.update(kw)
        return PSpinSpec(**d)

    def to_json(self) -> dict:
        return {"N": self.N, "betas": {str(p): b for p, b in self.betas}, "h": list(self.h),
                "seed": self.seed}

    @classmethod
    def from_json(cls, obj: Mapping) -> "PSpinSpec":
        extra = set(obj) - {"N", "betas", "h", "seed"}
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)}")
        return cls(int(obj["N"]), {int(p): float(b) for p, b in obj.get("betas", {}).items()},
                   tuple(obj.get("h", ())), int(obj.get("seed", 0)))


def load_pspin_spec(path: str | Path) -> PSpinSpec:
    return PSpinSpec.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- disorder

def disorder(spec: PSpinSpec, p: int, tuples) -> np.ndarray:
    """g for ordered index tuples, shape (..., p); repeated indices give 0."""
    t = np.asarray(tuples, dtype=np.int64)
    if t.shape[-1] != p:
        raise DimensionError(f"tuples must have {p} entries")
    g = crng.normal(_DISORDER, spec.seed, p, *np.moveaxis(t, -1, 0))
    srt = np.sort(t, axis=-1)
    distinct = np.all(srt[..., 1:] != srt[..., :-1], axis=-1) if p > 1 else True
    return np.where(distinct, g, 0.0)


def set_coefficients(spec: PSpinSpec, p: int, sets) -> np.ndarray:
    """Fourier coefficients of p-sets: scale_p times the sum of g over all orderings."""
    s = np.asarray(sets, dtype=np.int64).reshape(-1, p)
    total = np.zeros(len(s))
    for perm in itertools.permutations(range(p)):
        total += disorder(spec, p, s[:, perm])
    return spec.scale(p) * total


def sample_pspin(spec: PSpinSpec) -> SpinHamiltonian:
    """Materialize the instance as a sparse SpinHamiltonian (N <= 24, p <= 4)."""
    if spec.N > MATERIALIZE_MAX_N or spec.max_p > MATERIALIZE_MAX_P:
        raise DimensionError(f"materialization needs N <= {MATERIALIZE_MAX_N}, p <= {MATERIALIZE_MAX_P}")
    terms: dict[tuple[int, ...], float] = {}
    for p, _ in spec.active:
        sets = np.array(list(itertools.combinations(range(spec.N), p)), dtype=np.int64)
        for s, c in zip(sets, set_coefficients(spec, p, sets)):
            terms[tuple(s.tolist())] = c
    for i, v in enumerate(spec.h):
        terms[(i,)] = v
    return SpinHamiltonian(spec.N, terms)


def _combination_chunks(N: int, p: int, size: int = 65536):
    it = itertools.combinations(range(N), p)
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int64)


def evaluate_pspin(spec: PSpinSpec, sigma) -> float:
    """H(sigma) by streaming over sets; no tensor is stored."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (spec.N,):
        raise DimensionError("sigma must have length N")
    total = float(np.dot(spec.h, sigma))
    for p, _ in spec.active:
        for sets in _combination_chunks(spec.N, p):
            total += float(set_coefficients(spec, p, sets) @ np.prod(sigma[sets], axis=1))
    return total


def energy_samples(N: int, betas: Mapping[int, float], sigma, seeds) -> np.ndarray:
    """H(sigma) for one disorder draw per seed, zero field."""
    sigma = np.asarray(sigma, dtype=float)
    seeds = np.asarray(seeds, dtype=np.uint64)
    out = np.zeros(len(seeds))
    for p, b in sorted(betas.items()):
        if b == 0:
            continue
        tuples = np.array(list(itertools.permutations(range(N), p)), dtype=np.int64)
        signs = np.prod(sigma[tuples], axis=1)
        keys = [tuples[:, c][None, :] for c in range(p)]
        step = max(1, 2_000_000 // len(tuples))
        for a in range(0, len(seeds), step):
            sd = seeds[a:a + step, None]
            g = crng.normal(_DISORDER, sd, p, *keys)
            out[a:a + step] += (b / N ** ((p - 1) / 2)) * (g @ signs)
    return out


def energy_variance_formula(N: int, betas: Mapping[int, float]) -> float:
    """Var H(sigma) = sum_p beta_p^2 N(N-1)..(N-p+1) / N^(p-1)."""
    return sum(b**2 * math.perm(N, p) / N ** (p - 1) for p, b in betas.items())


def temperature_norms(spec_or_betas) -> dict:
    """beta0 = sum sqrt(p^3 log p) beta_p and beta = sum sqrt(2^p p^3 log p) beta_p."""
    betas = spec_or_betas.beta_map if isinstance(spec_or_betas, PSpinSpec) else dict(spec_or_betas)
    b0 = sum(math.sqrt(p**3 * math.log(p)) * b for p, b in betas.items())
    b1 = sum(math.sqrt(2**p * p**3 * math.log(p)) * b for p, b in betas.items())
    return {"beta0": b0, "beta": b1}


# ---------------------------------------------------------------- pinned interaction matrices

@lru_cache(maxsize=16)
def coefficient_tensor(spec: PSpinSpec, p: int) -> np.ndarray:
    """Dense symmetric tensor of p-set coefficients, zero on repeated indices."""
    if spec.N > DELTA_MAX_N:
        raise DimensionError(f"dense tensors need N <= {DELTA_MAX_N}")
    N = spec.N
    t = np.zeros((N,) * p)
    sets = np.array(list(itertools.combinations(range(N), p)), dtype=np.int64)
    if len(sets) == 0:
        return t
    c = set_coefficients(spec, p, sets)
    for perm in itertools.permutations(range(p)):
        t[tuple(sets[:, perm].T)] = c
    t.setflags(write=False)
    return t


def _contract(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    # sum over ordered tails of length p-2, divided by (p-2)! to count each set once
    p = t.ndim
    out = t
    for _ in range(p - 2):
        out = out @ x
    return out / math.factorial(p - 2)


def _delta_point(spec: PSpinSpec, A_k, Aprime, Bprime, sigma_out, sigma_in):
    N = spec.N
    A_k = sorted(int(i) for i in A_k)
    Ap, Bp = set(int(i) for i in Aprime), set(int(i) for i in Bprime)
    if len(set(A_k)) != len(A_k) or any(i < 0 or i >= N for i in A_k):
        raise DimensionError("A_k must hold distinct sites in range")
    if Ap & Bp:
        raise ValueError("A' and B' overlap")
    if not (Ap | Bp) <= set(A_k):
        raise ValueError("A' and B' must lie inside A_k")
    sigma_out = np.asarray(sigma_out, dtype=float)
    sigma_in = np.asarray(sigma_in, dtype=float)
    if sigma_out.shape != (N,) or sigma_in.shape != (N,):
        raise DimensionError("sigma_out and sigma_in are full-length spin vectors")
    inside = np.zeros(N, dtype=bool)
    inside[A_k] = True
    x = np.where(inside, sigma_in, sigma_out)
    x[list(Bp)] = 0.0
    free = [i for i in A_k if i not in Ap and i not in Bp]
    return x, inside, free


def delta_matrix(spec: PSpinSpec, A_k, Aprime, Bprime, sigma_out, sigma_in, *,
                 per_p: bool = False):
    """Pinned interaction matrix on A_k minus (A' u B').

    Spins outside A_k are fixed to ``sigma_out``, spins in A_k minus B' take
    values ``sigma_in`` and B' is zeroed.  In +-1 units (the coefficient scale
    already carries the 1/sqrt(N) per spin) the result is the Hessian of H at
    that point restricted to the free sites.  Returns (matrix, free_sites), or
    a dict p -> matrix with ``per_p``.
    """
    x, _, free = _delta_point(spec, A_k, Aprime, Bprime, sigma_out, sigma_in)
    mats = {}
    for p, _ in spec.active:
        full = _contract(coefficient_tensor(spec, p), x)
        mats[p] = full[np.ix_(free, free)]
    if per_p:
        return mats, free
    total = sum(mats.values(), np.zeros((len(free), len(free))))
    return total, free


def delta_split(spec: PSpinSpec, A_k, Aprime, Bprime, sigma_out, sigma_in, *, per_p: bool = False):
    """(Delta0, Delta1): Delta0 keeps only tails lying entirely outside A_k."""
    x, inside, free = _delta_point(spec, A_k, Aprime, Bprime, sigma_out, sigma_in)
    x0 = np.where(inside, 0.0, x)
    d0, d1 = {}, {}
    for p, _ in spec.active:
        t = coefficient_tensor(spec, p)
        full = _contract(t, x)[np.ix_(free, free)]
        zero = _contract(t, x0)[np.ix_(free, free)]
        d0[p], d1[p] = zero, full - zero
    if per_p:
        return d0, d1, free
    z = np.zeros((len(free), len(free)))
    return sum(d0.values(), z), sum(d1.values(), z.copy()), free


def random_A_k(N: int, k: int, I: int, rng: np.random.Generator) -> list[int]:
    others = np.array([i for i in range(N) if i != I])
    return sorted([I] + rng.choice(others, size=k - 1, replace=False).tolist())


def bad_pinning_experiment(spec: PSpinSpec, k_grid: Sequence[int], alpha: float = 0.25,
                           trials: int = 200, threshold_scale: float = 1.0, *, I: int = 0,
                           sigma=None, seed: int = 0) -> list[dict]:
    """Fraction of random A_k (containing I) whose s'=0 matrices are large.

    A_k is bad when max_p ||Delta0_p|| / (beta_p p sqrt(log p)) >= C (k/N)^(1/2 - alpha).
    Delta0 does not depend on the inside spins, and pinning or zeroing sites
    of A_k only takes a principal submatrix, so the sup over (A', B') is
    attained at A' = B' = {} and is computed exactly.
    """
    N = spec.N
    rng = np.random.default_rng(seed)
    if sigma is None:
        sigma = rng.choice([-1.0, 1.0], size=N)
    sigma = np.asarray(sigma, dtype=float)
    rows = []
    for k in k_grid:
        if not 1 <= k <= N:
            raise ValueError(f"k = {k} outside 1..{N}")
        threshold = threshold_scale * (k / N) ** (0.5 - alpha)
        bad = 0
        for _ in range(trials):
            A = random_A_k(N, k, I, rng)
            d0, _, _ = delta_split(spec, A, (), (), sigma, sigma, per_p=True)
            score = max((op_norm(d0[p]) / (b * p * math.sqrt(math.log(p)))
                         for p, b in spec.active), default=0.0)
            bad += score >= threshold
        rows.append({"k": int(k), "trials": trials, "bad_fraction": bad / trials,
                     "threshold": threshold})
    return rows


def rows_to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({c: (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in columns})
    return buf.getvalue()


def adversarial_entry(N: int, beta: float, seed: int = 0) -> dict:
    """Pure 3-spin, sites 0 and 1 free, every other site k pinned to sign(G_{01k}).

    The (0, 1) entry is (beta/N) sum_k |G_{01k}| with G a sum of 6 standard
    Gaussians, so it is Theta(1); the prediction is the folded-normal mean.
    """
    spec = PSpinSpec(N, {3: beta}, seed=seed)
    rest = np.arange(2, N)
    sets = np.stack([np.zeros_like(rest), np.ones_like(rest), rest], axis=1)
    coef = set_coefficients(spec, 3, sets)
    sigma = np.ones(N)
    sigma[2:] = np.sign(coef)
    entry = float(coef @ sigma[2:])
    mean = beta / N * (N - 2) * math.sqrt(6.0) * math.sqrt(2.0 / math.pi)
    sd = beta / N * math.sqrt((N - 2) * 6.0 * (1.0 - 2.0 / math.pi))
    return {"N": N, "beta": beta, "seed": seed, "entry": entry, "mean": mean, "sd": sd,
            "z": (entry - mean) / sd, "sigma": sigma}


def norm_sum_statistic(spec: PSpinSpec, I: int = 0, sigma=None, permutations: int = 50, *,
                       B: float = 1.0, k0: int = 1, pinnings: int = 2, seed: int = 0) -> dict:
    """exp(B sum_{k > k0} sup ||Delta|| / k) over random orderings of the other sites.

    A_k is I plus the last k-1 sites of the ordering.  The sup over (A', B',
    sigma') is truncated to A' = B' = {} with sigma' = sigma plus ``pinnings``
    random (A', B', sigma') draws per k.
    """
    N = spec.N
    if N > 24:
        raise DimensionError("norm_sum_statistic needs N <= 24")
    rng = np.random.default_rng(seed)
    if sigma is None:
        sigma = rng.choice([-1.0, 1.0], size=N)
    sigma = np.asarray(sigma, dtype=float)
    others = np.array([i for i in range(N) if i != I])
    values = []
    for _ in range(permutations):
        order = rng.permutation(others)
        acc = 0.0
        for k in range(k0 + 1, N + 1):
            A = sorted([I] + order[N - k:].tolist()) if k > 1 else [I]
            best = op_norm(delta_matrix(spec, A, (), (), sigma, sigma)[0])
            for _ in range(pinnings):
                lab = rng.integers(3, size=k)
                Ap = [a for a, c in zip(A, lab) if c == 1]
                Bp = [a for a, c in zip(A, lab) if c == 2]
                sin = rng.choice([-1.0, 1.0], size=N)
                best = max(best, op_norm(delta_matrix(spec, A, Ap, Bp, sigma, sin)[0]))
            acc += best / k
        values.append(math.exp(B * acc))
    v = np.array(values)
    return {"mean": float(v.mean()), "q10": float(np.quantile(v, 0.1)),
            "median": float(np.median(v)), "q90": float(np.quantile(v, 0.9)),
            "max": float(v.max()), "permutations": permutations, "truncation": pinnings}
