"""Monte Carlo heat-bath Glauber dynamics.

Randomness for chain ``c`` at step ``t`` comes from the counter-based stream
keyed on (seed, c, t, slot): slot 0 picks the site, slot 1 resamples it.
Runs are therefore reproducible independently of how many chains run together.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from . import rng as crng
from .exact import ExactGibbsTable, WalkOperator, empirical_table
from .hamiltonian import DimensionError, SpinHamiltonian, cavity_field, corner_index, corners

_STEP = 0x474C_4155
_INIT = 0x494E_4954


@dataclass(frozen=True)
class ChainState:
    """Spin vector after ``step`` updates of chain ``chain`` under ``seed``."""

    sigma: np.ndarray
    step: int = 0
    chain: int = 0
    seed: int = 0

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.int8)
        if s.ndim != 1 or np.any(np.abs(s) != 1):
            raise ValueError("sigma must be a +-1 vector")
        object.__setattr__(self, "sigma", s)

    @property
    def rng_state(self) -> tuple[int, int, int]:
        return (self.seed, self.chain, self.step)


def initial_state(n: int, seed: int, chain: int = 0) -> ChainState:
    u = crng.uniform(_INIT, seed, chain, np.arange(n))
    return ChainState(np.where(u < 0.5, 1, -1), 0, chain, seed)


def _step_uniforms(seed: int, chains, step: int):
    chains = np.asarray(chains)
    return (crng.uniform(_STEP, seed, chains, step, 0), crng.uniform(_STEP, seed, chains, step, 1))


def glauber_step(h: SpinHamiltonian, state: ChainState) -> ChainState:
    """One heat-bath update: uniform site j, then sigma_j = +1 w.p. 1/(1+exp(-2 B_j))."""
    n = h.n
    if state.sigma.shape != (n,):
        raise DimensionError("state has the wrong length")
    u_site, u_spin = _step_uniforms(state.seed, state.chain, state.step)
    j = min(int(u_site * n), n - 1)
    b = cavity_field(h, j, state.sigma)
    s = state.sigma.copy()
    s[j] = 1 if u_spin < expit(2.0 * b) else -1
    return ChainState(s, state.step + 1, state.chain, state.seed)


class _FieldTable:
    """Per-site padded term lists for vectorized cavity fields."""

    def __init__(self, h: SpinHamiltonian):
        n = h.n
        per_site: list[list[tuple[float, tuple[int, ...]]]] = [[] for _ in range(n)]
        for s, c in h.terms.items():
            for j in s:
                per_site[j].append((c, tuple(i for i in s if i != j)))
        width = max((len(t) for t in per_site), default=0)
        depth = max(h.degree - 1, 1)
        self.coef = np.zeros((n, max(width, 1)))
        self.others = np.full((n, max(width, 1), depth), n, dtype=np.int64)
        for j, terms in enumerate(per_site):
            for k, (c, rest) in enumerate(terms):
                self.coef[j, k] = c
                self.others[j, k, :len(rest)] = rest
        self.n = n

    def fields(self, sigma: np.ndarray, sites: np.ndarray) -> np.ndarray:
        ext = np.concatenate([sigma, np.ones((sigma.shape[0], 1), dtype=sigma.dtype)], axis=1)
        idx = self.others[sites]
        rows = np.arange(sigma.shape[0])[:, None, None]
        vals = np.prod(ext[rows, idx].astype(float), axis=2)
        return np.sum(vals * self.coef[sites], axis=1)


def default_burn_in(n: int) -> int:
    """20 n ceil(log n) sweeps of n single-site updates; a heuristic."""
    return 20 * n * max(1, math.ceil(math.log(max(n, 2)))) * n


@dataclass
class SampleSet:
    samples: np.ndarray  # (chains, kept, n) int8
    seed: int
    chains: int
    steps: int
    burn_in: int
    thin: int
    final: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.samples.shape[-1]

    def flat(self) -> np.ndarray:
        return self.samples.reshape(-1, self.n)

    def summary(self) -> dict:
        m = self.samples.mean(axis=2)
        return {"chains": self.chains, "steps": self.steps, "burn_in": self.burn_in,
                "thin": self.thin, "kept_per_chain": int(self.samples.shape[1]),
                "magnetization_mean": float(m.mean()),
                "magnetization_chain_means": [float(v) for v in m.mean(axis=1)]}

    def header(self) -> dict:
        return {"n": self.n, "chains": self.chains, "steps": self.steps, "seed": self.seed,
                "burn_in": self.burn_in, "thin": self.thin}


def _evolve(h: SpinHamiltonian, sigma: np.ndarray, chain_ids: np.ndarray, seed: int,
            start: int, stop: int, table: _FieldTable, callback=None) -> np.ndarray:
    n = h.n
    rows = np.arange(len(chain_ids))
    for t in range(start, stop):
        u_site, u_spin = _step_uniforms(seed, chain_ids, t)
        j = np.minimum((u_site * n).astype(np.int64), n - 1)
        b = table.fields(sigma, j)
        prev = sigma[rows, j].copy() if callback is not None else None
        sigma[rows, j] = np.where(u_spin < expit(2.0 * b), 1, -1)
        if callback is not None:
            callback(t + 1, sigma, j, prev)
    return sigma


def run_chains(h: SpinHamiltonian, chains: int, steps: int, burn_in: int | None = None,
               thin: int = 1, seed: int = 0, init: np.ndarray | None = None) -> SampleSet:
    """Run independent chains; keep the state after every ``thin``-th step past burn-in."""
    if chains < 1:
        raise ValueError("chains must be at least 1")
    if thin < 1:
        raise ValueError("thin must be at least 1")
    n = h.n
    burn_in = default_burn_in(n) if burn_in is None else burn_in
    if steps < burn_in or burn_in < 0:
        raise ValueError("need steps >= burn_in >= 0")
    ids = np.arange(chains)
    if init is None:
        sigma = np.stack([initial_state(n, seed, c).sigma for c in ids])
    else:
        sigma = np.array(np.broadcast_to(init, (chains, n)), dtype=np.int8)
    table = _FieldTable(h)
    sigma = _evolve(h, sigma, ids, seed, 0, burn_in, table)
    kept = (steps - burn_in) // thin
    out = np.empty((chains, kept, n), dtype=np.int8)
    t = burn_in
    for k in range(kept):
        sigma = _evolve(h, sigma, ids, seed, t, t + thin, table)
        t += thin
        out[:, k] = sigma
    final = [ChainState(sigma[c].copy(), t, int(c), seed) for c in ids]
    return SampleSet(out, seed, chains, steps, burn_in, thin, final)


def trajectory(h: SpinHamiltonian, chains: int, steps: int, seed: int = 0,
               start: str = "stationary", table: ExactGibbsTable | None = None) -> np.ndarray:
    """Spin trajectories of shape (chains, steps + 1, n).

    ``start="stationary"`` draws initial states from ``table`` (exact) when given,
    otherwise after the default burn-in.
    """
    n = h.n
    ids = np.arange(chains)
    ft = _FieldTable(h)
    if table is not None:
        u = crng.uniform(_INIT, seed, ids, -1)
        cdf = np.cumsum(table.probs)
        cdf[-1] = 1.0
        sigma = corners(n, np.searchsorted(cdf, u, side="right")).astype(np.int8)
        offset = 0
    else:
        sigma = np.stack([initial_state(n, seed, c).sigma for c in ids])
        offset = default_burn_in(n) if start == "stationary" else 0
        sigma = _evolve(h, sigma, ids, seed, 0, offset, ft)
    out = np.empty((chains, steps + 1, n), dtype=np.int8)
    out[:, 0] = sigma
    for t in range(steps):
        sigma = _evolve(h, sigma, ids, seed, offset + t, offset + t + 1, ft)
        out[:, t + 1] = sigma
    return out


def transition_counts(h: SpinHamiltonian, chains: int, steps: int, seed: int = 0) -> np.ndarray:
    """(2^n, 2^n) counts of observed one-step moves, after the default burn-in."""
    n = h.n
    if n > 14:
        raise DimensionError("transition counts need n <= 14")
    ids = np.arange(chains)
    ft = _FieldTable(h)
    sigma = np.stack([initial_state(n, seed, c).sigma for c in ids])
    b = default_burn_in(n)
    sigma = _evolve(h, sigma, ids, seed, 0, b, ft)
    dim = 2**n
    counts = np.zeros(dim * dim, dtype=np.int64)
    cur = corner_index(sigma)

    def record(t, s, j, prev):
        nonlocal cur
        new = corner_index(s)
        counts[:] += np.bincount(cur * dim + new, minlength=dim * dim)
        cur = new

    _evolve(h, sigma, ids, seed, b, b + steps, ft, record)
    return counts.reshape(dim, dim)


def transition_band_check(counts: np.ndarray, op: WalkOperator, sigmas: float = 3.0) -> dict:
    """Compare observed one-step frequencies with the exact operator.

    Each nonzero entry of a visited row gets z = (count - N_x P) / sqrt(N_x P (1-P)).
    Reports how many entries leave the ``sigmas`` band and passes when that
    number is consistent with chance (binomial, 3 sd) and no entry exceeds the
    Bonferroni-corrected two-sided band for the number of entries.
    """
    p = op.dense()
    visits = counts.sum(axis=1)
    mask = (p > 0) & (p < 1) & (visits[:, None] > 0)
    expected = visits[:, None] * p
    sd = np.sqrt(visits[:, None] * p * (1 - p))
    z = np.where(mask, (counts - expected) / np.where(mask, sd, 1.0), 0.0)
    m = int(mask.sum())
    stray = counts[(p == 0)].sum()
    q = 2 * norm.sf(sigmas)
    outside = int(np.sum(np.abs(z[mask]) > sigmas))
    allowed = m * q + 3 * math.sqrt(m * q * (1 - q))
    bonf = float(norm.isf(0.0027 / (2 * m))) if m else sigmas
    max_z = float(np.max(np.abs(z[mask]))) if m else 0.0
    ok = stray == 0 and outside <= allowed and max_z <= bonf
    return {"entries": m, "outside_band": outside, "expected_outside": m * q,
            "allowed_outside": allowed, "max_abs_z": max_z, "bonferroni_z": bonf,
            "impossible_moves": int(stray), "pass": bool(ok)}


def tv_to_exact(samples: np.ndarray, table: ExactGibbsTable) -> float:
    """Half the L1 distance between the empirical law of ``samples`` and the table."""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[-1] != table.n:
        raise DimensionError("samples have the wrong number of sites")
    if table.n > 14:
        raise DimensionError("tv_to_exact needs n <= 14")
    emp = empirical_table(table.n, corner_index(samples.reshape(-1, table.n)))
    return 0.5 * float(np.abs(emp - table.probs).sum())


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Pooled autocorrelation of (chains, T) series about the pooled mean."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x = x - x.mean()
    var = float(np.mean(x**2))
    if var <= 0:
        raise ValueError("observable has zero variance")
    T = x.shape[1]
    size = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(x, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :max_lag + 1].sum(axis=0)
    acov /= x.shape[0] * (T - np.arange(max_lag + 1))
    return acov / var


def gap_estimate_autocorr(trajectory_, observable=None, *, floor: float = 0.05,
                          max_lag: int | None = None) -> float:
    """Spectral-gap estimate 1 - exp(slope) from a log-linear fit of the autocorrelation.

    ``trajectory_`` is a 1-d or (chains, T) series of observable values, or a
    spin array (T, n) / (chains, T, n) together with ``observable``: a site
    index or a callable mapping spins (..., n) to values.  The fit uses lags
    from 1 up to where the autocorrelation first drops below ``floor``.
    """
    x = np.asarray(trajectory_)
    if observable is not None:
        if callable(observable):
            x = observable(x)
        else:
            x = x[..., int(observable)]
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if max_lag is None:
        max_lag = min(x.shape[1] // 4, 10_000)
    rho = autocorrelation(x, max_lag)
    below = np.flatnonzero(rho[1:] < floor)
    last = int(below[0]) if below.size else max_lag
    lags = np.arange(1, max(last, 1) + 1)
    r = rho[lags]
    if np.any(r <= 0) or len(lags) < 1:
        raise ValueError("autocorrelation too short to fit")
    slope = float(np.sum(lags * np.log(r)) / np.sum(lags**2))
    return 1.0 - math.exp(slope)


# ---------------------------------------------------------------- sample files

def write_samples(path: str | Path, samples: np.ndarray, header: dict, fmt: str = "csv") -> None:
    """One sample per line, ``+-1`` CSV or packed hex (bit n-1-i set iff sigma_i = -1)."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    samples = samples.reshape(-1, n)
    head = dict(header, n=n, format=fmt)
    lines = ["# " + json.dumps(head, sort_keys=True)]
    if fmt == "csv":
        lines += [",".join(str(int(v)) for v in row) for row in samples]
    elif fmt == "hex":
        width = max(1, (n + 3) // 4)
        bits = (samples < 0).astype(np.uint8)
        for row in bits:
            v = int("".join(map(str, row.tolist())), 2) if n else 0
            lines.append(format(v, f"0{width}x"))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples(path: str | Path) -> tuple[np.ndarray, dict]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError("missing header line")
    head = json.loads(text[0][1:])
    n = int(head["n"])
    body = [ln for ln in text[1:] if ln.strip()]
    if head.get("format", "csv") == "hex":
        rows = [[1 - 2 * int(b) for b in format(int(ln, 16), f"0{n}b")[-n:]] if n else []
                for ln in body]
    else:
        rows = [[int(v) for v in ln.split(",")] for ln in body]
    out = np.array(rows, dtype=np.int8).reshape(-1, n)
    if np.any(np.abs(out) != 1):
        raise ValueError("entries must be +-1")
    return out, head
