"""Seeded verification suites and their JSON reports.

A suite turns a validated :class:`ExperimentConfig` into a list of records
``{check, instance, values, pass, tolerance}``.  Reports are written with
sorted keys and no timestamps, so a rerun with the same config is
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .exact import (at_constant_search, comparison_check, correlation_matrix_spin, dirichlet_form,
                    dirichlet_form_cosh, eigenvalues_reversible, gibbs_table, glauber_operator,
                    measured_mixing_time, mixing_time_bounds, mlsi_search, spectral_gap)
from .hamiltonian import (SpinHamiltonian, load_hamiltonian, random_hamiltonian, smoothness_beta,
                          t_constant)
from .linalg import op_norm
from .pspin import (PSpinSpec, bad_pinning_experiment, load_pspin_spec, norm_sum_statistic,
                    rows_to_csv)
from .subsets import (DegenerateMarginalWarning, continuity_verify,
                      correlation_matrix_subset, corner_permutation, dirichlet_form_covariance,
                      down_up_walk, homogenize, load_subset_distribution, oppenheim_verify,
                      random_ergodic_subset_distribution, random_subset_distribution,
                      si_local_identity_check)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


_TOP_KEYS = {"suite", "seed", "n", "count", "tolerance", "instance", "out", "params"}
_INSTANCE_KEYS = {
    "random": {"kind", "degree", "law", "scale"},
    "hamiltonian": {"kind", "path"},
    "subsets": {"kind", "path"},
    "pspin": {"kind", "path"},
}


@dataclass(frozen=True)
class SuiteDef:
    run: Callable
    n: int
    count: int
    tolerance: float
    params: dict = field(default_factory=dict)
    instances: tuple = ()
    report_only: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    suite: str
    seed: int
    n: int
    count: int
    tolerance: float
    instance: dict | None
    out: str | None
    params: dict

    def canonical(self) -> dict:
        # the output path does not change results, so it stays out of the hash
        return {"suite": self.suite, "seed": self.seed, "n": self.n, "count": self.count,
                "tolerance": self.tolerance, "instance": self.instance, "params": self.params}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _int(key, v, lo, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    if v < lo or (hi is not None and v > hi):
        raise ConfigError(f"{key}: {v} outside [{lo}, {hi if hi is not None else 'inf'}]")
    return v


def _positive_float(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key}: expected a finite number, got {v!r}")
    if v <= 0:
        raise ConfigError(f"{key}: must be positive, got {v!r}")
    return float(v)


def _check_param(key, v, default):
    if isinstance(default, bool):
        if not isinstance(v, bool):
            raise ConfigError(f"{key}: expected true or false, got {v!r}")
        return v
    if isinstance(default, int):
        return _int(key, v, 1)
    if isinstance(default, float):
        return _positive_float(key, v)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key}: expected a nonempty list")
    return [_check_param(f"{key}[{i}]", x, default[0]) for i, x in enumerate(v)]


def _check_instance(obj, base: Path | None) -> dict | None:
    if obj is None:
        return None
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("instance: expected an object with a 'kind'")
    kind = obj["kind"]
    if kind not in _INSTANCE_KEYS:
        raise ConfigError(f"instance.kind: unknown kind {kind!r}")
    extra = set(obj) - _INSTANCE_KEYS[kind]
    if extra:
        raise ConfigError(f"instance.{sorted(extra)[0]}: unknown key")
    out = dict(obj)
    if kind == "random":
        if "degree" in out:
            _int("instance.degree", out["degree"], 1, 8)
        if "law" in out and out["law"] not in ("gauss", "exp"):
            raise ConfigError(f"instance.law: expected 'gauss' or 'exp', got {out['law']!r}")
        if "scale" in out:
            out["scale"] = _positive_float("instance.scale", out["scale"])
    else:
        if "path" not in out or not isinstance(out["path"], str):
            raise ConfigError("instance.path: required")
        p = Path(out["path"])
        if not p.is_absolute() and base is not None:
            p = base / p
        if not p.is_file():
            raise ConfigError(f"instance.path: file not found: {out['path']}")
        out["path"] = str(p)
    return out


def parse_config(obj: Any, *, base: Path | None = None) -> ExperimentConfig:
    """Validate a config mapping; unknown keys and bad values raise ConfigError."""
    if not isinstance(obj, dict):
        raise ConfigError("config: expected a JSON object")
    extra = set(obj) - _TOP_KEYS
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown key")
    if "suite" not in obj:
        raise ConfigError("suite: required")
    name = obj["suite"]
    if name not in SUITES:
        raise ConfigError(f"suite: unknown suite {name!r}")
    d = SUITES[name]
    seed = _int("seed", obj.get("seed", 0), 0, 2**64 - 1)
    n = _int("n", obj.get("n", d.n), 1, 24)
    count = _int("count", obj.get("count", d.count), 1)
    tol = _positive_float("tolerance", obj.get("tolerance", d.tolerance))
    instance = _check_instance(obj.get("instance"), base)
    if instance is not None and instance["kind"] not in d.instances:
        raise ConfigError(f"instance.kind: suite {name!r} does not accept {instance['kind']!r}")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params: expected an object")
    bad = set(params) - set(d.params)
    if bad:
        raise ConfigError(f"params.{sorted(bad)[0]}: unknown key for suite {name!r}")
    merged = dict(d.params)
    for key, v in params.items():
        merged[key] = _check_param(f"params.{key}", v, d.params[key])
    out = obj.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out: expected a path string")
    return ExperimentConfig(name, seed, n, count, tol, instance, out, merged)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    p = Path(path)
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise ConfigError("config: expected a JSON object")
    obj.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(obj, base=p.parent)


# ---------------------------------------------------------------- reports

def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


@dataclass
class SuiteReport:
    config: ExperimentConfig
    records: list
    csv: str | None = None
    report_only: bool = False

    @property
    def failures(self) -> int:
        return sum(1 for r in self.records if r["pass"] is False)

    @property
    def passed(self) -> bool:
        return self.report_only or self.failures == 0

    def to_json(self) -> dict:
        return _clean({"suite": self.config.suite, "version": __version__,
                       "config_hash": self.config.digest(), "config": self.config.canonical(),
                       "records": self.records, "failures": self.failures,
                       "pass": self.passed, "report_only": self.report_only})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True, allow_nan=False) + "\n"

    def write(self, out: str | Path) -> list[Path]:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        paths = [d / f"{self.config.suite}.json"]
        paths[0].write_text(self.dumps())
        if self.csv is not None:
            paths.append(d / f"{self.config.suite}.csv")
            paths[1].write_text(self.csv)
        return paths


def _record(check, instance, values, ok, tol) -> dict:
    return {"check": check, "instance": instance, "values": values,
            "pass": None if ok is None else bool(ok), "tolerance": tol}


def run_suite(config: ExperimentConfig) -> SuiteReport:
    d = SUITES[config.suite]
    result = d.run(config)
    records, csv = result if isinstance(result, tuple) else (result, None)
    return SuiteReport(config, records, csv, d.report_only)


# ---------------------------------------------------------------- instance helpers

_PROFILES = [(deg, law) for deg in (1, 2, 3) for law in ("gauss", "exp")]


def _random_instances(cfg: ExperimentConfig, sizes, *, max_degree: int = 3,
                      max_scale: float = 1.5):
    """Yield (label, H) for random Hamiltonians, or the single file instance."""
    inst = cfg.instance
    if inst is not None and inst["kind"] == "hamiltonian":
        h = load_hamiltonian(inst["path"])
        yield {"file": Path(inst["path"]).name, "n": h.n}, h
        return
    rng = np.random.default_rng([cfg.seed, 0x48])
    inst = inst or {}
    for t in range(cfg.count):
        n = sizes[t % len(sizes)]
        deg, law = _PROFILES[t % len(_PROFILES)]
        deg = min(inst.get("degree", deg), max_degree, n)
        law = inst.get("law", law)
        # log-uniform scales cover both weak and strong coupling
        scale = inst.get("scale", float(np.exp(rng.uniform(np.log(0.05), np.log(max_scale)))))
        h = random_hamiltonian(n, deg, rng, law=law, scale=scale / max(1, deg - 1))
        yield {"index": t, "n": n, "degree": deg, "law": law, "scale": scale}, h


def _subset_instances(cfg: ExperimentConfig, shapes, *, links: bool = False, ergodic: bool = True):
    inst = cfg.instance
    if inst is not None:
        mu = load_subset_distribution(inst["path"])
        yield {"file": Path(inst["path"]).name, "n": mu.n, "k": mu.k}, mu
        return
    rng = np.random.default_rng([cfg.seed, 0x53])
    for t in range(cfg.count):
        n, k = shapes[t % len(shapes)]
        sparse = bool(t % 2)
        if ergodic:
            mu = random_ergodic_subset_distribution(n, k, rng, sparse=sparse, links=links)
        else:
            mu = random_subset_distribution(n, k, rng, sparse=sparse)
        yield {"index": t, "n": n, "k": k, "sparse": sparse}, mu


def _sizes(lo: int, hi: int) -> list[int]:
    if hi < lo:
        raise ConfigError(f"n: must be at least {lo}")
    return list(range(lo, hi + 1))


def _shapes(n_max: int, k_min: int, max_sets: int) -> list[tuple[int, int]]:
    out = [(n, k) for n in range(3, n_max + 1) for k in range(k_min, n)
           if math.comb(n, k) <= max_sets]
    if not out:
        raise ConfigError("n: too small for this suite")
    return out


# ---------------------------------------------------------------- suites

def _theorem31(cfg):
    recs = []
    for label, h in _random_instances(cfg, _sizes(min(4, cfg.n), min(cfg.n, 10))):
        table = gibbs_table(h)
        gap = spectral_gap(glauber_operator(table))
        eta = correlation_matrix_spin(table).lambda_max
        bound = 1.0 / (h.n * gap)
        recs.append(_record("eta <= 1/(n gap)", label,
                            {"eta": eta, "gap": gap, "bound": bound, "slack": bound - eta},
                            eta <= bound + cfg.tolerance, cfg.tolerance))
    return recs


def _trickledown(cfg):
    recs = []
    shapes = _shapes(cfg.n, 3, cfg.params["max_sets"])
    for label, mu in _subset_instances(cfg, shapes, links=True):
        for check, fn in (("oppenheim", oppenheim_verify), ("continuity", continuity_verify)):
            rep = fn(mu, cfg.tolerance)
            ok = rep.pop("pass")
            rep.pop("tolerance")
            recs.append(_record(check, label, rep, ok, cfg.tolerance))
    return recs


def _dirichlet_identity(cfg):
    recs = []
    rng = np.random.default_rng([cfg.seed, 0x44])
    for label, h in _random_instances(cfg, _sizes(2, min(cfg.n, 8))):
        table = gibbs_table(h)
        op = glauber_operator(table)
        f = rng.normal(size=2**h.n) * rng.uniform(0.1, 3.0)
        direct = dirichlet_form(op, f)
        cosh = dirichlet_form_cosh(h, table, f)
        mu = homogenize(table)
        fh = np.empty_like(f)
        fh[corner_permutation(mu, h.n)] = f
        cov = dirichlet_form_covariance(mu, fh)
        dev = max(abs(direct - cov), abs(direct - cosh))
        recs.append(_record("dirichlet forms agree", label,
                            {"direct": direct, "covariance": cov, "cosh": cosh, "deviation": dev},
                            dev <= cfg.tolerance, cfg.tolerance))
    return recs


def _t_equals_beta(cfg):
    recs = []
    for label, h in _random_instances(cfg, _sizes(2, min(cfg.n, 8))):
        beta = smoothness_beta(h).beta
        T, ctx = t_constant(h)
        recs.append(_record("T = beta", label, {"T": T, "beta": beta, "deviation": abs(T - beta)},
                            abs(T - beta) <= cfg.tolerance, cfg.tolerance))
    rng = np.random.default_rng([cfg.seed, 0x49])
    for t in range(cfg.params["ising"]):
        n = 2 + t % max(1, min(cfg.n, 8) - 1)
        g = np.triu(rng.normal(size=(n, n)), 1)
        J = g + g.T
        h = SpinHamiltonian.from_ising(J, rng.normal(size=n))
        beta = smoothness_beta(h).beta
        T, _ = t_constant(h)
        norm = op_norm(J)
        dev = max(abs(T - beta), abs(beta - norm))
        recs.append(_record("T = beta = ||J||", {"ising": t, "n": n},
                            {"T": T, "beta": beta, "op_norm": norm, "deviation": dev},
                            dev <= cfg.tolerance, cfg.tolerance))
    return recs


def _comparison(cfg):
    recs = []
    rng = np.random.default_rng([cfg.seed, 0x43])
    trials = cfg.params["trials"]
    n = cfg.n
    for t in range(cfg.count):
        deg = 1 + t % 3
        base = gibbs_table(random_hamiltonian(n, deg, rng, scale=rng.uniform(0.05, 1.0)))
        W = rng.normal(scale=rng.uniform(0.05, 1.5), size=2**n)
        rep = comparison_check(base, W, trials, seed=int(rng.integers(2**31)))
        ok = rep.pop("pass")
        recs.append(_record("Ent_mu <= exp(2|W|) Ent_base", {"index": t, "n": n, "degree": deg},
                            rep, ok, 0.0))
    for t in range(cfg.params["products"]):
        m = 2 + t % 4
        h = SpinHamiltonian(m, {(i,): float(rng.uniform(-2, 2)) for i in range(m)})
        res = at_constant_search(gibbs_table(h), restarts=cfg.params["restarts"],
                                 seed=int(rng.integers(2**31)))
        tol = 1e-6
        recs.append(_record("product AT ratio <= 1", {"product": t, "n": m},
                            {"ratio": res.value, "evaluations": res.evaluations},
                            res.value <= 1.0 + tol, tol))
    return recs


def _mixing_sandwich(cfg):
    recs = []
    eps = cfg.params["eps"]
    # strong coupling makes the exact worst-start mixing time astronomically long
    for label, h in _random_instances(cfg, _sizes(2, min(cfg.n, 8)), max_scale=0.6):
        table = gibbs_table(h)
        op = glauber_operator(table, sparse=False)
        gap = spectral_gap(op)
        tau = measured_mixing_time(op, eps)
        rho = None
        if cfg.params["mlsi"]:
            rho = mlsi_search(table, op, restarts=4, iters=100, seed=cfg.seed).value
        b = mixing_time_bounds(gap, rho, float(table.probs.min()), eps)
        ok = b["lower_gamma"] - cfg.tolerance <= tau <= b["upper_gamma"] + cfg.tolerance
        recs.append(_record("gap sandwich", label,
                            {"tau": tau, "gap": gap, "rho_upper": rho, **b}, ok, cfg.tolerance))
    return recs


def _si_local(cfg):
    recs = []
    shapes = _shapes(cfg.n, 1, cfg.params["max_sets"])
    for label, mu in _subset_instances(cfg, shapes, ergodic=False):
        rep = si_local_identity_check(mu, cfg.tolerance)
        ok = rep.pop("pass")
        rep.pop("tolerance")
        recs.append(_record("k lambda2 = lambda_max(Psi)", label, rep, ok, cfg.tolerance))
    return recs


def _homogenize_consistency(cfg):
    recs = []
    rng = np.random.default_rng([cfg.seed, 0x4F])
    for label, h in _random_instances(cfg, _sizes(2, min(cfg.n, 7))):
        table = gibbs_table(h)
        op = glauber_operator(table, sparse=False)
        mu = homogenize(table)
        walk = down_up_walk(mu)
        perm = corner_permutation(mu, h.n)
        op_dev = float(np.max(np.abs(walk.dense()[np.ix_(perm, perm)] - op.dense())))
        ev = np.sort(eigenvalues_reversible(op))
        ew = np.sort(eigenvalues_reversible(walk))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateMarginalWarning)
            lam_sub = correlation_matrix_subset(mu).lambda_max
        lam_spin = correlation_matrix_spin(table).lambda_max
        f = rng.normal(size=2**h.n)
        fh = np.empty_like(f)
        fh[perm] = f
        df = abs(dirichlet_form(op, f) - dirichlet_form(walk, fh))
        dev = max(op_dev, float(np.max(np.abs(ev - ew))), abs(lam_sub - lam_spin), df)
        recs.append(_record("glauber = homogenized down-up", label,
                            {"operator": op_dev, "spectrum": float(np.max(np.abs(ev - ew))),
                             "eta_spin": lam_spin, "eta_subset": lam_sub, "dirichlet": df,
                             "deviation": dev}, dev <= cfg.tolerance, cfg.tolerance))
    return recs


def _pspin_norm_decay(cfg):
    inst = cfg.instance
    base = load_pspin_spec(inst["path"]) if inst else PSpinSpec(cfg.n, {2: 0.1, 3: 0.1},
                                                                seed=cfg.seed)
    p = cfg.params
    ks = [k for k in p["k_grid"] if k <= base.N]
    if not ks:
        raise ConfigError(f"params.k_grid: every entry exceeds N = {base.N}")
    rows, recs = [], []
    for b2 in p["beta2"]:
        spec = base.with_(betas={**base.beta_map, 2: float(b2)})
        stat = norm_sum_statistic(spec, permutations=p["permutations"], seed=cfg.seed)
        for r in bad_pinning_experiment(spec, ks, trials=p["trials"], seed=cfg.seed):
            row = {"N": spec.N, "beta2": float(b2), **r, "norm_sum_median": stat["median"],
                   "norm_sum_q90": stat["q90"]}
            rows.append(row)
        recs.append(_record("norm-sum statistic", {"N": spec.N, "beta2": float(b2)}, stat,
                            None, cfg.tolerance))
    # distinct ordered tuples: Var H is smaller than with repeats allowed by N!/((N-p)! N^p)
    factors = {str(q): math.perm(base.N, q) / base.N**q for q in sorted({2, *base.beta_map})}
    recs.append(_record("tuple convention", {"N": base.N},
                        {"tuples": "distinct ordered", "variance_factor_vs_all_tuples": factors},
                        None, cfg.tolerance))
    csv = rows_to_csv(rows, ["N", "beta2", "k", "trials", "bad_fraction", "threshold",
                             "norm_sum_median", "norm_sum_q90"])
    return recs, csv


SUITES: dict[str, SuiteDef] = {
    "theorem31": SuiteDef(_theorem31, 8, 100, 1e-9, instances=("random", "hamiltonian")),
    "trickledown": SuiteDef(_trickledown, 7, 100, 1e-9, {"max_sets": 35}, ("subsets",)),
    "dirichlet-identity": SuiteDef(_dirichlet_identity, 6, 50, 1e-10,
                                   instances=("random", "hamiltonian")),
    "t-equals-beta": SuiteDef(_t_equals_beta, 8, 30, 1e-9, {"ising": 10},
                              ("random", "hamiltonian")),
    "comparison-lemma": SuiteDef(_comparison, 5, 10, 1e-9,
                                 {"trials": 100, "products": 10, "restarts": 8}),
    "mixing-sandwich": SuiteDef(_mixing_sandwich, 6, 20, 1e-9, {"eps": 0.25, "mlsi": False},
                                ("random", "hamiltonian")),
    "si-local": SuiteDef(_si_local, 8, 100, 1e-9, {"max_sets": 70}, ("subsets",)),
    "homogenize-consistency": SuiteDef(_homogenize_consistency, 6, 20, 1e-9,
                                       instances=("random", "hamiltonian")),
    "pspin-norm-decay": SuiteDef(_pspin_norm_decay, 12, 1, 1.0,
                                 {"beta2": [0.05, 0.1, 0.2, 0.4], "k_grid": [2, 4, 8, 12],
                                  "trials": 50, "permutations": 10},
                                 ("pspin",), report_only=True),
}

VERIFY_SUITES = tuple(SUITES)
