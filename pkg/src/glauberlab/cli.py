"""Command-line entry point: ``glauberlab <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exact import (correlation_matrix_spin, flc_falsify, gibbs_table, glauber_operator,
                    mixing_time_bounds, mlsi_search, spectral_gap)
from .hamiltonian import (SpinHamiltonian, load_hamiltonian, random_hamiltonian, save_hamiltonian,
                          smoothness_beta)
from .learn import (exact_kl, fit_pl, learning_curve, load_params, save_params,
                    sk_params)
from .pspin import PSpinSpec, load_pspin_spec, rows_to_csv, sample_pspin, temperature_norms
from .sampler import read_samples, run_chains, tv_to_exact, write_samples
from .suites import SUITES, ConfigError, load_config, parse_config, run_suite


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text)


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a uint64")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _beta_pair(text: str) -> tuple[int, float]:
    try:
        p, b = text.split("=")
        return int(p), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected p=beta, got {text!r}") from None


def _instance(args) -> SpinHamiltonian:
    if args.hamiltonian:
        return load_hamiltonian(args.hamiltonian)
    if args.pspin:
        return sample_pspin(load_pspin_spec(args.pspin))
    if args.n is None:
        raise ConfigError("need one of --hamiltonian, --pspin or --n")
    if args.degree is None:
        return SpinHamiltonian(args.n, {})
    rng = np.random.default_rng(args.seed)
    return random_hamiltonian(args.n, args.degree, rng, scale=args.scale)


def cmd_analyze(args) -> int:
    h = _instance(args)
    table = gibbs_table(h)
    op = glauber_operator(table)
    gap = spectral_gap(op)
    eta = correlation_matrix_spin(table).lambda_max
    beta = smoothness_beta(h, seed=args.seed)
    flc = flc_falsify(table, args.alpha, seed=args.seed)
    report = {"n": h.n, "gap": gap, "eta": eta, "eta_bound": 1.0 / (h.n * gap),
              "beta": beta.beta, "beta_method": beta.method,
              "flc": {"alpha": args.alpha, "violation_found": not flc.passed,
                      "tilts_checked": flc.checked, "max_eigenvalue": flc.max_eigenvalue},
              "version": __version__}
    rho = None
    if args.mlsi:
        rho = mlsi_search(table, op, seed=args.seed).value
        report["mlsi_upper"] = rho
    if h.n > 0:
        report["mixing_bounds"] = mixing_time_bounds(gap, rho, float(table.probs.min()), args.eps)
    _emit(_dump(report), args.out, "analyze.json")
    return 0


def cmd_sample(args) -> int:
    h = _instance(args)
    res = run_chains(h, args.chains, args.steps, args.burn_in, args.thin, args.seed)
    header = res.header()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_samples(args.out, res.flat(), header, args.format)
    summary = dict(res.summary(), seed=args.seed)
    if args.exact and h.n <= 20:
        summary["tv_to_exact"] = tv_to_exact(res.flat(), gibbs_table(h))
    sys.stdout.write(_dump(summary))
    return 0


def cmd_pspin_gen(args) -> int:
    spec = PSpinSpec(args.N, dict(args.beta), tuple(args.field) if args.field else (), args.seed)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "pspin.json").write_text(_dump(spec.to_json()))
        if not args.spec_only:
            save_hamiltonian(sample_pspin(spec), out / "hamiltonian.json")
    norms = temperature_norms(spec)
    sys.stdout.write(_dump({"spec": spec.to_json(), "norms": {str(k): v for k, v in norms.items()}}))
    return 0


def cmd_learn(args) -> int:
    if args.curve:
        rng = np.random.default_rng(args.seed)
        truth = sk_params(args.n or 8, args.sk_beta, rng)
        rows = learning_curve(truth, args.m, range(args.seeds), R=args.R, iters=args.iters)
        text = rows_to_csv(rows, ["m", "mean_kl", "std_kl", "seeds", "reference"])
        _emit(text, args.out, "learning_curve.csv")
        return 0
    if not args.samples:
        raise ConfigError("learn needs --samples FILE (or --curve)")
    x, _ = read_samples(args.samples)
    R = args.R if args.R is not None else 2.0
    fit = fit_pl(x, R, args.iters)
    obj = fit.params.to_json(fit.final_loss)
    if args.true:
        truth = load_params(args.true)
        obj["kl_to_truth"] = exact_kl(truth.table(), fit.params)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        save_params(fit.params, d / "params.json", fit.final_loss)
    sys.stdout.write(_dump(obj))
    return 0


def cmd_verify(args) -> int:
    overrides = {"seed": args.seed, "n": args.n, "count": args.count,
                 "tolerance": args.tolerance}
    if args.config:
        cfg = load_config(args.config, **overrides)
        if args.suite and args.suite != cfg.suite:
            raise ConfigError(f"suite: command line says {args.suite!r}, config says {cfg.suite!r}")
    else:
        if not args.suite:
            raise ConfigError("suite: required")
        obj = {"suite": args.suite, **{k: v for k, v in overrides.items() if v is not None}}
        cfg = parse_config(obj)
    report = run_suite(cfg)
    out = args.out or cfg.out
    if out:
        report.write(out)
    else:
        sys.stdout.write(report.dumps())
    status = "report-only" if report.report_only else ("pass" if report.passed else "FAIL")
    print(f"{cfg.suite}: {status} ({len(report.records)} records, {report.failures} failures)",
          file=sys.stderr)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glauberlab", description=__doc__)
    p.add_argument("--version", action="version", version=f"glauberlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def instance_args(q):
        g = q.add_mutually_exclusive_group()
        g.add_argument("--hamiltonian", help="Hamiltonian JSON file")
        g.add_argument("--pspin", help="p-spin spec JSON file")
        q.add_argument("--n", type=_positive_int, help="sites for a zero or random Hamiltonian")
        q.add_argument("--degree", type=_positive_int, help="random Hamiltonian of this degree")
        q.add_argument("--scale", type=_positive_float, default=1.0)

    a = sub.add_parser("analyze", help="gap, eta, beta, FLC falsification and mixing bounds")
    instance_args(a)
    a.add_argument("--seed", type=_seed, default=0)
    a.add_argument("--alpha", type=_positive_float, default=1.0)
    a.add_argument("--eps", type=_positive_float, default=0.25)
    a.add_argument("--mlsi", action="store_true", help="also search for an MLSI upper bound")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sample", help="run Glauber chains")
    instance_args(s)
    s.add_argument("--chains", type=_positive_int, default=1)
    s.add_argument("--steps", type=_nonneg_int, required=True)
    s.add_argument("--burn-in", type=_nonneg_int)
    s.add_argument("--thin", type=_positive_int, default=1)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--format", choices=("csv", "hex"), default="csv")
    s.add_argument("--exact", action="store_true", help="report TV distance to the exact table")
    s.add_argument("--out", help="sample file")
    s.set_defaults(func=cmd_sample)

    g = sub.add_parser("pspin-gen", help="write a mixed p-spin instance")
    g.add_argument("--N", type=_positive_int, required=True)
    g.add_argument("--beta", type=_beta_pair, action="append", default=[],
                   help="p=beta, repeatable")
    g.add_argument("--field", type=float, nargs="+")
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--spec-only", action="store_true")
    g.add_argument("--out")
    g.set_defaults(func=cmd_pspin_gen)

    le = sub.add_parser("learn", help="pseudolikelihood fit or learning curve")
    le.add_argument("--samples")
    le.add_argument("--R", type=_positive_float)
    le.add_argument("--iters", type=_positive_int, default=1000)
    le.add_argument("--true", help="true parameter JSON for exact KL")
    le.add_argument("--curve", action="store_true", help="SK learning curve")
    le.add_argument("--n", type=_positive_int)
    le.add_argument("--sk-beta", type=_positive_float, default=0.2)
    le.add_argument("--m", type=_positive_int, nargs="+", default=[1000, 10000, 100000])
    le.add_argument("--seeds", type=_positive_int, default=5)
    le.add_argument("--seed", type=_seed, default=0)
    le.add_argument("--out")
    le.set_defaults(func=cmd_learn)

    v = sub.add_parser("verify", help="run a named verification suite")
    v.add_argument("suite", nargs="?", choices=sorted(SUITES))
    v.add_argument("--config")
    v.add_argument("--seed", type=_seed)
    v.add_argument("--n", type=_positive_int)
    v.add_argument("--count", type=_positive_int)
    v.add_argument("--tolerance", type=float)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "curve", False) and args.samples:
        parser.error("--curve and --samples are incompatible")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"glauberlab: config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as e:
        print(f"glauberlab: error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
