"""Command line entry point.

Subcommands:
    minimize  solve a chain instance and run the per-claim assertion suite
    duel      run a sweep config against the resisting oracle
    fit       fit the query-complexity exponent from sweep output
    verify    finite-difference and curvature certificates for an instance
    solve     run an upper-bound solver on an instance, with a phase log

Exit codes: 0 success, 1 a check failed (or insufficient data), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .adversary import lower_bound
from .errors import ChainOptError, InsufficientData
from .minimizer import solution_to_json, solve_chain_minimizer
from .model import (HIGH_DIM, LOW_DIM, RotationBasis, eval_chain,
                    eval_rotated, instance_from_json, validate_params)
from .solvers import SolverConfig, combined_solver, restarted_atd
from .verify import (fd_derivative_check, lemma_suite, lipschitz_estimate,
                     measure_derivative_bound, strong_convexity_check)

_REGIMES = {"high": HIGH_DIM, "low": LOW_DIM}


def _load_instance(path, regime_flag):
    with open(path) as fh:
        params, basis = instance_from_json(fh.read())
    if regime_flag and _REGIMES[regime_flag] != params.regime:
        params = type(params)(k=params.k, lam=params.lam, mu_k=params.mu_k,
                              gamma=params.gamma, chain_len=params.chain_len,
                              dim=params.dim, regime=_REGIMES[regime_flag])
    if basis is None or not basis.is_complete:
        basis = RotationBasis.identity(params.chain_len, params.dim)
    return params, basis


def _emit(obj, out):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _reports_payload(reports):
    return [{"check": r.check_name, "passed": r.passed,
             "worst_violation": r.worst_violation, "samples": r.samples,
             "details": r.details} for r in reports]


def cmd_minimize(args):
    params, basis = _load_instance(args.instance, args.regime)
    sol = solve_chain_minimizer(params)
    reports = lemma_suite(params, sol, basis)
    payload = {"solution": json.loads(solution_to_json(sol)),
               "checks": _reports_payload(reports)}
    _emit(payload, args.out)
    return 0 if all(r.passed for r in reports) else 1


def cmd_duel(args):
    with open(args.config) as fh:
        config = harness.ExperimentConfig.from_json(fh.read())
    if args.max_iters:
        config.max_iters = args.max_iters
    out_dir = args.out or "."
    records = harness.run_sweep(config, out_dir)
    print(f"{len(records)} runs -> {os.path.join(out_dir, 'summary.csv')}")
    return 0


def _load_fit_records(path):
    rows = []
    if path.endswith(".csv"):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                row = dict(zip(header, parts))
                for key in ("D", "lambda", "mu_k", "eps", "lower_bound"):
                    if row.get(key):
                        row[key] = float(row[key])
                row["first_success_T"] = (int(row["first_success_T"])
                                          if row.get("first_success_T") else None)
                rows.append(row)
    else:
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
    return rows


def cmd_fit(args):
    rows = _load_fit_records(args.records)
    if args.algo:
        rows = [r for r in rows if r.get("algorithm") == args.algo]
    try:
        slope, intercept, r2 = harness.fit_exponent(rows, vary=args.vary)
    except InsufficientData as exc:
        print(f"InsufficientData: {exc}", file=sys.stderr)
        return 1
    _emit({"vary": args.vary, "slope": slope, "intercept": intercept,
           "r_squared": r2, "n": len(rows)}, args.out)
    return 0


def cmd_verify(args):
    params, basis = _load_instance(args.instance, args.regime)
    rng = np.random.default_rng(args.seed)
    reports = []
    violations = validate_params(params, params.regime, precision=args.precision)
    x = rng.standard_normal(params.dim)
    for order in range(1, params.k + 1):
        reports.append(fd_derivative_check(params, basis, x, order, rng))
    reports.append(strong_convexity_check(params, basis, rng,
                                          n_pairs=args.pairs))
    reports.append(lipschitz_estimate(params, basis, rng,
                                      n_pairs=max(args.pairs // 5, 20)))
    payload = {"assumption_violations": [str(v) for v in violations],
               "checks": _reports_payload(reports)}
    _emit(payload, args.out)
    return 0 if all(r.passed for r in reports) else 1


def cmd_solve(args):
    params, basis = _load_instance(args.instance, args.regime)
    sol = solve_chain_minimizer(params)
    f_star = params.scale * eval_chain(params, sol.x_star)
    x_star = basis.vectors.T @ sol.x_star
    M = measure_derivative_bound(params, sol, seed=args.seed)
    D = max(float(np.linalg.norm(x_star)) * 1.001, 2.0 + 1e-9)

    counter = {"queries": 0}

    def oracle(x, order=None):
        counter["queries"] += 1
        return eval_rotated(params, basis, x, order if order else params.k)

    x0 = np.zeros(params.dim)
    cfg = SolverConfig(k=params.k, mu_k=params.mu_k, lam=params.lam, D=D, M=M,
                       eps=args.eps, f_star=f_star, x_star=x_star)
    if args.algo == "combined":
        res = combined_solver(oracle, x0, cfg, strict=False)
        log, n_outer = res.phase_log, res.n_outer
        final_gap = log[-1].get("gap") if log else 0.0
    elif args.algo == "restarted_atd":
        run = restarted_atd(oracle, x0, cfg, stop_gap=args.eps)
        log = [{"iter": i, "phase": 1, "gap": v - f_star, "grad_norm": g,
                "step_norm": float("nan")}
               for i, (v, g) in enumerate(zip(run.values, run.grad_norms))]
        n_outer, final_gap = len(run.iterates), (run.values[-1] - f_star
                                                 if run.values else 0.0)
    elif args.algo == "gd":
        from .baselines import gradient_descent
        from .errors import QueryBudgetExceeded

        budget = args.max_iters or 4096
        log = []

        def counting(x, order=None):
            if counter["queries"] >= budget:
                raise QueryBudgetExceeded(str(budget))
            b = oracle(x, order)
            log.append({"iter": counter["queries"], "phase": 1,
                        "gap": b.value - f_star,
                        "grad_norm": float(np.linalg.norm(b.gradient)),
                        "step_norm": float("nan")})
            return b

        try:
            gradient_descent(counting, params.dim, stop_eps=args.eps,
                             lam=params.lam)
        except QueryBudgetExceeded:
            pass
        n_outer = len(log)
        final_gap = log[-1]["gap"] if log else 0.0
    else:
        raise ChainOptError(f"unknown algorithm {args.algo!r}")

    if args.out:
        with open(args.out, "w") as fh:
            for row in log:
                fh.write(json.dumps(row) + "\n")
    lb = lower_bound(params, D, args.eps, params.regime)
    print(json.dumps({"algo": args.algo, "outer_iterations": n_outer,
                      "oracle_queries": counter["queries"],
                      "final_gap": final_gap, "t_lower": lb.t_lower}))
    return 0 if final_gap <= args.eps else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chainopt",
                                 description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--precision", choices=("f64", "extended"),
                       default="f64")
        p.add_argument("--out", default=None)
        p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
        p.add_argument("--regime", choices=("high", "low"), default=None)

    p = sub.add_parser("minimize", help="solve an instance, assert its claims")
    p.add_argument("instance")
    common(p)
    p.set_defaults(fn=cmd_minimize)

    p = sub.add_parser("duel", help="run a sweep against the resisting oracle")
    p.add_argument("config")
    common(p)
    p.set_defaults(fn=cmd_duel)

    p = sub.add_parser("fit", help="fit the query-complexity exponent")
    p.add_argument("records")
    p.add_argument("--vary", choices=("D", "mu_over_lambda"), default="D")
    p.add_argument("--algo", default=None)
    common(p)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("verify", help="numerical certificates for an instance")
    p.add_argument("instance")
    p.add_argument("--pairs", type=int, default=200)
    common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("solve", help="run an upper-bound solver on an instance")
    p.add_argument("instance")
    p.add_argument("--algo", choices=("combined", "restarted_atd", "gd"),
                   default="combined")
    p.add_argument("--eps", type=float, default=1e-9)
    common(p)
    p.set_defaults(fn=cmd_solve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ChainOptError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
