"""Command-line interface: ``regionalized {validate,solve,oracle-compare}``.

Exit codes: 0 success, 1 invalid problem (or solver/oracle failure),
2 unreadable problem file, 3 no certified convergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from regionalized.channels import channel_solve
from regionalized.errors import ParseError, RegionalizedError, SizeError
from regionalized.gbp import gbp_solve, region_free_energy
from regionalized.loss import Quadratic, regionalized_value
from regionalized.oracle import brute_force_min, exact_gibbs, exact_marginals, kkt_solve_quadratic
from regionalized.problem import Problem, load_problem
from regionalized.solver import SolverConfig, SolveReport, solve

log = logging.getLogger("regionalized")

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_NOT_CONVERGED = 0, 1, 2, 3
TRACE_COLUMNS = ("iter", "msg_delta", "constraint_norm", "stationarity", "f_R")
GAP_TOL = {"quadratic": 1e-7, "free_energy": 1e-6}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def atomic_write(path: str, text: str):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_solver(prob: Problem, cfg: SolverConfig) -> SolveReport:
    if cfg.method == "gbp":
        return gbp_solve(prob.regions, cfg)
    if cfg.method == "channel":
        return channel_solve(prob.network, prob.hamiltonians, cfg)
    return solve(prob.cofunctor, prob.losses, cfg=cfg)


def result_document(prob: Problem, cfg: SolverConfig, rep: SolveReport) -> dict:
    names = prob.element_names
    x = rep.x_star
    try:
        value = regionalized_value(prob.losses, prob.poset, x)
    except RegionalizedError:
        value = float("nan")
    return {
        "format_version": 1,
        "problem_sha256": prob.sha256,
        "method": rep.method,
        "solver": dataclasses.asdict(cfg),
        "converged": bool(rep.converged),
        "iterations": rep.iterations,
        "residuals": {
            "message_delta": _num(rep.message_delta),
            "constraint_norm": _num(rep.constraint_norm),
            "stationarity": _num(rep.stationarity),
        },
        "solution": {n: [float(v) for v in xa] for n, xa in zip(names, x)},
        "f_R": _num(value),
        "trace_columns": list(TRACE_COLUMNS),
        "trace": [[r.iteration, _num(r.message_delta), _num(r.constraint_norm), _num(r.stationarity), _num(r.f_R)] for r in rep.trace],
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def trace_csv(rep: SolveReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in rep.trace:
        w.writerow([r.iteration, repr(r.message_delta), repr(r.constraint_norm), repr(r.stationarity), repr(r.f_R)])
    return buf.getvalue()


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _config(prob: Problem, args) -> SolverConfig:
    over = {
        k: v
        for k, v in {
            "method": args.method,
            "max_iters": args.max_iters,
            "tol_message": args.tol_message,
            "tol_residual": args.tol_residual,
            "damping": args.damping,
            "seed": args.seed,
        }.items()
        if v is not None
    }
    return dataclasses.replace(prob.solver, **over)


def _check_method(prob: Problem, cfg: SolverConfig):
    if cfg.method == "gbp" and prob.regions is None:
        raise ValueError("method 'gbp' needs a marginalization problem")
    if cfg.method == "channel" and prob.network is None:
        raise ValueError("method 'channel' needs a kernel network problem")


# -- commands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    prob = load_problem(args.problem)
    f = prob.cofunctor
    print(f"ok: {args.problem}")
    print(f"  kind: {prob.kind}, elements: {len(prob.poset)}, strict pairs: {len(f.pairs)}, total dim: {f.total_dim}")
    if prob.network is not None:
        print(f"  strictly positive kernels: {prob.network.strictly_positive}")
    return EXIT_OK


def cmd_solve(args) -> int:
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    _check_method(prob, cfg)
    rep = run_solver(prob, cfg)
    first = next((r.iteration for r in rep.trace if r.constraint_norm <= cfg.tol_residual), None)
    if first is not None:
        log.info("constraint residual below %g after %d step(s)", cfg.tol_residual, first)
    log.info("%s: converged=%s iterations=%d", cfg.method, rep.converged, rep.iterations)
    _emit(result_document(prob, cfg, rep), args.out)
    if args.trace:
        atomic_write(args.trace, trace_csv(rep))
    if not rep.converged:
        print(
            f"not converged after {rep.iterations} iterations "
            f"(message delta {rep.message_delta:.3g}, constraint {rep.constraint_norm:.3g}, "
            f"stationarity {rep.stationarity:.3g})",
            file=sys.stderr,
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def oracle_solution(prob: Problem, cfg: SolverConfig):
    """(name of oracle, solution blocks, loss value) for the problem."""
    L = prob.losses
    normalized = cfg.method in ("gbp", "channel")
    if isinstance(L, Quadratic):
        x, _ = kkt_solve_quadratic(prob.cofunctor, L)
        return "kkt", x, regionalized_value(L, prob.poset, x)
    rp = prob.regions
    if rp is not None and normalized:
        everything = tuple(sorted(rp.variables))
        if everything in rp.regions:
            top = rp.regions.index(everything)
            q = exact_marginals(exact_gibbs(rp.hamiltonians[top]), rp)
            return "enumeration", q, region_free_energy(rp, q)
    res = brute_force_min(prob.cofunctor, L, simplex=normalized, seed=cfg.seed)
    return "projected_gradient", res.x, res.value


def cmd_oracle_compare(args) -> int:
    prob = load_problem(args.problem)
    cfg = _config(prob, args)
    _check_method(prob, cfg)
    oracle, x_ref, v_ref = oracle_solution(prob, cfg)
    rep = run_solver(prob, cfg)
    gaps = {n: float(np.max(np.abs(a - b), initial=0.0)) for n, a, b in zip(prob.element_names, rep.x_star, x_ref)}
    value = regionalized_value(prob.losses, prob.poset, rep.x_star)
    tol = GAP_TOL["quadratic" if isinstance(prob.losses, Quadratic) else "free_energy"]
    max_gap = max(gaps.values(), default=0.0)
    doc = {
        "problem_sha256": prob.sha256,
        "method": cfg.method,
        "oracle": oracle,
        "converged": bool(rep.converged),
        "element_gaps": gaps,
        "max_gap": max_gap,
        "value_gap": abs(value - v_ref),
        "tolerance": tol,
        "within_tolerance": bool(max_gap <= tol),
    }
    _emit(doc, args.out)
    if not rep.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if max_gap <= tol else EXIT_INVALID


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regionalized", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check poset axioms, functoriality and kernels")
    p.add_argument("problem")
    p.set_defaults(func=cmd_validate)

    for name, func, help_ in (
        ("solve", cmd_solve, "run a message-passing solver"),
        ("oracle-compare", cmd_oracle_compare, "compare the solver against a brute-force oracle"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("problem")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--method", choices=["generic", "newton", "gbp", "channel"])
        p.add_argument("--max-iters", type=int)
        p.add_argument("--tol-message", type=float)
        p.add_argument("--tol-residual", type=float)
        p.add_argument("--damping", type=float)
        p.add_argument("--seed", type=int)
        if name == "solve":
            p.add_argument("--trace", help="write per-iteration CSV here")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SizeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RegionalizedError, ValueError, ArithmeticError) as exc:
        print(f"invalid: {type(exc).__name__}: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", ()):
            print(f"  - {v}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
