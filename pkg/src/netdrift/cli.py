"""Command-line front end: run suites, audit records, evaluate bounds.

Exit codes: 0 on success (including in-regime bounds reported as out of
regime, which is information, not failure), 2 when an audit finds a
violation or an input cannot be processed.
"""

from __future__ import annotations

import argparse
import sys

from .analysis import (
    RegimeError,
    audit_recursions,
    dgt_contraction,
    diffusion_contraction,
    steady_state_bound,
)
from .experiment import audit_record_file, load_config, run_suite
from .problems import DriftProfile


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="run a configured experiment suite")
    p.add_argument("--config", required=True, help="path to a key = value config file")


def _add_audit(sub) -> None:
    p = sub.add_parser("audit", help="replay per-step inequalities on a stored record")
    p.add_argument("--record", required=True, help="path to a trajectory CSV")
    p.add_argument("--dx", type=float, default=None, help="override per-step optimum drift")
    p.add_argument("--D", type=float, default=None, help="override gradient dispersion bound")
    p.add_argument("--dg", type=float, default=None, help="override average gradient drift")


def _add_bounds(sub) -> None:
    p = sub.add_parser("bounds", help="evaluate steady-state bounds for given constants")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--L", type=float, required=True, dest="lipschitz")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dx", type=float, required=True, help="per-step optimum drift")
    p.add_argument("--D", type=float, required=True, help="gradient dispersion bound")
    p.add_argument("--dg", type=float, required=True, help="average gradient drift")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_suite(config)
    widths = (16, 14, 10, 6, 20, 20)
    header = ("algorithm", "alpha", "beta", "n", "steady_state_error", "theory_bound")
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in result.rows:
        bound = "-" if row.theory_bound is None else f"{row.theory_bound:.6e}"
        cells = (
            row.algorithm,
            f"{row.alpha:.6e}",
            f"{row.beta:.4f}",
            str(row.n),
            f"{row.steady_state_error:.6e}",
            bound,
        )
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    print(f"summary written to {result.directory / 'summary.csv'}")
    return 0


def _cmd_audit(args) -> int:
    record, drift = audit_record_file(args.record)
    if any(v is not None for v in (args.dx, args.D, args.dg)):
        drift = DriftProfile(
            delta_x=drift.delta_x if args.dx is None else args.dx,
            grad_bound=drift.grad_bound if args.D is None else args.D,
            grad_drift=drift.grad_drift if args.dg is None else args.dg,
        )
    try:
        report = audit_recursions(record, drift, strict=False)
    except RegimeError as exc:
        print(f"audit not applicable to this record: {exc}", file=sys.stderr)
        return 2
    print(report.to_text())
    if report.clean():
        return 0
    worst = max(
        (e for e in report.entries if e.enforced and e.max_violation > 0),
        key=lambda e: e.max_violation,
    )
    print(
        f"audit violated: {worst.name} at iteration {worst.worst_iteration}",
        file=sys.stderr,
    )
    return 2


def _cmd_bounds(args) -> int:
    drift = DriftProfile(delta_x=args.dx, grad_bound=args.D, grad_drift=args.dg)
    contractions = {"diffusion": diffusion_contraction, "dgt": dgt_contraction}
    drift_args = {
        "diffusion": {"delta_x": args.dx, "grad_bound": args.D},
        "dgt": {"delta_x": args.dx, "grad_drift": args.dg},
    }
    for algorithm in ("diffusion", "dgt"):
        try:
            model = contractions[algorithm](
                args.alpha, args.mu, args.lipschitz, args.beta, **drift_args[algorithm]
            )
            rho_text = f"rho(A) = {model.rho:.6f}"
        except RegimeError as exc:
            print(f"{algorithm}: out of regime for the contraction model ({exc})")
            continue
        try:
            bound = steady_state_bound(
                algorithm, args.alpha, args.mu, args.lipschitz, args.beta, drift
            )
            print(f"{algorithm}: steady-state bound = {bound:.6g}  {rho_text}")
        except RegimeError as exc:
            print(f"{algorithm}: bound out of regime ({exc})  {rho_text}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="netdrift", description="drifting-optimum experiments over networks"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_audit(sub)
    _add_bounds(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "audit":
            return _cmd_audit(args)
        return _cmd_bounds(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
