"""Command-line front end.

Subcommands: ``solve`` (entropy program plus policy synthesis), ``oracle``
(exact combinatorial computations), ``export-dot`` (GraphViz rendering).

Exit codes: 0 solved or valid empty result, 2 input error, 3 solver
non-convergence, 4 verification disagreement (a bug trap), 5 enumeration
cap exceeded. The environment variable SAFERECUR_MAX_ENUM overrides the
brute-force enumeration cap.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import exact_oracle, maxent, policy_synthesis
from .chainfile import ChainDocument, ChainFileError, load_chain_file
from .dot_export import render_chain_dot, render_closed_loop_dot
from .chain_model import closed_loop

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFY_MISMATCH = 4
EXIT_ENUM_CAP = 5


def _sig6(value: float) -> float:
    return float(f"{value:.6g}")


def _fmt_states(states, doc: ChainDocument) -> str:
    return "{" + ", ".join(doc.state_labels[x] for x in sorted(states)) + "}"


def _fmt_classes(classes, doc: ChainDocument) -> str:
    if not classes:
        return "(none)"
    return ", ".join(_fmt_states(cls, doc) for cls in classes)


def _print_matrix(matrix: np.ndarray, doc: ChainDocument) -> None:
    header = "  state | " + "  ".join(f"{a:>6}" for a in doc.action_labels)
    print(header)
    for x in range(matrix.shape[0]):
        cells = "  ".join(f"{matrix[x, u]:6.2f}" for u in range(matrix.shape[1]))
        print(f"  {doc.state_labels[x]:>5} | {cells}")


def _load(args) -> ChainDocument:
    doc = load_chain_file(args.path, allow_unknown=args.allow_unknown)
    for warning in doc.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return doc


def _cmd_solve(args) -> int:
    doc = _load(args)
    problem = maxent.MaxEntProblem(
        chain=doc.chain,
        objective=args.objective,
        extra_constraints=doc.constraints,
    )
    kwargs = dict(tol=args.tol, seed=args.seed)
    try:
        if doc.constraints:
            report = maxent.solve_with_linear_constraints(problem, **kwargs)
        elif args.objective == "marginal":
            report = maxent.solve_maxent_marginal(problem, **kwargs)
        else:
            report = maxent.solve_maxent(problem, **kwargs)
    except maxent.SolverConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    verified = None
    synthesized = None
    if report.status == "optimal":
        synthesized = policy_synthesis.extract_policy(report.joint, doc.chain)
        check = policy_synthesis.verify(
            doc.chain, synthesized, report.support_states
        )
        if not check.ok:
            print(
                "error: internal certificate failed: " + "; ".join(check.violations),
                file=sys.stderr,
            )
            return EXIT_VERIFY_MISMATCH
    if args.verify:
        exact = exact_oracle.mec_decomposition(doc.chain)
        solver_states = frozenset(report.support_states)
        if exact.states != solver_states:
            print(
                "error: solver support "
                f"{_fmt_states(solver_states, doc)} disagrees with the exact"
                f" decomposition {_fmt_states(exact.states, doc)}",
                file=sys.stderr,
            )
            return EXIT_VERIFY_MISMATCH
        verified = True

    if args.json:
        print(json.dumps(_solve_report_dict(doc, args, report, synthesized, verified), indent=2))
        return EXIT_OK

    print(f"status: {report.status}")
    print(f"objective: {report.objective} entropy")
    if report.status == "infeasible":
        print("safe recurrent states: {} (empty; no state can be made both")
        print("  recurrent and safe under the given constraints)")
        return EXIT_OK
    print(f"safe recurrent states: {_fmt_states(report.support_states, doc)}")
    print(f"recurrent classes: {_fmt_classes(report.classes, doc)}")
    print(f"entropy (nats): {report.entropy_value:.6f}")
    print("optimal joint distribution (rows = states, columns = actions):")
    _print_matrix(report.joint.mass, doc)
    print("policy (rows = states, columns = actions):")
    _print_matrix(synthesized.policy.action_probs, doc)
    res = report.residuals
    print(
        "residuals:"
        f" invariance={res.invariance:.2e}"
        f" forbidden={res.forbidden_mass:.2e}"
        f" normalization={res.normalization:.2e}"
        + (
            " extras=" + ",".join(f"{s:+.2e}" for s in res.extras)
            if res.extras
            else ""
        )
    )
    print(
        f"iterations: {report.iterations}"
        f"  certificate gap: {report.certificate_gap:.2e}"
        f"  repaired pairs: {len(report.repair_log)}"
    )
    if verified:
        print("verify: exact decomposition agrees")
    return EXIT_OK


def _solve_report_dict(doc, args, report, synthesized, verified) -> dict:
    out = {
        "format": "saferecur-report-v1",
        "command": "solve",
        "objective": report.objective,
        "status": report.status,
        "states": list(doc.state_labels),
        "actions": list(doc.action_labels),
        "forbidden": [doc.state_labels[x] for x in sorted(doc.chain.forbidden)],
        "safe_recurrent_states": [
            doc.state_labels[x] for x in report.support_states
        ],
        "classes": [
            [doc.state_labels[x] for x in cls] for cls in report.classes
        ],
    }
    if report.status == "optimal":
        out["entropy"] = _sig6(report.entropy_value)
        out["joint"] = [
            [_sig6(v) for v in row] for row in report.joint.mass.tolist()
        ]
        out["policy"] = [
            [_sig6(v) for v in row]
            for row in synthesized.policy.action_probs.tolist()
        ]
        out["support_pairs"] = [
            [doc.state_labels[x], doc.action_labels[u]]
            for x, u in report.support_pairs
        ]
        out["residuals"] = {
            "invariance": _sig6(report.residuals.invariance),
            "forbidden_mass": _sig6(report.residuals.forbidden_mass),
            "normalization": _sig6(report.residuals.normalization),
            "extras": [_sig6(s) for s in report.residuals.extras],
        }
        out["certificate_gap"] = _sig6(report.certificate_gap)
    out["iterations"] = report.iterations
    out["repair_log"] = [
        [doc.state_labels[x], doc.action_labels[u]] for x, u in report.repair_log
    ]
    if verified is not None:
        out["verified"] = verified
    return out


def _cmd_oracle(args) -> int:
    doc = _load(args)
    print(f"method: {args.method}")
    if args.method == "mec":
        result = exact_oracle.mec_decomposition(doc.chain)
        print(f"safe recurrent states: {_fmt_states(result.states, doc)}")
        print(f"recurrent classes: {_fmt_classes(result.classes, doc)}")
        print("admissible actions:")
        for x in sorted(result.actions):
            acts = ", ".join(
                doc.action_labels[u] for u in sorted(result.actions[x])
            )
            print(f"  state {doc.state_labels[x]}: {{{acts}}}")
        return EXIT_OK
    cap = exact_oracle.DEFAULT_ENUMERATION_CAP
    env_cap = os.environ.get("SAFERECUR_MAX_ENUM")
    if env_cap is not None:
        try:
            cap = int(env_cap)
        except ValueError:
            print(f"error: SAFERECUR_MAX_ENUM={env_cap!r} is not an integer", file=sys.stderr)
            return EXIT_INPUT
    try:
        states = exact_oracle.brute_force_safe_recurrent(doc.chain, cap=cap)
    except exact_oracle.EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENUM_CAP
    selections = (2**doc.chain.m - 1) ** doc.chain.n
    print(f"selections examined: {selections}")
    print(f"safe recurrent states: {_fmt_states(states, doc)}")
    return EXIT_OK


def _cmd_export_dot(args) -> int:
    doc = _load(args)
    if not args.policy_from_solve:
        sys.stdout.write(render_chain_dot(doc))
        return EXIT_OK
    problem = maxent.MaxEntProblem(chain=doc.chain, extra_constraints=doc.constraints)
    try:
        if doc.constraints:
            report = maxent.solve_with_linear_constraints(problem)
        else:
            report = maxent.solve_maxent(problem)
    except maxent.SolverConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    if report.status == "infeasible":
        sys.stdout.write(
            render_closed_loop_dot(doc, frozenset(), np.zeros((doc.chain.n, doc.chain.n)))
        )
        return EXIT_OK
    synthesized = policy_synthesis.extract_policy(report.joint, doc.chain)
    loop = closed_loop(doc.chain, synthesized.policy)
    sys.stdout.write(
        render_closed_loop_dot(
            doc, frozenset(report.support_states), loop.transition
        )
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saferecur",
        description=(
            "Maximal safe recurrent sets and max-entropy policy synthesis"
            " for finite controlled Markov chains."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("path", help="chain description file (JSON)")
        p.add_argument(
            "--allow-unknown",
            action="store_true",
            help="downgrade unknown file fields from errors to warnings",
        )

    p_solve = sub.add_parser("solve", help="solve the entropy program and synthesize a policy")
    add_common(p_solve)
    p_solve.add_argument(
        "--objective",
        choices=("joint", "marginal"),
        default="joint",
        help="maximize joint entropy or entropy of the state marginal",
    )
    p_solve.add_argument(
        "--verify",
        action="store_true",
        help="cross-check the support against the exact decomposition",
    )
    p_solve.add_argument("--json", action="store_true", help="machine-readable report")
    p_solve.add_argument(
        "--tol", type=float, default=1e-10, help="dual stationarity tolerance"
    )
    p_solve.add_argument(
        "--seed",
        type=int,
        default=None,
        help="randomize the dual initialization (default: deterministic zeros)",
    )
    p_solve.set_defaults(func=_cmd_solve)

    p_oracle = sub.add_parser("oracle", help="exact combinatorial computation")
    add_common(p_oracle)
    p_oracle.add_argument(
        "--method",
        choices=("brute", "mec"),
        default="mec",
        help="full enumeration of support selections, or polynomial pruning",
    )
    p_oracle.set_defaults(func=_cmd_oracle)

    p_dot = sub.add_parser("export-dot", help="emit the transition structure as DOT")
    add_common(p_dot)
    p_dot.add_argument(
        "--policy-from-solve",
        action="store_true",
        help="solve first and emit only the closed-loop edges on the support",
    )
    p_dot.set_defaults(func=_cmd_export_dot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChainFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except maxent.OracleMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY_MISMATCH


if __name__ == "__main__":
    raise SystemExit(main())
