"""Command line front end.

Three subcommands:

    check-cordes   sample the Cordes condition of a registry problem
    solve          one discrete solve, with optional mesh/system dumps
    study          uniform or adaptive convergence study, CSV/JSON out

Exit codes: 0 on success (condition holds), 1 when the checked condition
fails or the solver breaks down, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import scipy.io
import scipy.sparse as sp

from .assembly import assemble, energy_value
from .harness import (
    compute_errors,
    run_adaptive_study,
    run_uniform_study,
    write_csv,
    write_json,
)
from .mesh import write_triangle_files
from .problem import (
    PROBLEM_NAMES,
    check_cordes,
    check_ellipticity,
    default_sample_points,
    get_problem,
)
from .solver import SolverError, solve
from .spaces import build_system

__all__ = ["RunConfig", "main"]


@dataclass
class RunConfig:
    """Validated invocation parameters shared by the subcommands."""

    subcommand: str
    problem: str
    k: int = 1
    theta: float = 0.5
    lam: float | None = None
    mode: str = "uniform"
    beta: float = 0.3
    tol: float = 1e-6
    maxiter: int = 12
    levels: int | None = None
    n: int = 8
    n0: int = 4
    form: str = "full"
    bc: str | None = None
    tangential: str = "relaxed"
    seed: int = 42
    outputs: dict = field(default_factory=dict)


def _add_common(p):
    p.add_argument("--problem", required=True, choices=PROBLEM_NAMES,
                   help="registry problem name")
    p.add_argument("--theta", type=float, default=0.5,
                   help="gradient/recovered-gradient blend in [0, 1]")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="zeroth-order shift (problem default when omitted)")
    p.add_argument("--seed", type=int, default=42,
                   help="seed for randomized diagnostics (outputs are "
                        "deterministic either way)")
    p.add_argument("--json", metavar="PATH", default=None,
                   help="write a JSON report/record here")


def _add_discretization(p):
    p.add_argument("--k", type=int, choices=(1, 2), default=1,
                   help="polynomial degree of the u and g spaces")
    p.add_argument("--form", choices=("full", "hessianless"), default="full",
                   help="keep the Hessian variable or eliminate it")
    p.add_argument("--bc", choices=("strong", "penalty"), default=None,
                   help="boundary treatment for u (default: strong for "
                        "zero-data problems, penalty otherwise)")
    p.add_argument("--tangential", choices=("relaxed", "strong"),
                   default="relaxed",
                   help="tangential trace of g: monitored or pinned on "
                        "axis-aligned boundary edges")
    p.add_argument("--csv", metavar="PATH", default=None,
                   help="write delimited output here")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ndfem",
        description="least-squares gradient/Hessian-recovery solver for "
                    "nondivergence-form elliptic problems",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    pc = sub.add_parser("check-cordes", help="sample a Cordes condition")
    _add_common(pc)
    pc.add_argument("--epsilon", type=float, default=None,
                    help="condition parameter in (0, 1); defaults to the "
                         "problem's registered value")
    group = pc.add_mutually_exclusive_group()
    group.add_argument("--special", action="store_true",
                       help="force the b = 0, c = 0 condition")
    group.add_argument("--general", action="store_true",
                       help="force the lambda > 0 condition")

    ps = sub.add_parser("solve", help="solve once on a structured mesh")
    _add_common(ps)
    _add_discretization(ps)
    ps.add_argument("--n", type=int, default=8,
                    help="subdivisions per side of the structured mesh")
    ps.add_argument("--mesh-out", metavar="BASE", default=None,
                    help="write BASE.node/BASE.ele mesh files")
    ps.add_argument("--dump-system", metavar="BASE", default=None,
                    help="write BASE.mtx (matrix) and BASE_rhs.mtx")
    ps.add_argument("--method", choices=("auto", "direct-cholesky", "cg-jacobi"),
                    default="auto", help="linear solver")

    pt = sub.add_parser("study", help="run a convergence study")
    _add_common(pt)
    _add_discretization(pt)
    pt.add_argument("--levels", type=int, default=None,
                    help="uniform refinement levels (default 4 for k=1, 3 "
                         "for k=2)")
    pt.add_argument("--n0", type=int, default=4,
                    help="initial subdivisions per side")
    pt.add_argument("--adaptive", action="store_true",
                    help="adaptive loop instead of uniform refinement")
    pt.add_argument("--beta", type=float, default=0.3,
                    help="marked element fraction in (0, 1)")
    pt.add_argument("--tol", type=float, default=1e-6,
                    help="stop when the squared estimator drops below this")
    pt.add_argument("--maxiter", type=int, default=12,
                    help="adaptive level cap")
    return parser


def _validate(parser, args):
    if not 0.0 <= args.theta <= 1.0:
        parser.error(f"--theta must lie in [0, 1], got {args.theta}")
    if args.lam is not None and args.lam < 0.0:
        parser.error(f"--lambda must be nonnegative, got {args.lam}")
    sc = args.subcommand
    if sc == "check-cordes":
        if args.epsilon is not None and not 0.0 < args.epsilon < 1.0:
            parser.error(f"--epsilon must lie in (0, 1), got {args.epsilon}")
    if sc == "solve" and args.n < 1:
        parser.error("--n must be at least 1")
    if sc == "study":
        if args.n0 < 1:
            parser.error("--n0 must be at least 1")
        if args.adaptive:
            if args.levels is not None:
                parser.error("--levels applies to uniform studies; use "
                             "--maxiter for the adaptive loop")
            if not 0.0 < args.beta < 1.0:
                parser.error(f"--beta must lie in (0, 1), got {args.beta}")
            if args.tol <= 0.0:
                parser.error("--tol must be positive")
            if args.maxiter < 1:
                parser.error("--maxiter must be at least 1")
        elif args.levels is not None and args.levels < 2:
            parser.error("--levels must be at least 2")


def _bc_mode(spec, choice):
    if choice is None:
        return "strong-zero-u" if spec.zero_bc else "penalty-u"
    if choice == "penalty":
        return "penalty-u"
    return "strong-zero-u" if spec.zero_bc else "strong-u"


def _tangential_mode(choice):
    return "strong-axis-aligned" if choice == "strong" else "relaxed"


def cmd_check_cordes(args):
    spec = get_problem(args.problem, theta=args.theta, lam=args.lam)
    condition = None
    if args.special:
        condition = "special"
    elif args.general:
        condition = "general"
    epsilon = spec.epsilon if args.epsilon is None else args.epsilon
    samples = default_sample_points(spec.bounds)
    lo, hi = check_ellipticity(spec.coeffs, samples)
    report = check_cordes(spec, epsilon, samples=samples, condition=condition)
    print(f"problem        {spec.name}")
    print(f"condition      {report.condition} (epsilon = {report.epsilon_tested:g})")
    print(f"eigenvalues    [{lo:.6g}, {hi:.6g}] over {report.sample_count} samples")
    point = tuple(round(float(v), 6) for v in report.worst_point)
    print(f"worst ratio    {report.worst_ratio:.6g} at {point}")
    print(f"epsilon_max    {report.epsilon_max_estimate:.6g}")
    print(f"holds          {report.holds}")
    if args.json:
        payload = report.to_dict()
        payload["eigenvalue_range"] = [float(lo), float(hi)]
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0 if report.holds else 1


def cmd_solve(args):
    spec = get_problem(args.problem, theta=args.theta, lam=args.lam)
    bc = _bc_mode(spec, args.bc)
    mesh = spec.build_mesh(args.n)
    system = build_system(mesh, args.k, bc_mode=bc,
                          tangential_mode=_tangential_mode(args.tangential))
    pen = {"penalty_scale": "edge-inverse"} if bc == "penalty-u" else {}
    asm = assemble(system, spec, form=args.form, **pen)
    solution, report = solve(asm.matrix, asm.rhs, method=args.method)
    energy = energy_value(system, spec, solution, form=args.form)

    print(f"problem        {spec.name} (k={args.k}, n={args.n}, theta={spec.theta:g})")
    print(f"bc/tangential  {bc} / {system.tangential_mode}, form {args.form}")
    print(f"ndof           {system.total_ndof}")
    print(f"h_max          {float(mesh.edge_lengths().max()):.6g}")
    print(f"solver         {report.method}: {report.iterations} iterations, "
          f"rel residual {report.rel_residual:.3e}, {report.definiteness_flag}")
    print(f"E_theta        {energy:.6e}")
    errors = None
    if spec.exact is not None:
        errors = compute_errors(system, spec, solution)
        for key in ("err_L2_u", "err_H1_u", "err_H1_g", "err_L2_H", "err_Y",
                    "tang_trace"):
            print(f"{key:<14} {errors[key]:.6e}")
    if asm.quadrature_flag:
        print(f"note           {asm.quadrature_flag}")

    if args.mesh_out:
        write_triangle_files(mesh, args.mesh_out)
    if args.dump_system:
        scipy.io.mmwrite(args.dump_system + ".mtx", asm.matrix)
        scipy.io.mmwrite(args.dump_system + "_rhs.mtx",
                         sp.csr_matrix(asm.rhs[:, None]))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write("index,value\n")
            for i, v in enumerate(solution):
                fh.write(f"{i},{format(float(v), '.16e')}\n")
    if args.json:
        payload = {
            "problem": spec.name,
            "k": args.k,
            "n": args.n,
            "theta": spec.theta,
            "lambda": spec.lam,
            "form": args.form,
            "bc": bc,
            "tangential": system.tangential_mode,
            "ndof": system.total_ndof,
            "h_max": float(mesh.edge_lengths().max()),
            "energy": energy,
            "solver": report.to_dict(),
            "errors": errors,
        }
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_study(args):
    if args.adaptive:
        record, state = run_adaptive_study(
            args.problem, args.k, theta=args.theta, beta=args.beta,
            tol=args.tol, maxiter=args.maxiter, n0=args.n0, lam=args.lam,
            form=args.form,
        )
        print(f"adaptive study: {args.problem}, k={args.k}, beta={args.beta:g}, "
              f"stopped: {state.stop_reason}")
    else:
        record = run_uniform_study(
            args.problem, args.k, theta=args.theta, levels=args.levels,
            n0=args.n0, lam=args.lam, form=args.form,
        )
        print(f"uniform study: {args.problem}, k={args.k}, theta={args.theta:g}")

    head = f"{'level':>5} {'ndof':>8} {'h_max':>10} {'err_Y':>12} {'eta':>12} {'eoc_Y':>7}"
    print(head)
    for row in record.rows:
        eoc = row.get("eoc_Y")
        eoc_s = f"{eoc:7.3f}" if eoc is not None else "      -"
        err = row.get("err_Y")
        err_s = f"{err:12.4e}" if err is not None else "           -"
        print(f"{row['level']:>5} {row['ndof']:>8} {row['h_max']:>10.4e} "
              f"{err_s} {row['eta_total']:>12.4e} {eoc_s}")
    if args.csv:
        write_csv(record, args.csv)
    if args.json:
        write_json(record, args.json)
    return 0


def config_from_args(args):
    """RunConfig snapshot of a parsed invocation (used in reports/tests)."""
    outputs = {
        name: getattr(args, attr)
        for name, attr in (("csv", "csv"), ("json", "json"),
                           ("mesh_out", "mesh_out"),
                           ("dump_system", "dump_system"))
        if getattr(args, attr, None)
    }
    return RunConfig(
        subcommand=args.subcommand,
        problem=args.problem,
        k=getattr(args, "k", 1),
        theta=args.theta,
        lam=args.lam,
        mode="adaptive" if getattr(args, "adaptive", False) else "uniform",
        beta=getattr(args, "beta", 0.3),
        tol=getattr(args, "tol", 1e-6),
        maxiter=getattr(args, "maxiter", 12),
        levels=getattr(args, "levels", None),
        n=getattr(args, "n", 8),
        n0=getattr(args, "n0", 4),
        form=getattr(args, "form", "full"),
        bc=getattr(args, "bc", None),
        tangential=getattr(args, "tangential", "relaxed"),
        seed=args.seed,
        outputs=outputs,
    )


_COMMANDS = {
    "check-cordes": cmd_check_cordes,
    "solve": cmd_solve,
    "study": cmd_study,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return _COMMANDS[args.subcommand](args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
