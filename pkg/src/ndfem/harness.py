"""Convergence studies: error norms, EOC, study drivers, CSV/JSON output.

Errors of a computed triple (u_h, g_h, H_h) against the exact solution:

    err_L2_u   |u_h - u|_L2
    err_H1_u   full H1 norm of u_h - u
    err_H1_g   full H1 norm of g_h - grad u
    err_L2_H   L2 Frobenius norm of H_h - D^2 u
    err_Y^2  = err_H1_u^2 + err_H1_g^2 + err_L2_H^2

plus the boundary L2 norm of the tangential trace of g_h (monitored
because the discrete field space does not enforce it).

A uniform study solves on structured meshes n = n0 * 2^i; an adaptive
study wraps the adaptive loop.  Both produce a ConvergenceRecord whose
rows follow one fixed column schema, written as CSV or a JSON mirror.
EOC between consecutive levels uses h_max for uniform refinement and
ndof^(-1/2) for adaptive runs (the mesh-size proxy of an unstructured
level).
"""

from __future__ import annotations

import json

import numpy as np

from .adapt import adaptive_solve, estimate
from .assembly import (
    _edge_trace_data,
    assemble,
    element_geometry,
    residual_order,
)
from .problem import ProblemSpec, get_problem
from .solver import SolverError, solve
from .spaces import build_system, make_quadrature, matrix_basis, scalar_basis, scalar_basis_grad

__all__ = [
    "CSV_COLUMNS",
    "ConvergenceRecord",
    "compute_errors",
    "eoc",
    "run_uniform_study",
    "run_adaptive_study",
    "write_csv",
    "write_json",
]

CSV_COLUMNS = [
    "problem",
    "k",
    "theta",
    "mode",
    "level",
    "ndof",
    "h_max",
    "err_L2_u",
    "err_H1_u",
    "err_H1_g",
    "err_L2_H",
    "err_Y",
    "eta_total",
    "tang_trace",
    "eoc_H1_u",
    "eoc_H1_g",
    "eoc_L2_H",
    "eoc_Y",
]

_EOC_SOURCES = {
    "eoc_H1_u": "err_H1_u",
    "eoc_H1_g": "err_H1_g",
    "eoc_L2_H": "err_L2_H",
    "eoc_Y": "err_Y",
}

_CHUNK = 2048


def compute_errors(system, spec, solution, order=None):
    """Error norms of a coefficient vector against the exact triple.

    Returns a dict with err_L2_u, err_H1_u, err_H1_g, err_L2_H, err_Y
    and tang_trace.  Quadrature order defaults to 2k + 4.
    """
    if spec.exact is None:
        raise ValueError(f"problem {spec.name!r} has no exact solution")
    vec = np.asarray(solution, dtype=float)
    if vec.shape != (system.n_dofs,):
        raise ValueError(
            f"coefficient vector has shape {vec.shape}, expected ({system.n_dofs},)"
        )
    k = system.k
    order = residual_order(k) if order is None else int(order)
    quad = make_quadrature(order)
    xy = quad.xy
    w = quad.weights
    N = scalar_basis(k, xy)
    dN = scalar_basis_grad(k, xy)
    NH = matrix_basis(k, xy)

    mesh = system.mesh
    v0, jac, inv, det = element_geometry(mesh)
    area = 0.5 * det
    nt = mesh.num_triangles

    u, g, H = system.split(vec)
    gc = g.reshape(-1, 2)
    Hc = H.reshape(nt, system.nhloc, 3)

    l2u = semiu = l2g = semig = l2h = 0.0
    for start in range(0, nt, _CHUNK):
        sl = slice(start, min(start + _CHUNK, nt))
        dNx = np.einsum("qnj,ejx->eqnx", dN, inv[sl])
        pts = v0[sl][:, None, :] + np.einsum("eij,qj->eqi", jac[sl], xy)
        E, nq = pts.shape[:2]
        x = pts[..., 0].ravel()
        y = pts[..., 1].ravel()
        ue = np.asarray(spec.exact.u(x, y), dtype=float).reshape(E, nq)
        ge = np.asarray(spec.exact.grad_u(x, y), dtype=float).reshape(E, nq, 2)
        He = np.asarray(spec.exact.hess_u(x, y), dtype=float).reshape(E, nq, 2, 2)

        nodes = system.tri_nodes[sl]
        cu = u[nodes]
        cg = gc[nodes]
        uh = np.einsum("qn,en->eq", N, cu)
        duh = np.einsum("eqnx,en->eqx", dNx, cu)
        gh = np.einsum("qn,eni->eqi", N, cg)
        dgh = np.einsum("eqnx,eni->eqix", dNx, cg)
        comp = np.einsum("qp,epm->eqm", NH, Hc[sl])
        Hh = np.empty((E, nq, 2, 2))
        Hh[..., 0, 0] = comp[..., 0]
        Hh[..., 0, 1] = Hh[..., 1, 0] = comp[..., 1]
        Hh[..., 1, 1] = comp[..., 2]

        a = area[sl]
        l2u += float(np.einsum("q,e,eq->", w, a, (uh - ue) ** 2))
        semiu += float(np.einsum("q,e,eq->", w, a, ((duh - ge) ** 2).sum(-1)))
        l2g += float(np.einsum("q,e,eq->", w, a, ((gh - ge) ** 2).sum(-1)))
        semig += float(
            np.einsum("q,e,eq->", w, a, ((dgh - He) ** 2).sum((-2, -1)))
        )
        l2h += float(np.einsum("q,e,eq->", w, a, ((Hh - He) ** 2).sum((-2, -1))))

    err_H1_u_sq = l2u + semiu
    err_H1_g_sq = l2g + semig
    out = {
        "err_L2_u": float(np.sqrt(l2u)),
        "err_H1_u": float(np.sqrt(err_H1_u_sq)),
        "err_H1_g": float(np.sqrt(err_H1_g_sq)),
        "err_L2_H": float(np.sqrt(l2h)),
        "err_Y": float(np.sqrt(err_H1_u_sq + err_H1_g_sq + l2h)),
        "tang_trace": _tangential_trace_norm(system, gc),
    }
    return out


def _tangential_trace_norm(system, g_by_node):
    """Boundary L2 norm of the tangential component of the g field."""
    mesh = system.mesh
    edges = np.asarray(mesh.boundary_edges, dtype=int).reshape(-1, 2)
    if len(edges) == 0:
        return 0.0
    nodes, lengths, _, Phi, wt = _edge_trace_data(system, system.k + 2)
    tang = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    tang = tang / lengths[:, None]
    vals = np.einsum("qi,eic->eqc", Phi, g_by_node[nodes])
    dot = np.einsum("eqc,ec->eq", vals, tang)
    return float(np.sqrt(np.einsum("e,q,eq->", lengths, wt, dot**2)))


def eoc(errors, h):
    """Experimental orders of convergence between consecutive levels.

    ``log(e_{i+1} / e_i) / log(h_{i+1} / h_i)``; returns a length
    ``len(errors) - 1`` array.
    """
    e = np.asarray(errors, dtype=float)
    hh = np.asarray(h, dtype=float)
    if e.shape != hh.shape or e.ndim != 1 or len(e) < 2:
        raise ValueError("need equally long error and mesh-size lists (>= 2)")
    if np.any(e <= 0.0) or np.any(hh <= 0.0):
        raise ValueError("EOC needs strictly positive errors and mesh sizes")
    return np.log(e[1:] / e[:-1]) / np.log(hh[1:] / hh[:-1])


class ConvergenceRecord:
    """Per-level study results with a fixed reporting schema."""

    def __init__(self, problem, k, theta, mode, rows):
        self.problem = problem
        self.k = int(k)
        self.theta = float(theta)
        self.mode = mode
        self.rows = rows

    def column(self, name):
        return [row.get(name) for row in self.rows]

    def to_rows(self):
        """Rows as dicts with every CSV column present (None = empty)."""
        out = []
        for row in self.rows:
            full = {
                "problem": self.problem,
                "k": self.k,
                "theta": self.theta,
                "mode": self.mode,
            }
            for name in CSV_COLUMNS[4:]:
                full[name] = row.get(name)
            out.append(full)
        return out


def _append_eoc(rows, h):
    for key, src in _EOC_SOURCES.items():
        for i, row in enumerate(rows):
            if i == 0:
                row[key] = None
                continue
            e0, e1 = rows[i - 1].get(src), row.get(src)
            if not e0 or not e1 or e0 <= 0 or e1 <= 0:
                row[key] = None
                continue
            row[key] = float(np.log(e1 / e0) / np.log(h[i] / h[i - 1]))


def _resolve(problem, theta, lam):
    if isinstance(problem, ProblemSpec):
        return problem
    return get_problem(problem, theta=theta, lam=lam)


def _study_bc(spec):
    return "strong-zero-u" if spec.zero_bc else "penalty-u"


def default_levels(k):
    """Level counts used in the reported experiments: n in {4,...,32}
    for k = 1 and {4,...,16} for k = 2 (with n0 = 4)."""
    return 4 if int(k) == 1 else 3


def run_uniform_study(problem, k, theta=0.5, levels=None, n0=4, lam=None,
                      form="full", method="auto"):
    """Solve on meshes n = n0 * 2^i, i < levels, and tabulate errors."""
    spec = _resolve(problem, theta, lam)
    levels = default_levels(k) if levels is None else int(levels)
    if levels < 2:
        raise ValueError("a study needs at least 2 levels")
    bc = _study_bc(spec)
    # nonzero boundary data: edge-scaled penalty (plain weight 1 stalls
    # the g/H convergence, see the assembly module docstring)
    pen = {"penalty_scale": "edge-inverse"} if bc == "penalty-u" else {}
    rows = []
    for i in range(levels):
        n = n0 * 2**i
        mesh = spec.build_mesh(n)
        system = build_system(mesh, k, bc_mode=bc)
        asm = assemble(system, spec, form=form, **pen)
        solution, report = solve(asm.matrix, asm.rhs, method=method)
        ind = estimate(system, spec, solution, form=form)
        row = {
            "level": i,
            "ndof": system.total_ndof,
            "h_max": float(mesh.edge_lengths().max()),
            "eta_total": ind.eta_total,
            "solver": report.to_dict(),
        }
        row.update(compute_errors(system, spec, solution))
        rows.append(row)
    _append_eoc(rows, [row["h_max"] for row in rows])
    return ConvergenceRecord(spec.name, k, spec.theta, "uniform", rows)


def run_adaptive_study(problem, k, theta=0.5, beta=0.3, tol=1e-6, maxiter=12,
                       n0=4, lam=None, form="full", method="auto"):
    """Adaptive loop with per-level error records.

    Returns (ConvergenceRecord, AdaptState).  EOC uses ndof^(-1/2) as
    the mesh-size proxy.
    """
    spec = _resolve(problem, theta, lam)
    error_fn = compute_errors if spec.exact is not None else None
    state = adaptive_solve(
        spec, k, beta, tol, maxiter, n0=n0, form=form, method=method,
        error_fn=error_fn,
    )
    if state.stop_reason == "solver-error":
        raise SolverError(state.error)
    rows = []
    for rec in state.records:
        row = dict(rec)
        row.pop("eta_total_sq", None)
        row.pop("marked_count", None)
        rows.append(row)
    _append_eoc(rows, [row["ndof"] ** -0.5 for row in rows])
    return ConvergenceRecord(spec.name, k, spec.theta, "adaptive", rows), state


def _format_cell(name, value):
    if value is None:
        return ""
    if name in ("problem", "mode"):
        return str(value)
    if name in ("k", "level", "ndof"):
        return str(int(value))
    if name == "theta":
        return repr(float(value))
    return format(float(value), ".16e")


def write_csv(record, path):
    """One row per level in the fixed column schema."""
    lines = [",".join(CSV_COLUMNS)]
    for row in record.to_rows():
        lines.append(",".join(_format_cell(c, row.get(c)) for c in CSV_COLUMNS))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(record, path):
    """JSON mirror of the CSV: a list of row objects, same fields."""
    rows = []
    for row in record.to_rows():
        rows.append({c: row.get(c) for c in CSV_COLUMNS})
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
