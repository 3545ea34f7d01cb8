"""Residual error indicators, element-count marking, adaptive loop.

The local indicator on a triangle K is

    eta(K)^2 = int_K |grad u_h - g_h|^2 + |D g_h - H_h|^2 + (rot g_h)^2
               + (L_theta(u_h, g_h, H_h) - f)^2,

i.e. the energy density of the computed triple, so the global square sum
coincides with the interior part of the energy.  Marking takes a fixed
ratio of triangles: the ceil(beta * N) elements with the largest
indicators, ties broken by ascending triangle id.  The adaptive loop is
solve -> estimate -> mark -> bisect until eta^2 <= tol or maxiter levels
are recorded.
"""

from __future__ import annotations

import json

import numpy as np

from .assembly import assemble, element_residuals
from .mesh import bisect_refine
from .solver import SolverError, solve
from .spaces import build_system

__all__ = ["IndicatorField", "AdaptState", "estimate", "mark", "adaptive_solve"]


class IndicatorField:
    """Per-triangle squared indicators and their sum."""

    def __init__(self, eta_sq):
        self.eta_sq = np.asarray(eta_sq, dtype=float)
        self.eta_total_sq = float(self.eta_sq.sum())

    @property
    def eta_total(self):
        return float(np.sqrt(self.eta_total_sq))

    def __len__(self):
        return len(self.eta_sq)


class AdaptState:
    """History of one adaptive run.

    ``records`` holds one dict per level: level, ndof, h_max, eta_total,
    eta_total_sq, marked_count and, when an error callback was given,
    its entries.  ``stop_reason`` is "tol-reached", "maxiter" or
    "solver-error" (partial state; the message is in ``error``).
    """

    def __init__(self):
        self.records = []
        self.meshes = []
        self.systems = []
        self.solutions = []
        self.indicators = []
        self.stop_reason = None
        self.error = None

    @property
    def level(self):
        return len(self.records) - 1


def estimate(system, spec, solution, form="full"):
    """Residual indicators of a computed coefficient vector."""
    return IndicatorField(element_residuals(system, spec, solution, form=form))


def mark(indicators, beta):
    """Ids of the ceil(beta*N) triangles with the largest indicators.

    ``indicators`` is an :class:`IndicatorField` or a plain array of
    squared indicators.  Ties are broken by ascending id, so the result
    is deterministic.  Returns a sorted integer array.
    """
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"marking ratio beta must be in (0, 1), got {beta}")
    eta_sq = np.asarray(getattr(indicators, "eta_sq", indicators), dtype=float)
    count = int(np.ceil(beta * len(eta_sq)))
    order = np.argsort(-eta_sq, kind="stable")
    return np.sort(order[:count])


def _default_bc(spec):
    return "strong-zero-u" if spec.zero_bc else "penalty-u"


def adaptive_solve(spec, k, beta, tol, maxiter, n0=4, form="full",
                   method="auto", error_fn=None, jsonl_path=None):
    """Run the adaptive loop for ``spec`` with degree-k spaces.

    Parameters
    ----------
    spec : ProblemSpec
    k : int
    beta : float in (0, 1)
        Fraction of triangles marked per level.
    tol : float
        The loop stops once eta_total^2 <= tol.
    maxiter : int
        Maximum number of recorded levels.
    n0 : int
        Resolution of the initial structured mesh.
    form : {"full", "hessianless"}
    method : solver method forwarded to :func:`ndfem.solver.solve`
    error_fn : callable(system, spec, solution) -> dict, optional
        Extra per-level entries (true errors, trace norms, ...).
    jsonl_path : str, optional
        Append one JSON line per level.

    Returns
    -------
    AdaptState
        Partial on solver failure (``stop_reason == "solver-error"``).
    """
    if not 0.0 < float(beta) < 1.0:
        raise ValueError(f"marking ratio beta must be in (0, 1), got {beta}")
    if int(maxiter) < 1:
        raise ValueError("maxiter must be at least 1")
    state = AdaptState()
    mesh = spec.build_mesh(n0)
    bc = _default_bc(spec)
    # edge-scaled penalty: the plain weight enforces nonzero boundary
    # data too loosely for the recovered fields (see assembly module)
    pen = {"penalty_scale": "edge-inverse"} if bc == "penalty-u" else {}
    sink = open(jsonl_path, "a") if jsonl_path else None
    try:
        for level in range(int(maxiter)):
            system = build_system(mesh, k, bc_mode=bc)
            asm = assemble(system, spec, form=form, **pen)
            try:
                solution, report = solve(asm.matrix, asm.rhs, method=method)
            except SolverError as exc:
                state.stop_reason = "solver-error"
                state.error = str(exc)
                return state
            ind = estimate(system, spec, solution, form=form)
            record = {
                "level": level,
                "ndof": system.total_ndof,
                "h_max": float(mesh.edge_lengths().max()),
                "eta_total_sq": ind.eta_total_sq,
                "eta_total": ind.eta_total,
                "marked_count": 0,
                "solver": report.to_dict(),
            }
            if error_fn is not None:
                record.update(error_fn(system, spec, solution))
            state.meshes.append(mesh)
            state.systems.append(system)
            state.solutions.append(solution)
            state.indicators.append(ind)
            state.records.append(record)

            done = ind.eta_total_sq <= tol
            last = level + 1 == int(maxiter)
            if not done and not last:
                marked = mark(ind, beta)
                record["marked_count"] = int(len(marked))
                mesh = bisect_refine(mesh, marked)
            if sink is not None:
                sink.write(json.dumps(record) + "\n")
            if done:
                state.stop_reason = "tol-reached"
                return state
            if last:
                state.stop_reason = "maxiter"
                return state
    finally:
        if sink is not None:
            sink.close()
    raise AssertionError("unreachable")
