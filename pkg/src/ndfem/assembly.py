"""Operator kernels and assembly of the least-squares bilinear forms.

The discrete method minimizes, over the triple (u, g, H),

    E_theta(phi, psi, Xi) = |grad phi - psi|^2 + |D psi - Xi|^2
                            + |rot psi|^2 + |L_theta(phi, psi, Xi) - f|^2

(all L2 norms over the domain), where

    L_theta(phi, psi, Xi) = A : Xi + b . (theta psi + (1 - theta) grad phi)
                            - c phi.

The assembled matrix is the second variation of E_theta, hence symmetric
by construction; the load vector is the coupling <f, L_theta(test)>.
With ``bc_mode == "penalty-u"`` a boundary mass term on u is added to
the matrix and the boundary moment of the Dirichlet data r to the load.
The penalty weight defaults to 1 per boundary edge; an optional
constant factor and an optional 1/|edge| scaling are available (the
plain weight-1 penalty enforces the data too loosely for the gradient
and Hessian fields to converge at full speed on coarse meshes, so the
study drivers use the scaled variant).  ``bc_mode == "strong-u"`` pins
boundary u nodes to the nodal values of r and folds the lift into the
load vector and the energy shift.

The ``hessianless`` form drops the matrix variable: Xi is replaced by
D psi inside the integrand (the |D psi - Xi|^2 term then vanishes
identically) and every H DOF is pinned with an identity row.

Constrained DOFs keep their place in the global numbering: their rows
and columns are cleared, the diagonal entry set to 1 and the load entry
to 0.  Element scatter maps stay uniform and symmetry stays exact.

Per quadrature point the eight residual components

    [ (grad phi - psi)_1, (grad phi - psi)_2,
      (D psi - Xi)_11, _12, _21, _22,
      rot psi, L_theta ]

depend linearly on the local DOF vector through a matrix B, and the
element matrix is the weighted sum of B^T B over the points.  Elements
are processed in chunks so the temporaries stay bounded.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .spaces import (
    element_geometry,
    gauss_1d,
    make_quadrature,
    matrix_basis,
    scalar_basis,
    scalar_basis_grad,
)

__all__ = [
    "AssembledSystem",
    "ltheta_eval",
    "curl2",
    "assemble",
    "assembly_order",
    "residual_order",
    "element_residuals",
    "energy_value",
]

_CHUNK = 2048


def ltheta_eval(coeffs, theta, phi, grad_phi, psi, Xi):
    """Pointwise value of L_theta.

    ``coeffs`` is a triple ``(A, b, c)`` of coefficient values at the
    evaluation point(s): ``A`` with trailing shape (2, 2), ``b`` with
    trailing shape (2,) and ``c`` scalar.  All arguments broadcast over
    leading axes.  Returns ``A : Xi + b . (theta psi + (1 - theta)
    grad phi) - c phi``.
    """
    A, b, c = (np.asarray(v, dtype=float) for v in coeffs)
    Xi = np.asarray(Xi, dtype=float)
    blend = theta * np.asarray(psi, dtype=float) + (1.0 - theta) * np.asarray(
        grad_phi, dtype=float
    )
    out = (
        np.einsum("...ij,...ij->...", A, Xi)
        + np.einsum("...i,...i->...", b, blend)
        - np.asarray(c, dtype=float) * np.asarray(phi, dtype=float)
    )
    return float(out) if np.ndim(out) == 0 else out


def curl2(grad_psi):
    """Scalar rotation d1 psi_2 - d2 psi_1 from a Jacobian.

    The Jacobian convention is ``J[i, j] = d psi_i / d x_j`` (as returned
    by :func:`ndfem.spaces.evaluate` for the vector space), so the result
    is ``J[1, 0] - J[0, 1]``.  Broadcasts over leading axes.
    """
    J = np.asarray(grad_psi, dtype=float)
    out = J[..., 1, 0] - J[..., 0, 1]
    return float(out) if np.ndim(out) == 0 else out


def assembly_order(k):
    """Quadrature order used when assembling the degree-k forms."""
    return min(10, 2 * k + 2)


def residual_order(k):
    """Default quadrature order for energy and estimator evaluation."""
    return min(10, 2 * k + 4)


class AssembledSystem:
    """Matrix and load vector of the discrete least-squares problem.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix, shape (n_dofs, n_dofs)
        Symmetric; identity rows/columns at constrained DOFs.
    rhs : (n_dofs,) array
        Zero at constrained DOFs.
    system : FeSystem
    form : {"full", "hessianless"}
    bc : str
        The ``bc_mode`` of the system.
    quad_order : int
    energy_shift : float
        The coefficient-vector-independent part of the energy,
        ``int f^2`` (plus the weighted ``int_boundary r^2`` in penalty
        mode, plus the lift terms in strong-u mode), integrated with the
        assembly quadrature.  For an admissible vector v (matching the
        pinned values at constrained DOFs), ``v.S.v - 2 rhs.v +
        energy_shift`` equals the energy with the same penalty weight.
    penalty_weight, penalty_scale :
        The boundary-penalty options the matrix was built with.
    quadrature_flag : str or None
        Warning when the fixed-order rule cannot integrate the
        coefficients exactly (jump coefficients).
    """

    def __init__(self, matrix, rhs, system, form, bc, quad_order, energy_shift,
                 quadrature_flag=None, penalty_weight=1.0, penalty_scale="none"):
        self.matrix = matrix
        self.rhs = rhs
        self.system = system
        self.form = form
        self.bc = bc
        self.quad_order = int(quad_order)
        self.energy_shift = float(energy_shift)
        self.penalty_weight = float(penalty_weight)
        self.penalty_scale = penalty_scale
        self.quadrature_flag = quadrature_flag


def _coefficient_values(spec, pts):
    """Coefficients and rhs evaluated at physical points of shape (E, nq, 2)."""
    E, nq = pts.shape[:2]
    x = pts[..., 0].ravel()
    y = pts[..., 1].ravel()
    Av = np.asarray(spec.coeffs.A(x, y), dtype=float).reshape(E, nq, 2, 2)
    bv = np.asarray(spec.coeffs.b(x, y), dtype=float).reshape(E, nq, 2)
    cv = np.asarray(spec.coeffs.c(x, y), dtype=float).reshape(E, nq)
    fv = np.asarray(spec.f(x, y), dtype=float).reshape(E, nq)
    return Av, bv, cv, fv


def _element_B(system, theta, form, N, dNx, NH, Av, bv, cv):
    """Residual matrices B, shape (E, nq, 8, nloc).

    Local DOF order: u nodes, then g (node major, component minor), then
    H (point major, component H11/H12/H22 minor).
    """
    E, nq, nk, _ = dNx.shape
    nhloc = system.nhloc
    nloc = 3 * nk + 3 * nhloc
    B = np.zeros((E, nq, 8, nloc))

    # u columns: contributes grad phi to rows 0-1 and -c phi
    # + (1 - theta) b . grad phi to the operator row
    B[:, :, 0, :nk] = dNx[..., 0]
    B[:, :, 1, :nk] = dNx[..., 1]
    B[:, :, 7, :nk] = -cv[..., None] * N + (1.0 - theta) * np.einsum(
        "eqx,eqnx->eqn", bv, dNx
    )

    for a in range(2):
        cols = nk + 2 * np.arange(nk) + a
        B[:, :, a, cols] = -N                       # -psi in rows 0-1
        if form == "full":
            # rows 2-5 vanish identically once Xi := D psi
            B[:, :, 2 + 2 * a + 0, cols] = dNx[..., 0]  # (D psi)_{a,1}
            B[:, :, 2 + 2 * a + 1, cols] = dNx[..., 1]  # (D psi)_{a,2}
        if a == 1:
            B[:, :, 6, cols] = dNx[..., 0]          # +d1 psi_2
        else:
            B[:, :, 6, cols] = -dNx[..., 1]         # -d2 psi_1
        B[:, :, 7, cols] = theta * bv[..., a, None] * N
        if form == "hessianless":
            # operator uses A : D psi once Xi is eliminated
            B[:, :, 7, cols] += np.einsum("eqm,eqnm->eqn", Av[:, :, a, :], dNx)

    if form == "full":
        for p in range(nhloc):
            col = 3 * nk + 3 * p
            B[:, :, 2, col] = -NH[:, p]             # -Xi_11
            B[:, :, 3, col + 1] = -NH[:, p]         # -Xi_12
            B[:, :, 4, col + 1] = -NH[:, p]         # -Xi_21 (symmetric storage)
            B[:, :, 5, col + 2] = -NH[:, p]         # -Xi_22
            B[:, :, 7, col] = Av[:, :, 0, 0] * NH[:, p]
            B[:, :, 7, col + 1] = 2.0 * Av[:, :, 0, 1] * NH[:, p]
            B[:, :, 7, col + 2] = Av[:, :, 1, 1] * NH[:, p]
    return B


def _edge_trace_data(system, npts):
    """Boundary-edge node maps and 1D quadrature for trace integrals.

    Returns (nodes (ne, nn), lengths (ne,), pts (ne, nq, 2),
    Phi (nq, nn), wt (nq,)); weights sum to 1, so a boundary integral is
    ``sum_e length_e * sum_q wt_q * f(pts_eq)``.
    """
    mesh = system.mesh
    edges = np.asarray(mesh.boundary_edges, dtype=int).reshape(-1, 2)
    t, wt = gauss_1d(npts)
    if system.k == 1:
        Phi = np.column_stack([1.0 - t, t])
        nodes = edges
    else:
        Phi = np.column_stack(
            [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
        )
        mids = np.array(
            [system.edge_node_of[(min(a, b), max(a, b))] for a, b in edges],
            dtype=int,
        ).reshape(-1)
        nodes = np.column_stack([edges, mids])
    pa = mesh.vertices[edges[:, 0]]
    pb = mesh.vertices[edges[:, 1]]
    lengths = np.hypot(*(pb - pa).T)
    pts = pa[:, None, :] + t[None, :, None] * (pb - pa)[:, None, :]
    return nodes, lengths, pts, Phi, wt


def assemble(system, spec, form="full", penalty_weight=1.0,
             penalty_scale="none"):
    """Assemble matrix and load vector of the discrete problem.

    Parameters
    ----------
    system : FeSystem
    spec : ProblemSpec
    form : {"full", "hessianless"}
    penalty_weight : float
        Constant factor on the boundary penalty (penalty-u mode only).
    penalty_scale : {"none", "edge-inverse"}
        With ``edge-inverse`` the penalty on each boundary edge is
        additionally multiplied by 1/|edge|, which restores full-order
        convergence of the recovered fields under mesh refinement.

    Returns
    -------
    AssembledSystem
    """
    if form not in ("full", "hessianless"):
        raise ValueError(f"unknown form {form!r}")
    if penalty_scale not in ("none", "edge-inverse"):
        raise ValueError(f"unknown penalty_scale {penalty_scale!r}")
    if penalty_weight <= 0.0:
        raise ValueError("penalty_weight must be positive")
    mesh = system.mesh
    k = system.k
    order = assembly_order(k)
    quad = make_quadrature(order)
    xy = quad.xy
    w = quad.weights
    N = scalar_basis(k, xy)
    dN = scalar_basis_grad(k, xy)
    NH = matrix_basis(k, xy)
    nk = system.nk
    nloc = 3 * nk + 3 * system.nhloc
    theta = spec.theta

    v0, jac, inv, det = element_geometry(mesh)
    area = 0.5 * det
    nt = mesh.num_triangles
    n = system.n_dofs
    all_dofs = system.element_dofs()

    rows_parts, cols_parts, vals_parts = [], [], []
    rhs = np.zeros(n)
    shift = 0.0

    for start in range(0, nt, _CHUNK):
        sl = slice(start, min(start + _CHUNK, nt))
        dNx = np.einsum("qnj,ejx->eqnx", dN, inv[sl])
        pts = v0[sl][:, None, :] + np.einsum("eij,qj->eqi", jac[sl], xy)
        Av, bv, cv, fv = _coefficient_values(spec, pts)

        B = _element_B(system, theta, form, N, dNx, NH, Av, bv, cv)
        Me = np.einsum("q,e,eqri,eqrj->eij", w, area[sl], B, B, optimize=True)
        re = np.einsum("q,e,eq,eqi->ei", w, area[sl], fv, B[:, :, 7, :],
                       optimize=True)
        shift += float(np.einsum("q,e,eq->", w, area[sl], fv * fv))

        dofs = all_dofs[sl]
        rows_parts.append(np.repeat(dofs, nloc, axis=1).ravel())
        cols_parts.append(np.tile(dofs, (1, nloc)).ravel())
        vals_parts.append(Me.ravel())
        np.add.at(rhs, dofs.ravel(), re.ravel())

    if system.bc_mode == "penalty-u":
        nodes, lengths, pts, Phi, wt = _edge_trace_data(system, k + 2)
        rv = np.asarray(
            spec.r(pts[..., 0].ravel(), pts[..., 1].ravel()), dtype=float
        ).reshape(pts.shape[:2])
        wl = penalty_weight * lengths
        if penalty_scale == "edge-inverse":
            wl = wl / lengths
        Me = np.einsum("e,q,qi,qj->eij", wl, wt, Phi, Phi)
        be = np.einsum("e,q,eq,qi->ei", wl, wt, rv, Phi)
        nn = nodes.shape[1]
        rows_parts.append(np.repeat(nodes, nn, axis=1).ravel())
        cols_parts.append(np.tile(nodes, (1, nn)).ravel())
        vals_parts.append(Me.ravel())
        np.add.at(rhs, nodes.ravel(), be.ravel())
        shift += float(np.einsum("e,q,eq->", wl, wt, rv * rv))

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)

    mask = system.constrained.copy()
    if form == "hessianless":
        mask[system.offset_H :] = True
    if mask.any():
        lift = np.zeros(n)
        if system.bc_mode == "strong-u":
            idx = np.flatnonzero(system.constrained_u)
            xc = system.node_coords[idx]
            lift[idx] = np.asarray(spec.r(xc[:, 0], xc[:, 1]), dtype=float)
        if lift.any():
            # fold the pinned boundary values into the load and the shift
            # so the energy identity keeps holding
            corr = np.zeros(n)
            np.add.at(corr, rows, vals * lift[cols])
            shift += float(lift @ corr) - 2.0 * float(rhs @ lift) + float(lift @ lift)
            rhs -= corr
        keep = ~(mask[rows] | mask[cols])
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        fixed = np.nonzero(mask)[0]
        rows = np.concatenate([rows, fixed])
        cols = np.concatenate([cols, fixed])
        vals = np.concatenate([vals, np.ones(len(fixed))])
        rhs[mask] = lift[mask]

    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    flag = None
    if getattr(spec.coeffs, "smoothness", "smooth") == "piecewise-with-axis-jumps":
        flag = (
            f"coefficients jump inside elements; order-{order} quadrature "
            "does not integrate them exactly"
        )
    return AssembledSystem(matrix, rhs, system, form, system.bc_mode, order,
                           shift, flag, penalty_weight, penalty_scale)


def element_residuals(system, spec, vec, form="full", order=None):
    """Per-element integrals of the squared least-squares residuals.

    For each triangle K returns

        int_K |grad phi - psi|^2 + |D psi - Xi|^2 + (rot psi)^2
              + (L_theta(phi, psi, Xi) - f)^2

    where (phi, psi, Xi) is the discrete triple encoded by ``vec`` (full
    layout, length ``n_dofs``).  With ``form == "hessianless"`` the H
    block of ``vec`` is ignored and Xi := D psi.  This is the energy
    density and, element by element, the error estimator.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (system.n_dofs,):
        raise ValueError(
            f"coefficient vector has length {vec.shape}, expected ({system.n_dofs},)"
        )
    if form not in ("full", "hessianless"):
        raise ValueError(f"unknown form {form!r}")
    k = system.k
    order = residual_order(k) if order is None else int(order)
    quad = make_quadrature(order)
    xy = quad.xy
    w = quad.weights
    N = scalar_basis(k, xy)
    dN = scalar_basis_grad(k, xy)
    NH = matrix_basis(k, xy)
    theta = spec.theta

    v0, jac, inv, det = element_geometry(system.mesh)
    area = 0.5 * det
    nt = system.mesh.num_triangles

    u, g, H = system.split(vec)
    gc = g.reshape(-1, 2)
    Hc = H.reshape(nt, system.nhloc, 3)

    out = np.empty(nt)
    for start in range(0, nt, _CHUNK):
        sl = slice(start, min(start + _CHUNK, nt))
        dNx = np.einsum("qnj,ejx->eqnx", dN, inv[sl])
        pts = v0[sl][:, None, :] + np.einsum("eij,qj->eqi", jac[sl], xy)
        Av, bv, cv, fv = _coefficient_values(spec, pts)

        nodes = system.tri_nodes[sl]
        cu = u[nodes]
        cg = gc[nodes]
        phi = np.einsum("qn,en->eq", N, cu)
        dphi = np.einsum("eqnx,en->eqx", dNx, cu)
        psi = np.einsum("qn,eni->eqi", N, cg)
        dpsi = np.einsum("eqnx,eni->eqix", dNx, cg)

        if form == "hessianless":
            Xi = dpsi
        else:
            comp = np.einsum("qp,epm->eqm", NH, Hc[sl])
            Xi = np.empty(dpsi.shape)
            Xi[..., 0, 0] = comp[..., 0]
            Xi[..., 0, 1] = Xi[..., 1, 0] = comp[..., 1]
            Xi[..., 1, 1] = comp[..., 2]

        r1 = dphi - psi
        r2 = dpsi - Xi
        rot = dpsi[..., 1, 0] - dpsi[..., 0, 1]
        lres = (
            np.einsum("eqij,eqij->eq", Av, Xi)
            + np.einsum("eqi,eqi->eq", bv, theta * psi + (1.0 - theta) * dphi)
            - cv * phi
            - fv
        )
        dens = (r1**2).sum(-1) + (r2**2).sum((-2, -1)) + rot**2 + lres**2
        out[sl] = area[sl] * (dens @ w)
    return out


def energy_value(system, spec, vec, form="full", order=None,
                 penalty_weight=1.0, penalty_scale="none"):
    """Value of the least-squares energy at a coefficient vector.

    Sums :func:`element_residuals`; in penalty mode the boundary misfit
    ``int_boundary (u - r)^2`` is added (same 1D rule and weight options
    as the assembly; the defaults give the plain functional).
    """
    total = float(element_residuals(system, spec, vec, form=form, order=order).sum())
    if system.bc_mode == "penalty-u":
        nodes, lengths, pts, Phi, wt = _edge_trace_data(system, system.k + 2)
        u = system.split(np.asarray(vec, dtype=float))[0]
        trace = np.einsum("qi,ei->eq", Phi, u[nodes])
        rv = np.asarray(
            spec.r(pts[..., 0].ravel(), pts[..., 1].ravel()), dtype=float
        ).reshape(pts.shape[:2])
        wl = penalty_weight * lengths
        if penalty_scale == "edge-inverse":
            wl = wl / lengths
        total += float(np.einsum("e,q,eq->", wl, wt, (trace - rv) ** 2))
    return total
