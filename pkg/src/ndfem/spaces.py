"""Finite element spaces for the recovered-derivative least-squares method.

Three fields live on a common triangulation:

* a scalar continuous Lagrange space of degree ``k`` (the primal variable),
* a 2-component continuous Lagrange space of degree ``k`` (recovered
  gradient),
* a discontinuous symmetric-matrix space of degree ``k - 1`` stored as 3
  components per local point: H11, H12, H22 (recovered Hessian).

Scalar and vector spaces share one node set (vertices, plus edge
midpoints for ``k = 2``).  The matrix space is element local: its DOFs
couple only within a triangle.

Global coefficient layout: ``[u | g | H]``.  A scalar node ``i`` owns
u-DOF ``i`` and g-DOFs ``(2*i, 2*i + 1)`` within the g block; triangle
``t`` owns H-DOFs ``t*3*nhloc .. (t+1)*3*nhloc`` within the H block,
ordered local point major, component (H11, H12, H22) minor.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import TriMesh

__all__ = [
    "QuadratureRule",
    "FeSystem",
    "FieldSample",
    "make_quadrature",
    "build_system",
    "interpolate",
    "evaluate",
]


class QuadratureRule:
    """Quadrature on the reference triangle (0,0), (1,0), (0,1).

    Attributes
    ----------
    points : (nq, 3) array
        Barycentric coordinates; all strictly interior.
    weights : (nq,) array
        Normalized to sum to 1; a physical integral is
        ``area(K) * sum(weights * f(x_q))``.
    order : int
        Largest total polynomial degree integrated exactly.
    """

    def __init__(self, points, weights, order):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.order = int(order)

    @property
    def xy(self):
        """Reference (x, y) coordinates, shape (nq, 2)."""
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


def make_quadrature(order):
    """Rule exact for total degree <= ``order`` on the reference triangle.

    Orders 1 and 2 use the classical centroid and symmetric 3-point
    rules; higher orders use a conical-product Gauss rule (Legendre in
    one direction, Jacobi with weight ``1 - x`` in the other), which has
    strictly interior points and positive weights for any order.
    """
    order = int(order)
    if order < 1 or order > 10:
        raise ValueError(f"unsupported quadrature order {order}")
    if order == 1:
        xy = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        w = np.array([1.0])
    elif order == 2:
        xy = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        w = np.full(3, 1.0 / 3.0)
    else:
        n = (order + 2) // 2
        x, wx = roots_jacobi(n, 1.0, 0.0)
        x = 0.5 * (x + 1.0)
        wx = wx / 4.0                      # carries the (1 - x) area factor
        s, ws = roots_legendre(n)
        s = 0.5 * (s + 1.0)
        ws = ws / 2.0
        X = np.repeat(x, n)
        Y = np.tile(s, n) * (1.0 - X)
        w = 2.0 * np.repeat(wx, n) * np.tile(ws, n)
        xy = np.column_stack([X, Y])
    bary = np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])
    return QuadratureRule(bary, w, order)


def gauss_1d(npts):
    """Gauss-Legendre points/weights on [0, 1], weights summing to 1."""
    x, w = roots_legendre(int(npts))
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Reference bases.  Local scalar nodes: vertices 0,1,2; for k=2 node 3+j is
# the midpoint of edge j (the edge opposite vertex j).

def scalar_basis(k, xy):
    """Values of the scalar basis at reference points, shape (m, nk)."""
    xy = np.atleast_2d(xy)
    l0 = 1.0 - xy[:, 0] - xy[:, 1]
    l1 = xy[:, 0]
    l2 = xy[:, 1]
    if k == 1:
        return np.column_stack([l0, l1, l2])
    if k == 2:
        return np.column_stack(
            [
                l0 * (2 * l0 - 1),
                l1 * (2 * l1 - 1),
                l2 * (2 * l2 - 1),
                4 * l1 * l2,
                4 * l2 * l0,
                4 * l0 * l1,
            ]
        )
    raise ValueError(f"unsupported degree k={k}")


def scalar_basis_grad(k, xy):
    """Reference gradients of the scalar basis, shape (m, nk, 2)."""
    xy = np.atleast_2d(xy)
    m = len(xy)
    gl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if k == 1:
        return np.broadcast_to(gl, (m, 3, 2)).copy()
    if k == 2:
        l = np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])
        out = np.empty((m, 6, 2))
        for i in range(3):
            out[:, i] = (4 * l[:, i, None] - 1) * gl[i]
        for j in range(3):
            a, b = (j + 1) % 3, (j + 2) % 3
            out[:, 3 + j] = 4 * (l[:, a, None] * gl[b] + l[:, b, None] * gl[a])
        return out
    raise ValueError(f"unsupported degree k={k}")


def matrix_basis(k, xy):
    """Scalar basis of the degree k-1 element-local space, shape (m, nhloc)."""
    xy = np.atleast_2d(xy)
    if k == 1:
        return np.ones((len(xy), 1))
    if k == 2:
        return np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])
    raise ValueError(f"unsupported degree k={k}")


def element_geometry(mesh):
    """Affine maps of all elements.

    Returns
    -------
    v0 : (nt, 2) first vertex of each triangle
    jac : (nt, 2, 2) Jacobian, columns are the two edge vectors
    inv : (nt, 2, 2) inverse Jacobian
    det : (nt,) determinant (= 2 * area, positive)
    """
    p = mesh.vertices[mesh.triangles]
    v0 = p[:, 0]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1] / det
    inv[:, 0, 1] = -jac[:, 0, 1] / det
    inv[:, 1, 0] = -jac[:, 1, 0] / det
    inv[:, 1, 1] = jac[:, 0, 0] / det
    return v0, jac, inv, det


def physical_points(mesh, xy):
    """Map reference points to every element, shape (nt, m, 2)."""
    v0, jac, _, _ = element_geometry(mesh)
    return v0[:, None, :] + np.einsum("tij,mj->tmi", jac, np.atleast_2d(xy))


class FieldSample:
    """Value (and derivative, where defined) of a field at points."""

    def __init__(self, value, gradient=None):
        self.value = value
        self.gradient = gradient


class FeSystem:
    """DOF maps and constraint masks for the (u, g, H) triple.

    Built by :func:`build_system`; immutable afterwards.  ``total_ndof``
    counts free unknowns: free u-DOFs + free g-DOFs + all H-DOFs.  The
    full coefficient vector (length ``n_dofs``) keeps constrained entries
    in place so element scatter maps stay uniform; assembly writes
    identity rows for them.
    """

    def __init__(self, mesh, k, bc_mode, tangential_mode, node_coords, tri_nodes,
                 boundary_node_mask, tangential_comp_mask, edge_node_of=None):
        self.mesh = mesh
        self.k = int(k)
        self.bc_mode = bc_mode
        self.tangential_mode = tangential_mode
        self.node_coords = node_coords
        self.tri_nodes = tri_nodes
        self.boundary_node_mask = boundary_node_mask
        # (min vertex, max vertex) -> midpoint node id; empty for k=1
        self.edge_node_of = {} if edge_node_of is None else dict(edge_node_of)

        self.n_scalar = len(node_coords)
        self.nk = tri_nodes.shape[1]
        self.nhloc = 1 if self.k == 1 else 3
        nt = mesh.num_triangles
        self.n_u = self.n_scalar
        self.n_g = 2 * self.n_scalar
        self.n_H = 3 * self.nhloc * nt
        self.n_dofs = self.n_u + self.n_g + self.n_H
        self.offset_g = self.n_u
        self.offset_H = self.n_u + self.n_g

        constrained_u = np.zeros(self.n_u, dtype=bool)
        if bc_mode in ("strong-zero-u", "strong-u"):
            constrained_u[:] = boundary_node_mask
        constrained_g = np.zeros((self.n_scalar, 2), dtype=bool)
        if tangential_mode == "strong-axis-aligned":
            constrained_g[:] = tangential_comp_mask
        self.constrained_u = constrained_u
        self.constrained_g = constrained_g

        constrained = np.zeros(self.n_dofs, dtype=bool)
        constrained[: self.n_u] = constrained_u
        constrained[self.offset_g : self.offset_H] = constrained_g.reshape(-1)
        self.constrained = constrained
        self.free_u = int(self.n_u - constrained_u.sum())
        self.free_g = int(self.n_g - constrained_g.sum())
        self.total_ndof = self.free_u + self.free_g + self.n_H

    def h_dofs(self, tris=None):
        """Global H-block indices per triangle, shape (nt, 3*nhloc)."""
        if tris is None:
            tris = np.arange(self.mesh.num_triangles)
        base = self.offset_H + 3 * self.nhloc * np.asarray(tris)
        return base[:, None] + np.arange(3 * self.nhloc)

    def element_dofs(self, tris=None):
        """Global indices of all element DOFs, shape (nt, nk + 2nk + 3nhloc).

        Order: u nodes, then g (node major, component minor), then H.
        """
        if tris is None:
            tris = np.arange(self.mesh.num_triangles)
        nodes = self.tri_nodes[tris]
        u = nodes
        g = self.offset_g + np.stack([2 * nodes, 2 * nodes + 1], axis=-1).reshape(len(nodes), -1)
        return np.hstack([u, g, self.h_dofs(tris)])

    def split(self, vector):
        """Views (u, g, H) of a full coefficient vector."""
        return (
            vector[: self.n_u],
            vector[self.offset_g : self.offset_H],
            vector[self.offset_H :],
        )


def build_system(mesh, k, bc_mode="strong-zero-u", tangential_mode="relaxed"):
    """Construct the DOF maps for degree ``k`` on ``mesh``.

    Parameters
    ----------
    mesh : TriMesh
    k : int
        1 or 2.
    bc_mode : {"strong-zero-u", "strong-u", "penalty-u"}
        Both strong modes constrain boundary scalar nodes of u; with
        ``strong-zero-u`` assembly pins them to zero, with ``strong-u``
        to the nodal values of the boundary data.  Penalty mode leaves u
        unconstrained (boundary data enters the system through a
        boundary mass term).
    tangential_mode : {"relaxed", "strong-axis-aligned"}
        Strong mode zeroes the tangential g component on every boundary
        edge (both components at corners); only axis-aligned polygons are
        supported.  Relaxed keeps g unconstrained and the tangential
        trace is merely monitored.
    """
    if k not in (1, 2):
        raise ValueError(f"degree k must be 1 or 2, got {k}")
    if bc_mode not in ("strong-zero-u", "strong-u", "penalty-u"):
        raise ValueError(f"unknown bc_mode {bc_mode!r}")
    if tangential_mode not in ("relaxed", "strong-axis-aligned"):
        raise ValueError(f"unknown tangential_mode {tangential_mode!r}")

    nv = mesh.num_vertices
    tris = mesh.triangles
    if k == 1:
        node_coords = mesh.vertices
        tri_nodes = tris.copy()
        boundary_nodes = mesh.boundary_vertex_mask()
        edge_node_of = {}
    else:
        edges = tris[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        edges_sorted = np.sort(edges, axis=1)
        uniq, inverse = np.unique(edges_sorted, axis=0, return_inverse=True)
        node_coords = np.vstack(
            [mesh.vertices, 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])]
        )
        tri_nodes = np.hstack([tris, nv + inverse.reshape(-1, 3)])
        edge_node_of = {tuple(e): nv + i for i, e in enumerate(uniq)}
        boundary_nodes = np.zeros(len(node_coords), dtype=bool)
        boundary_nodes[:nv] = mesh.boundary_vertex_mask()
        for a, b in mesh.boundary_edges:
            boundary_nodes[edge_node_of[(min(a, b), max(a, b))]] = True

    tangential_comp = np.zeros((len(node_coords), 2), dtype=bool)
    if tangential_mode == "strong-axis-aligned":
        verts = mesh.vertices
        for a, b in mesh.boundary_edges:
            d = verts[b] - verts[a]
            length = np.hypot(d[0], d[1])
            if abs(d[1]) <= 1e-12 * length:
                comp = 0                   # horizontal edge, tangent is e1
            elif abs(d[0]) <= 1e-12 * length:
                comp = 1                   # vertical edge, tangent is e2
            else:
                raise ValueError("strong-axis-aligned tangential mode needs an axis-aligned polygon")
            nodes = [a, b]
            if k == 2:
                nodes.append(edge_node_of[(min(a, b), max(a, b))])
            tangential_comp[nodes, comp] = True

    return FeSystem(
        mesh, k, bc_mode, tangential_mode, node_coords, tri_nodes,
        boundary_nodes, tangential_comp, edge_node_of,
    )


def interpolate(system, which, field):
    """Nodal interpolation into one of the three spaces.

    Parameters
    ----------
    system : FeSystem
    which : {"u", "g", "H"}
    field : callable
        Vectorized over point arrays ``(x, y)``; returns shape ``(m,)``
        for u, ``(m, 2)`` for g, and ``(m, 2, 2)`` symmetric matrices for
        H.

    Returns
    -------
    coefficient vector sized to the chosen space (u: n_scalar,
    g: 2*n_scalar interleaved per node, H: 3*nhloc per triangle).
    """
    if which == "u":
        vals = np.asarray(field(system.node_coords[:, 0], system.node_coords[:, 1]), dtype=float)
        if vals.shape != (system.n_scalar,):
            raise ValueError("scalar field must return one value per node")
        coeffs = vals
    elif which == "g":
        vals = np.asarray(field(system.node_coords[:, 0], system.node_coords[:, 1]), dtype=float)
        if vals.shape != (system.n_scalar, 2):
            raise ValueError("vector field must return (m, 2)")
        coeffs = vals.reshape(-1)
    elif which == "H":
        pts = _h_nodal_points(system)      # (nt, nhloc, 2)
        flat = pts.reshape(-1, 2)
        vals = np.asarray(field(flat[:, 0], flat[:, 1]), dtype=float)
        if vals.shape != (len(flat), 2, 2):
            raise ValueError("matrix field must return (m, 2, 2)")
        coeffs = np.column_stack([vals[:, 0, 0], vals[:, 0, 1], vals[:, 1, 1]]).reshape(-1)
    else:
        raise ValueError(f"unknown space {which!r}")
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("non-finite field value at a node")
    return coeffs


def _h_nodal_points(system):
    mesh = system.mesh
    p = mesh.vertices[mesh.triangles]
    if system.k == 1:
        return p.mean(axis=1, keepdims=True)
    return p


def evaluate(system, coeffs, which, tri, points):
    """Evaluate a coefficient vector on one triangle at reference points.

    ``points`` are reference coordinates, shape (m, 2).  Returns a
    :class:`FieldSample`: u gives value (m,) and gradient (m, 2); g gives
    value (m, 2) and Jacobian (m, 2, 2) with entry ``[i, j] = d g_i / d
    x_j``; H gives the symmetric matrix value (m, 2, 2) only.
    """
    tri = int(tri)
    if tri < 0 or tri >= system.mesh.num_triangles:
        raise IndexError(f"triangle id {tri} out of range")
    xy = np.atleast_2d(points)
    _, _, inv, _ = element_geometry(system.mesh)
    jinv = inv[tri]

    if which in ("u", "g"):
        N = scalar_basis(system.k, xy)                   # (m, nk)
        dN = scalar_basis_grad(system.k, xy)             # (m, nk, 2)
        dNx = np.einsum("mnj,jx->mnx", dN, jinv)         # physical gradients
        nodes = system.tri_nodes[tri]
        if which == "u":
            if len(coeffs) != system.n_scalar:
                raise ValueError("u coefficient vector has wrong length")
            c = coeffs[nodes]
            return FieldSample(N @ c, np.einsum("mnx,n->mx", dNx, c))
        if len(coeffs) != 2 * system.n_scalar:
            raise ValueError("g coefficient vector has wrong length")
        c = coeffs.reshape(-1, 2)[nodes]                 # (nk, 2)
        value = np.einsum("mn,ni->mi", N, c)
        jacobian = np.einsum("mnx,ni->mix", dNx, c)
        return FieldSample(value, jacobian)

    if which == "H":
        if len(coeffs) != system.n_H:
            raise ValueError("H coefficient vector has wrong length")
        NH = matrix_basis(system.k, xy)                  # (m, nhloc)
        local = coeffs[3 * system.nhloc * tri : 3 * system.nhloc * (tri + 1)].reshape(
            system.nhloc, 3
        )
        comp = NH @ local                                # (m, 3) = H11, H12, H22
        value = np.empty((len(xy), 2, 2))
        value[:, 0, 0] = comp[:, 0]
        value[:, 0, 1] = value[:, 1, 0] = comp[:, 1]
        value[:, 1, 1] = comp[:, 2]
        return FieldSample(value)
    raise ValueError(f"unknown space {which!r}")
