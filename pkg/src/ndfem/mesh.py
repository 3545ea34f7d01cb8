"""Conforming triangle meshes with uniform and bisection refinement.

Meshes are immutable: every refinement returns a new :class:`TriMesh`.
Triangles are stored as counterclockwise vertex index triples.  Local edge
``j`` of a triangle is the edge opposite local vertex ``j``, i.e. the pair
``(tri[(j+1) % 3], tri[(j+2) % 3])``.

Selective refinement uses newest-vertex bisection: each triangle carries a
refinement (base) edge, initially its longest edge; bisecting a triangle
splits the base edge at its midpoint, and a recursive closure keeps the
mesh conforming.  The children's base edges are the two remaining parent
edges, which bounds the number of similarity classes generated and hence
the shape regularity of all descendants.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "TriMesh",
    "MeshQuality",
    "build_rectangle_mesh",
    "uniform_refine",
    "bisect_refine",
    "mesh_quality",
    "write_triangle_files",
    "read_triangle_files",
]


class TriMesh:
    """Immutable conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.
    triangles : (nt, 3) int array
        Counterclockwise vertex index triples.
    refinement_edge : (nt,) int array, optional
        Local index of each triangle's bisection base edge.  Defaults to
        the longest edge (ties broken by smallest local index).
    generation : (nt,) int array, optional
        Refinement depth of each triangle, 0 for an initial mesh.

    Attributes
    ----------
    boundary_edges : (nb, 2) int array
        Vertex pairs of edges incident to exactly one triangle.
    boundary_tags : (nb,) int array
        All ones; the test domains have a single Dirichlet boundary.
    """

    def __init__(self, vertices, triangles, refinement_edge=None, generation=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinate")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be an (nt, 3) array")

        areas = self.signed_areas()
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise ValueError(f"triangle {bad} is not counterclockwise (area {areas[bad]:g})")

        # Edge incidence census: conformity means every edge appears once
        # (boundary) or twice (interior).
        edges = self.triangles[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        edges_sorted = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges_sorted, axis=0, return_counts=True)
        if counts.max(initial=1) > 2:
            raise ValueError("nonconforming mesh: an edge is shared by more than 2 triangles")
        self.boundary_edges = uniq[counts == 1]
        self.boundary_tags = np.ones(len(self.boundary_edges), dtype=np.int64)

        if refinement_edge is None:
            refinement_edge = _longest_edge_index(self.vertices, self.triangles)
        self.refinement_edge = np.ascontiguousarray(refinement_edge, dtype=np.int64)
        if generation is None:
            generation = np.zeros(len(self.triangles), dtype=np.int64)
        self.generation = np.ascontiguousarray(generation, dtype=np.int64)

        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self.boundary_edges.setflags(write=False)
        self.refinement_edge.setflags(write=False)
        self.generation.setflags(write=False)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        """Signed area of every triangle, positive for counterclockwise."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self):
        """(nt, 3) lengths; column j is the edge opposite local vertex j."""
        p = self.vertices[self.triangles]
        out = np.empty((len(self.triangles), 3))
        for j in range(3):
            d = p[:, (j + 1) % 3] - p[:, (j + 2) % 3]
            out[:, j] = np.hypot(d[:, 0], d[:, 1])
        return out

    def boundary_vertex_mask(self):
        """Boolean mask over vertices that lie on the boundary."""
        mask = np.zeros(self.num_vertices, dtype=bool)
        if len(self.boundary_edges):
            mask[self.boundary_edges.ravel()] = True
        return mask


class MeshQuality:
    """Mesh size and shape-regularity summary.

    Attributes
    ----------
    h_max, h_min : float
        Largest and smallest element diameter (longest edge).
    sigma : float
        Chunkiness parameter, max over elements of diameter / inradius.
    """

    def __init__(self, h_max, h_min, sigma):
        self.h_max = float(h_max)
        self.h_min = float(h_min)
        self.sigma = float(sigma)

    def __repr__(self):
        return f"MeshQuality(h_max={self.h_max:.6g}, h_min={self.h_min:.6g}, sigma={self.sigma:.6g})"


def _longest_edge_index(vertices, triangles):
    """Local index of the longest edge per triangle (first max on ties)."""
    p = vertices[triangles]
    lengths = np.empty((len(triangles), 3))
    for j in range(3):
        d = p[:, (j + 1) % 3] - p[:, (j + 2) % 3]
        lengths[:, j] = d[:, 0] ** 2 + d[:, 1] ** 2
    return np.argmax(lengths, axis=1).astype(np.int64)


def build_rectangle_mesh(corner0, corner1, n):
    """Crisscross triangulation of an axis-aligned rectangle.

    The rectangle spanned by the two opposite corners is split into an
    ``n`` by ``n`` grid of cells, each cut along the diagonal running from
    its lower-left to its upper-right corner (a fixed direction keeps
    regression outputs deterministic).  Cell edges are axis aligned, so
    coefficient jumps along the coordinate axes coincide with mesh lines
    whenever the axes are grid lines (e.g. even ``n`` on a square centered
    at the origin).

    Parameters
    ----------
    corner0, corner1 : (2,) float
        Two opposite corners.
    n : int
        Subdivisions per side; the mesh has 2*n^2 triangles and (n+1)^2
        vertices.

    Returns
    -------
    TriMesh
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    x0, y0 = float(corner0[0]), float(corner0[1])
    x1, y1 = float(corner1[0]), float(corner1[1])
    if x1 < x0:
        x0, x1 = x1, x0
    if y1 < y0:
        y0, y1 = y1, y0
    if x1 - x0 <= 0.0 or y1 - y0 <= 0.0:
        raise ValueError("degenerate rectangle")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = (j * (n + 1) + i).ravel()          # lower-left of each cell
    b = a + 1                              # lower-right
    c = b + (n + 1)                        # upper-right
    d = a + (n + 1)                        # upper-left
    lower = np.column_stack([a, b, c])     # diagonal a-c
    upper = np.column_stack([a, c, d])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return TriMesh(vertices, triangles)


def uniform_refine(mesh):
    """Split every triangle into 4 similar children via edge midpoints.

    h_max halves exactly and the chunkiness parameter is unchanged, since
    every child is similar to its parent.
    """
    nt = mesh.num_triangles
    tris = mesh.triangles
    edges = tris[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
    edges_sorted = np.sort(edges, axis=1)
    uniq, inverse = np.unique(edges_sorted, axis=0, return_inverse=True)
    mid_ids = mesh.num_vertices + np.arange(len(uniq))
    midpoints = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    m = mid_ids[inverse].reshape(nt, 3)    # m[:, j] = midpoint of edge j
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    m0, m1, m2 = m[:, 0], m[:, 1], m[:, 2]
    children = np.empty((4 * nt, 3), dtype=np.int64)
    children[0::4] = np.column_stack([v0, m2, m1])
    children[1::4] = np.column_stack([v1, m0, m2])
    children[2::4] = np.column_stack([v2, m1, m0])
    children[3::4] = np.column_stack([m0, m1, m2])
    generation = np.repeat(mesh.generation + 1, 4)
    return TriMesh(vertices, children, generation=generation)


def bisect_refine(mesh, marked):
    """Bisect the marked triangles, with recursive conforming closure.

    Each marked triangle is split at least once through the midpoint of
    its base (refinement) edge; neighbors are split as needed so the
    result is conforming.  Children inherit the parent's remaining edges
    as their base edges (newest-vertex rule).

    Parameters
    ----------
    mesh : TriMesh
    marked : iterable of int
        Triangle ids to split.  An empty set returns the mesh unchanged.

    Returns
    -------
    TriMesh
        Vertices of the input are a prefix of the output's vertices.
    """
    marked = sorted({int(t) for t in marked})
    if not marked:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.num_triangles:
        raise ValueError("marked ids out of range")

    # Mutable working state.  Triangles are records (v0, v1, v2) with a
    # base-edge local index; killed parents are compacted out at the end.
    verts = list(map(tuple, mesh.vertices))
    tri_v = [tuple(t) for t in mesh.triangles]
    tri_base = list(mesh.refinement_edge)
    tri_gen = list(mesh.generation)
    alive = [True] * len(tri_v)

    edge_tris = {}                          # sorted edge -> set of alive tri ids
    for t, tv in enumerate(tri_v):
        for j in range(3):
            e = _sorted_edge(tv[(j + 1) % 3], tv[(j + 2) % 3])
            edge_tris.setdefault(e, set()).add(t)
    midpoint_of = {}                        # sorted edge -> new vertex id

    def base_edge(t):
        tv, j = tri_v[t], tri_base[t]
        return _sorted_edge(tv[(j + 1) % 3], tv[(j + 2) % 3])

    def split_pair(e, ts):
        """Split all alive triangles having e as base edge (1 or 2)."""
        if e in midpoint_of:
            mid = midpoint_of[e]
        else:
            mid = len(verts)
            pa, pb = verts[e[0]], verts[e[1]]
            verts.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            midpoint_of[e] = mid
        for t in ts:
            tv, j = tri_v[t], tri_base[t]
            p, a, b = tv[j], tv[(j + 1) % 3], tv[(j + 2) % 3]
            alive[t] = False
            for jj in range(3):
                edge_tris[_sorted_edge(tv[(jj + 1) % 3], tv[(jj + 2) % 3])].discard(t)
            for child in ((p, a, mid), (b, p, mid)):
                cid = len(tri_v)
                tri_v.append(child)
                tri_base.append(2)          # base = (child[0], child[1])
                tri_gen.append(tri_gen[t] + 1)
                alive.append(True)
                for jj in range(3):
                    e2 = _sorted_edge(child[(jj + 1) % 3], child[(jj + 2) % 3])
                    edge_tris.setdefault(e2, set()).add(cid)

    limit = 100 * (mesh.num_triangles + len(marked)) + 1000
    steps = 0
    for m0 in marked:
        if not alive[m0]:
            continue                        # already split by an earlier closure
        stack = [m0]
        while stack:
            steps += 1
            if steps > limit:
                raise RuntimeError("bisection closure did not terminate")
            t = stack[-1]
            if not alive[t]:
                stack.pop()
                continue
            e = base_edge(t)
            others = [s for s in edge_tris.get(e, ()) if s != t and alive[s]]
            if not others:
                split_pair(e, [t])
                stack.pop()
            else:
                nb = others[0]
                if base_edge(nb) == e:
                    split_pair(e, [t, nb])
                    stack.pop()
                else:
                    stack.append(nb)        # make e the base of one of nb's children

    keep = [t for t in range(len(tri_v)) if alive[t]]
    return TriMesh(
        np.asarray(verts, dtype=float),
        np.asarray([tri_v[t] for t in keep], dtype=np.int64),
        refinement_edge=np.asarray([tri_base[t] for t in keep], dtype=np.int64),
        generation=np.asarray([tri_gen[t] for t in keep], dtype=np.int64),
    )


def _sorted_edge(a, b):
    return (a, b) if a < b else (b, a)


def mesh_quality(mesh):
    """Compute h_max, h_min and the chunkiness parameter sigma.

    Element diameter is the longest edge; the inradius of a triangle is
    2*area/perimeter.
    """
    lengths = mesh.edge_lengths()
    diam = lengths.max(axis=1)
    perimeter = lengths.sum(axis=1)
    inradius = 2.0 * mesh.signed_areas() / perimeter
    return MeshQuality(diam.max(), diam.min(), (diam / inradius).max())


def write_triangle_files(mesh, basepath):
    """Write ``basepath.node`` and ``basepath.ele`` (1-based indices).

    The .node file carries one boundary marker per vertex (1 on the
    boundary, 0 inside); the .ele file lists vertex triples.
    """
    basepath = str(basepath)
    bmask = mesh.boundary_vertex_mask()
    with open(basepath + ".node", "w") as fh:
        fh.write(f"{mesh.num_vertices} 2 0 1\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i + 1} {float(x)!r} {float(y)!r} {int(bmask[i])}\n")
    with open(basepath + ".ele", "w") as fh:
        fh.write(f"{mesh.num_triangles} 3 0\n")
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i + 1} {a + 1} {b + 1} {c + 1}\n")


def read_triangle_files(basepath):
    """Read a mesh written by :func:`write_triangle_files`."""
    basepath = str(basepath)
    with open(basepath + ".node") as fh:
        header = fh.readline().split()
        nv = int(header[0])
        vertices = np.empty((nv, 2))
        for _ in range(nv):
            row = fh.readline().split()
            vertices[int(row[0]) - 1] = (float(row[1]), float(row[2]))
    with open(basepath + ".ele") as fh:
        header = fh.readline().split()
        nt = int(header[0])
        triangles = np.empty((nt, 3), dtype=np.int64)
        for _ in range(nt):
            row = fh.readline().split()
            triangles[int(row[0]) - 1] = (int(row[1]) - 1, int(row[2]) - 1, int(row[3]) - 1)
    return TriMesh(vertices, triangles)
