"""Conforming triangular meshes of rectangles with globally oriented edges."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# boundary side tags for edges; -1 marks interior edges
BOTTOM, RIGHT, TOP, LEFT = 0, 1, 2, 3
INTERIOR = -1

# local edge l of a triangle is opposite local vertex l
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangle mesh.

    ``edges[e] = (a, b)`` with ``a < b``; the fixed edge normal ``normals[e]``
    is the direction ``b - a`` rotated by +90 degrees. ``tri_signs[t, l]`` is
    the sign ``n . n_e`` between the outward normal of triangle ``t`` on its
    local edge ``l`` and the global normal of that edge.
    """

    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    edges: np.ndarray  # (E, 2)
    normals: np.ndarray  # (E, 2)
    edge_lengths: np.ndarray  # (E,)
    edge_side: np.ndarray  # (E,) boundary tag or INTERIOR
    tri_edges: np.ndarray  # (T, 3)
    tri_signs: np.ndarray  # (T, 3) of +-1
    areas: np.ndarray  # (T,)
    diameters: np.ndarray  # (T,)
    centroids: np.ndarray  # (T, 2)
    edge_tris: np.ndarray  # (E, 2), second entry -1 on the boundary
    domain: tuple[float, float, float, float] = field(default=(0.0, 1.0, 0.0, 1.0))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_side != INTERIOR)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_side == INTERIOR)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges])

    @property
    def control_volumes(self) -> np.ndarray:
        """Control volumes are the triangles themselves."""
        return np.arange(self.n_triangles)

    def edge_points(self, e: int | np.ndarray, s: np.ndarray) -> np.ndarray:
        """Physical points at parameters ``s`` in [0, 1] along the edge orientation."""
        a = self.vertices[self.edges[e, 0]]
        b = self.vertices[self.edges[e, 1]]
        s = np.asarray(s, dtype=float)
        return a[..., None, :] + s[:, None] * (b - a)[..., None, :]


def from_arrays(vertices, triangles, domain=None) -> TriMesh:
    """Build a :class:`TriMesh` from vertex coordinates and triangle connectivity."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.array(triangles, dtype=np.int64)
    p = vertices[triangles]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = cross < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    areas = 0.5 * np.abs(cross)
    if np.any(areas <= 0):
        raise ValueError("degenerate triangle in mesh")

    loc = np.array(LOCAL_EDGES)
    pairs = triangles[:, loc]  # (T, 3, 2)
    key = np.sort(pairs, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    tri_edges = inverse.reshape(-1, 3)

    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    edge_lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.column_stack([-d[:, 1], d[:, 0]]) / edge_lengths[:, None]

    # outward normal of a ccw triangle on local edge (s, t) is (t - s) rotated by -90
    start = vertices[pairs[..., 0]]
    end = vertices[pairs[..., 1]]
    tang = end - start
    outward = np.stack([tang[..., 1], -tang[..., 0]], axis=-1)
    tri_signs = np.sign(np.einsum("tlk,tlk->tl", outward, normals[tri_edges])).astype(int)

    n_t = len(triangles)
    counts = np.bincount(inverse, minlength=len(edges))
    if counts.max() > 2:
        raise ValueError("non-manifold mesh: edge shared by more than two triangles")
    edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
    owner = np.repeat(np.arange(n_t), 3)
    order = np.argsort(inverse, kind="stable")
    first = np.searchsorted(inverse[order], np.arange(len(edges)))
    edge_tris[:, 0] = owner[order[first]]
    two = counts == 2
    edge_tris[two, 1] = owner[order[first[two] + 1]]

    if domain is None:
        domain = (vertices[:, 0].min(), vertices[:, 0].max(),
                  vertices[:, 1].min(), vertices[:, 1].max())
    x0, x1, y0, y1 = domain
    mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    edge_side = np.full(len(edges), INTERIOR, dtype=int)
    bnd = ~two
    for tag, mask in ((BOTTOM, np.abs(mid[:, 1] - y0) < tol),
                      (RIGHT, np.abs(mid[:, 0] - x1) < tol),
                      (TOP, np.abs(mid[:, 1] - y1) < tol),
                      (LEFT, np.abs(mid[:, 0] - x0) < tol)):
        edge_side[bnd & mask] = tag

    el = edge_lengths[tri_edges]
    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        normals=normals,
        edge_lengths=edge_lengths,
        edge_side=edge_side,
        tri_edges=tri_edges,
        tri_signs=tri_signs,
        areas=areas,
        diameters=el.max(axis=1),
        centroids=p.mean(axis=1),
        edge_tris=edge_tris,
        domain=tuple(float(v) for v in domain),
    )


def build_uniform_mesh(domain=(0.0, 1.0, 0.0, 1.0), n: int = 8) -> TriMesh:
    """Uniform N x N grid of squares, each cut along its bottom-left to top-right diagonal.

    ``domain`` is ``(x0, x1, y0, y1)``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"mesh resolution must be a positive integer, got {n!r}")
    n = int(n)
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {domain!r}")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)  # row j is y = ys[j]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    bl = j * (n + 1) + i
    br = bl + 1
    tl = bl + n + 1
    tr = tl + 1
    lower = np.column_stack([bl, br, tr])
    upper = np.column_stack([bl, tr, tl])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return from_arrays(vertices, triangles, domain=(x0, x1, y0, y1))


def edge_quadrature_points(mesh: TriMesh, edge: int, order: int):
    """Gauss-Legendre points on a physical edge as a list of ``(point, weight)``."""
    if order < 1:
        raise ValueError("quadrature order must be at least 1")
    s, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w * mesh.edge_lengths[edge]
    pts = mesh.edge_points(edge, s)
    return [(pts[g], float(w[g])) for g in range(order)]


def write_mesh(mesh: TriMesh, path) -> None:
    """Plain-text dump: ``V E T`` header, vertices, edges with normals, triangles."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_edges} {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for (a, b), (nx, ny) in zip(mesh.edges, mesh.normals):
            fh.write(f"{a} {b} {nx:.17g} {ny:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path) -> TriMesh:
    with open(path) as fh:
        nv, ne, nt = (int(t) for t in fh.readline().split())
        rows = [fh.readline().split() for _ in range(nv + ne + nt)]
    verts = np.array(rows[:nv], dtype=float)
    tris = np.array(rows[nv + ne:], dtype=np.int64)
    return from_arrays(verts, tris)
