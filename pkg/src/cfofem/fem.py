"""Reference-element tables, quadrature and global DOF numbering.

Reference triangle has vertices (0, 0), (1, 0), (0, 1). Local edge ``l`` joins
local vertices ``LOCAL_EDGES[l]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import roots_jacobi

from .mesh import LOCAL_EDGES, TriMesh

SUPPORTED_DEGREES = (1, 2, 3)


def local_dof_count(k: int) -> int:
    """Unknowns per triangle: P_k on the element, P_{k-1} on each edge, one multiplier."""
    if k < 1:
        raise ValueError("degree must be >= 1")
    return (k + 1) * (k + 2) // 2 + 3 * k + 1


def rt_dof_count(k: int) -> int:
    return (k + 1) * (k + 3)


def bdm_dof_count(k: int) -> int:
    return (k + 1) * (k + 2)


# -- quadrature ---------------------------------------------------------------

@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule on the reference triangle, exact to ``degree``.

    Returns points ``(nq, 2)`` and weights summing to 1/2.
    """
    n = max(1, (degree + 2) // 2)
    a, wa = roots_jacobi(n, 1.0, 0.0)  # weight (1 - a) absorbs the Duffy Jacobian
    b, wb = np.polynomial.legendre.leggauss(n)
    # x = (1 + a)/2, y = (1 - x)(1 + b)/2 maps [-1,1]^2 onto the triangle
    x = 0.5 * (1.0 + a)
    A, B = np.meshgrid(x, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    pts = np.column_stack([A.ravel(), ((1.0 - A) * 0.5 * (1.0 + B)).ravel()])
    w = (WA * WB).ravel() / 8.0
    return pts, w


@lru_cache(maxsize=None)
def edge_quadrature(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1]."""
    s, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (s + 1.0), 0.5 * w


# -- bases ---------------------------------------------------------------------

def _monomial_exponents(k):
    return [(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]


@lru_cache(maxsize=None)
def lagrange_nodes(k: int) -> np.ndarray:
    """Reference nodes ordered vertices, then edge nodes per local edge, then interior."""
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported polynomial degree {k}; expected one of {SUPPORTED_DEGREES}")
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = list(verts)
    for s, t in LOCAL_EDGES:
        for j in range(1, k):
            nodes.append(verts[s] + j / k * (verts[t] - verts[s]))
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append(np.array([i / k, j / k]))
    return np.array(nodes)


class TriangleBasis:
    """Nodal P_k Lagrange basis on the reference triangle."""

    def __init__(self, k: int):
        self.k = k
        self.nodes = lagrange_nodes(k)
        self.exponents = _monomial_exponents(k)
        V = self._monomials(self.nodes)
        self.coeffs = np.linalg.inv(V)  # column i gives phi_i in monomials

    def __len__(self):
        return len(self.nodes)

    def _monomials(self, pts):
        pts = np.atleast_2d(pts)
        return np.stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in self.exponents], axis=-1)

    def _monomial_grads(self, pts):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        gx = [a * x ** max(a - 1, 0) * y ** b if a else np.zeros_like(x) for a, b in self.exponents]
        gy = [b * x ** a * y ** max(b - 1, 0) if b else np.zeros_like(x) for a, b in self.exponents]
        return np.stack([np.stack(gx, -1), np.stack(gy, -1)], axis=-1)  # (n, m, 2)

    def eval(self, pts) -> np.ndarray:
        """Values ``(npts, nbasis)``."""
        return self._monomials(pts) @ self.coeffs

    def grad(self, pts) -> np.ndarray:
        """Reference gradients ``(npts, nbasis, 2)``."""
        return np.einsum("pmd,mi->pid", self._monomial_grads(pts), self.coeffs)


@lru_cache(maxsize=None)
def reference_basis_tri(k: int) -> TriangleBasis:
    return TriangleBasis(k)


_LEGENDRE01 = (
    lambda s: np.ones_like(s),
    lambda s: np.sqrt(3.0) * (2.0 * s - 1.0),
    lambda s: np.sqrt(5.0) * (6.0 * s * s - 6.0 * s + 1.0),
)


class EdgeBasis:
    """Shifted Legendre polynomials on [0, 1] scaled so ``psi_0 = 1``.

    The family is L2-orthonormal on [0, 1]; on a physical edge the mass matrix is
    ``|e| I``.
    """

    def __init__(self, degree: int):
        if degree not in (0, 1, 2):
            raise ValueError(f"unsupported edge degree {degree}")
        self.degree = degree

    def __len__(self):
        return self.degree + 1

    def eval(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([_LEGENDRE01[m](s) for m in range(self.degree + 1)], axis=-1)


def reference_basis_edge(degree: int) -> EdgeBasis:
    return EdgeBasis(degree)


# -- spaces and layout -------------------------------------------------------

@dataclass(frozen=True)
class SpaceConfig:
    k: int = 1
    tri_degree: int | None = None
    edge_points: int | None = None

    def __post_init__(self):
        if self.k not in SUPPORTED_DEGREES:
            raise ValueError(f"unsupported polynomial degree {self.k}")
        if self.tri_degree is not None and self.tri_degree < 2 * self.k + 2:
            raise ValueError("triangle quadrature must be exact to degree 2k+2")
        if self.edge_points is not None and 2 * self.edge_points - 1 < 2 * self.k + 2:
            raise ValueError("edge quadrature must be exact to degree 2k+2")

    @property
    def quad_degree(self) -> int:
        return self.tri_degree if self.tri_degree is not None else 2 * self.k + 2

    @property
    def n_edge_points(self) -> int:
        return self.edge_points if self.edge_points is not None else self.k + 2


@dataclass(frozen=True, eq=False)
class DofLayout:
    """Global numbering for the primal, flux and multiplier spaces."""

    k: int
    n_u: int
    n_q: int
    n_lambda: int
    cell_dofs: np.ndarray  # (T, nloc) primal node numbers per triangle
    node_coords: np.ndarray  # (n_u, 2)
    boundary_nodes: np.ndarray  # primal nodes on the domain boundary
    node_side: np.ndarray  # (n_u, 4) bool, node lies on boundary side BOTTOM..LEFT
    edge_dofs: np.ndarray  # (E, k) flux numbers per edge

    @property
    def n_total(self) -> int:
        return self.n_u + self.n_q + self.n_lambda

    def tri_flux_dofs(self, mesh: TriMesh) -> np.ndarray:
        """``(T, 3k)`` flux numbers of each triangle's local edges in local edge order."""
        return self.edge_dofs[mesh.tri_edges].reshape(mesh.n_triangles, -1)


def build_dof_layout(mesh: TriMesh, k: int) -> DofLayout:
    if k not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported polynomial degree {k}")
    nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    n_int = comb(k - 1, 2) if k >= 3 else 0
    n_u = nv + (k - 1) * ne + n_int * nt
    nloc = (k + 1) * (k + 2) // 2

    cell = np.empty((nt, nloc), dtype=np.int64)
    cell[:, :3] = mesh.triangles
    col = 3
    for l, (s, t) in enumerate(LOCAL_EDGES):
        e = mesh.tri_edges[:, l]
        forward = mesh.triangles[:, s] == mesh.edges[e, 0]
        for j in range(1, k):
            pos = np.where(forward, j, k - j)  # position measured from edges[e, 0]
            cell[:, col] = nv + (k - 1) * e + (pos - 1)
            col += 1
    for i in range(n_int):
        cell[:, col] = nv + (k - 1) * ne + n_int * np.arange(nt) + i
        col += 1

    coords = np.empty((n_u, 2))
    coords[:nv] = mesh.vertices
    for j in range(1, k):
        coords[nv + (j - 1): nv + (k - 1) * ne: k - 1] = mesh.edge_points(np.arange(ne), np.array([j / k]))[:, 0]
    if n_int:
        coords[nv + (k - 1) * ne:] = mesh.centroids

    x0, x1, y0, y1 = mesh.domain
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    node_side = np.column_stack([
        np.abs(coords[:, 1] - y0) < tol,
        np.abs(coords[:, 0] - x1) < tol,
        np.abs(coords[:, 1] - y1) < tol,
        np.abs(coords[:, 0] - x0) < tol,
    ])
    return DofLayout(
        k=k,
        n_u=n_u,
        n_q=k * ne,
        n_lambda=nt,
        cell_dofs=cell,
        node_coords=coords,
        boundary_nodes=np.flatnonzero(node_side.any(axis=1)),
        node_side=node_side,
        edge_dofs=np.arange(k * ne).reshape(ne, k),
    )
