"""Assembly of the conservative flux optimization (CFO) saddle-point system.

Unknowns are ordered ``[u (primal nodes), q (edge flux moments), lambda (per triangle)]``.
The system reads

    s_h((u, q), (v, p)) + sum_D lambda_D oint_dD p sigma ds = (f, v)
    oint_dD q sigma ds                                        = int_D f dx

with ``s_h = (alpha grad u, grad v) + sum_D h_D^beta sum_{e in dD} <q + alpha grad u . n_e,
p + alpha grad v . n_e>_e``. Constraint rows store the boundary integral directly
(the ``1/|D|`` of the weak divergence cancels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (DofLayout, SpaceConfig, build_dof_layout, edge_quadrature, reference_basis_edge,
                  reference_basis_tri, triangle_quadrature)
from .mesh import LOCAL_EDGES, TriMesh
from .problems import InvalidProblemError, ProblemDefinition
from .solver import solve_spd, solve_symmetric_indefinite

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


H_MEASURES = ("area", "diameter")


def element_size(mesh: TriMesh, measure: str = "area") -> np.ndarray:
    """Element size entering ``h_D^beta``.

    ``"area"`` is ``sqrt(2 |D|)``, the leg length of the right triangles of a
    uniform square split (``1/N`` on the unit square); ``"diameter"`` is the
    longest edge.
    """
    if measure == "area":
        return np.sqrt(2.0 * mesh.areas)
    if measure == "diameter":
        return mesh.diameters
    raise ValueError(f"unknown element size measure {measure!r}; expected one of {H_MEASURES}")


@dataclass(frozen=True)
class AssemblyConfig:
    beta: float = 1.0
    r: int = 2
    space: SpaceConfig = field(default_factory=SpaceConfig)
    h_measure: str = "area"

    def __post_init__(self):
        if self.r != 2:
            raise ValueError("only r = 2 is supported")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")
        if self.h_measure not in H_MEASURES:
            raise ValueError(f"unknown element size measure {self.h_measure!r}")

    @property
    def k(self) -> int:
        return self.space.k


# -- element tables -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Geometry:
    J: np.ndarray  # (T, 2, 2), columns are v1 - v0 and v2 - v0
    det: np.ndarray  # (T,)
    invJT: np.ndarray  # (T, 2, 2)
    origin: np.ndarray  # (T, 2)


def _geometry(mesh: TriMesh) -> _Geometry:
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.linalg.inv(J).transpose(0, 2, 1)
    return _Geometry(J=J, det=det, invJT=invJT, origin=p[:, 0])


def _coefficient(problem: ProblemDefinition, mesh: TriMesh, pts: np.ndarray) -> np.ndarray:
    """alpha at points ``(T, n, 2)`` evaluated from inside each triangle; checks SPD."""
    if problem.element_alpha is not None:
        ea = np.asarray(problem.element_alpha, dtype=float)
        if ea.ndim == 1:
            ea = ea[:, None, None] * np.eye(2)
        a = np.broadcast_to(ea[:, None], pts.shape[:2] + (2, 2))
    else:
        c = mesh.centroids
        a = problem.alpha(pts[..., 0], pts[..., 1], c[:, 0:1], c[:, 1:2])
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if not (np.all(a[..., 0, 0] > 0) and np.all(det > 0)):
        raise InvalidProblemError("diffusion coefficient is not symmetric positive definite")
    return a


def _source(problem: ProblemDefinition, mesh: TriMesh, pts: np.ndarray) -> np.ndarray:
    c = mesh.centroids
    return np.broadcast_to(problem.f(pts[..., 0], pts[..., 1], c[:, 0:1], c[:, 1:2]), pts.shape[:2])


@dataclass(frozen=True, eq=False)
class VolumeTables:
    points: np.ndarray  # (T, nq, 2)
    weights: np.ndarray  # (T, nq), physical
    phi: np.ndarray  # (nq, nloc)
    grad: np.ndarray  # (T, nq, nloc, 2), physical


def volume_tables(mesh: TriMesh, k: int, degree: int) -> VolumeTables:
    geo = _geometry(mesh)
    ref, w = triangle_quadrature(degree)
    basis = reference_basis_tri(k)
    pts = geo.origin[:, None, :] + np.einsum("tab,qb->tqa", geo.J, ref)
    grad = np.einsum("tab,qib->tqia", geo.invJT, basis.grad(ref))
    return VolumeTables(points=pts, weights=np.abs(geo.det)[:, None] * w[None, :],
                        phi=basis.eval(ref), grad=grad)


@dataclass(frozen=True, eq=False)
class EdgeTables:
    """Per-triangle, per-local-edge quadrature data, parameterized along the global edge."""

    s: np.ndarray  # (ng,) parameters along the global orientation
    weights: np.ndarray  # (T, 3, ng), physical
    points: np.ndarray  # (T, 3, ng, 2)
    grad: np.ndarray  # (T, 3, ng, nloc, 2), physical gradients of the primal basis
    psi: np.ndarray  # (ng, k) flux basis values


def edge_tables(mesh: TriMesh, k: int, n_points: int) -> EdgeTables:
    geo = _geometry(mesh)
    s, w = edge_quadrature(n_points)
    basis = reference_basis_tri(k)
    T = mesh.n_triangles
    grads = np.empty((T, 3, len(s), len(basis), 2))
    points = np.empty((T, 3, len(s), 2))
    for l, (a, b) in enumerate(LOCAL_EDGES):
        e = mesh.tri_edges[:, l]
        forward = mesh.triangles[:, a] == mesh.edges[e, 0]
        ref_f = _REF_VERTS[a] + s[:, None] * (_REF_VERTS[b] - _REF_VERTS[a])
        ref_b = _REF_VERTS[a] + (1.0 - s)[:, None] * (_REF_VERTS[b] - _REF_VERTS[a])
        g = np.where(forward[:, None, None, None], basis.grad(ref_f)[None], basis.grad(ref_b)[None])
        grads[:, l] = np.einsum("tab,tgib->tgia", geo.invJT, g)
        points[:, l] = mesh.edge_points(e, s)
    weights = mesh.edge_lengths[mesh.tri_edges][..., None] * w[None, None, :]
    psi = reference_basis_edge(k - 1).eval(s)
    return EdgeTables(s=s, weights=weights, points=points, grad=grads, psi=psi)


# -- systems --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Reduced symmetric indefinite system after eliminating prescribed unknowns."""

    matrix: sp.csr_matrix  # over the free unknowns
    rhs: np.ndarray
    free: np.ndarray  # indices into the full unknown vector
    fixed: np.ndarray
    fixed_values: np.ndarray
    full_matrix: sp.csr_matrix  # before elimination
    full_rhs: np.ndarray
    layout: DofLayout
    beta: float
    n_edge_terms: int  # stabilization edge integrals assembled

    @property
    def n_u(self) -> int:
        return self.layout.n_u

    @property
    def n_q(self) -> int:
        return self.layout.n_q

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.empty(self.full_matrix.shape[0])
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x

    def split(self, x_full: np.ndarray):
        nu, nq = self.n_u, self.n_q
        return x_full[:nu], x_full[nu:nu + nq], x_full[nu + nq:]


@dataclass(frozen=True, eq=False)
class RitzSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_u: int

    def expand(self, x_free):
        x = np.empty(self.n_u)
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x


@dataclass(eq=False)
class CfoSolution:
    u: np.ndarray
    q: np.ndarray
    lam: np.ndarray
    mesh: TriMesh
    layout: DofLayout
    k: int
    beta: float
    ritz: np.ndarray | None = None
    info: object = None

    @property
    def mesh_id(self) -> str:
        return f"V{self.mesh.n_vertices}-T{self.mesh.n_triangles}-h{self.mesh.h:.6g}"


def _scatter(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def assemble_stiffness(mesh, layout, problem, space: SpaceConfig | None = None, vt: VolumeTables | None = None):
    """Galerkin matrix ``(alpha grad u, grad v)`` and load ``(f, v)`` over all primal nodes."""
    space = space or SpaceConfig(layout.k)
    vt = vt or volume_tables(mesh, layout.k, space.quad_degree)
    a = _coefficient(problem, mesh, vt.points)
    K = np.einsum("tq,tqia,tqab,tqjb->tij", vt.weights, vt.grad, a, vt.grad, optimize=True)
    K = 0.5 * (K + K.transpose(0, 2, 1))
    f = _source(problem, mesh, vt.points)
    F = np.einsum("tq,tq,qi->ti", vt.weights, f, vt.phi, optimize=True)
    cd = layout.cell_dofs
    nloc = cd.shape[1]
    rows = np.repeat(cd, nloc, axis=1)
    cols = np.tile(cd, (1, nloc))
    Kg = _scatter(rows, cols, K.reshape(len(cd), -1), (layout.n_u, layout.n_u))
    Fg = np.bincount(cd.ravel(), weights=F.ravel(), minlength=layout.n_u)
    return Kg, Fg


def assemble_s_h(mesh, layout, problem, beta, space: SpaceConfig | None = None, et: EdgeTables | None = None,
                 h_measure: str = "area"):
    """Stabilization part of ``s_h`` over ``[u, q]``; returns ``(matrix, n_edge_terms)``.

    Every triangle contributes on each of its three edges with its own coefficient
    trace and its own ``h_T^beta``, so interior edges are visited twice.
    """
    space = space or SpaceConfig(layout.k)
    k = layout.k
    et = et or edge_tables(mesh, k, space.n_edge_points)
    T = mesh.n_triangles
    a = _coefficient(problem, mesh, et.points.reshape(T, -1, 2)).reshape(et.points.shape[:3] + (2, 2))
    n = mesh.normals[mesh.tri_edges]  # (T, 3, 2)
    # d/du of alpha grad u . n_e at each edge point: (T, 3, ng, nloc)
    cu = np.einsum("tla,tlgab,tlgib->tlgi", n, a, et.grad, optimize=True)
    nloc = cu.shape[-1]
    ng = len(et.s)
    nl = nloc + 3 * k
    C = np.zeros((T, 3, ng, nl))
    C[..., :nloc] = cu
    for l in range(3):
        C[:, l, :, nloc + l * k: nloc + (l + 1) * k] = et.psi[None]
    hb = element_size(mesh, h_measure) ** beta
    S = np.einsum("t,tlg,tlgi,tlgj->tij", hb, et.weights, C, C, optimize=True)
    S = 0.5 * (S + S.transpose(0, 2, 1))
    dofs = np.concatenate([layout.cell_dofs, layout.n_u + layout.tri_flux_dofs(mesh)], axis=1)
    rows = np.repeat(dofs, nl, axis=1)
    cols = np.tile(dofs, (1, nl))
    n_uq = layout.n_u + layout.n_q
    return _scatter(rows, cols, S.reshape(T, -1), (n_uq, n_uq)), 3 * T


def assemble_constraint(mesh, layout, problem, space: SpaceConfig | None = None, vt: VolumeTables | None = None):
    """Rows ``oint_dT q sigma ds`` (one per triangle, columns over q) and ``int_T f``."""
    space = space or SpaceConfig(layout.k)
    k = layout.k
    s, w = edge_quadrature(space.n_edge_points)
    moments = reference_basis_edge(k - 1).eval(s).T @ w  # int_0^1 psi_m ds
    moments[np.abs(moments) < 1e-14] = 0.0
    T = mesh.n_triangles
    vals = (mesh.tri_signs * mesh.edge_lengths[mesh.tri_edges])[..., None] * moments[None, None, :]
    cols = layout.tri_flux_dofs(mesh).reshape(T, 3, k)
    rows = np.broadcast_to(np.arange(T)[:, None, None], cols.shape)
    keep = vals != 0
    B = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(T, layout.n_q)).tocsr()
    vt = vt or volume_tables(mesh, k, space.quad_degree)
    rhs = np.einsum("tq,tq->t", vt.weights, _source(problem, mesh, vt.points))
    return B, rhs


def dirichlet_nodes(layout: DofLayout, problem: ProblemDefinition) -> np.ndarray:
    sides = list(problem.dirichlet_sides)
    if not sides:
        return np.array([], dtype=np.int64)
    return np.flatnonzero(layout.node_side[:, sides].any(axis=1))


def assemble_cfo(mesh, layout, problem, beta, *, space: SpaceConfig | None = None,
                 fixed_flux_edges=None, h_measure: str = "area") -> SaddleSystem:
    """Assemble the CFO saddle-point system with Dirichlet lifting.

    ``fixed_flux_edges`` lists edges whose flux moments are prescribed to zero
    (no-flow boundaries); all other boundary fluxes stay unknown.
    """
    config = AssemblyConfig(beta=beta, space=space or SpaceConfig(layout.k), h_measure=h_measure)
    space = config.space
    vt = volume_tables(mesh, layout.k, space.quad_degree)
    K, F = assemble_stiffness(mesh, layout, problem, space, vt)
    S, n_terms = assemble_s_h(mesh, layout, problem, beta, space, h_measure=h_measure)
    B, G = assemble_constraint(mesh, layout, problem, space, vt)
    nu, nq, nl = layout.n_u, layout.n_q, layout.n_lambda
    A = S + sp.block_diag([K, sp.csr_matrix((nq, nq))], format="csr")
    Bfull = sp.hstack([sp.csr_matrix((nl, nu)), B], format="csr")
    M = sp.bmat([[A, Bfull.T], [Bfull, None]], format="csr")
    b = np.concatenate([F, np.zeros(nq), G])

    dnodes = dirichlet_nodes(layout, problem)
    xy = layout.node_coords[dnodes]
    gvals = np.asarray(problem.g(xy[:, 0], xy[:, 1]), dtype=float).reshape(-1)
    fixed = [dnodes]
    values = [gvals]
    if fixed_flux_edges is not None and len(fixed_flux_edges):
        qd = nu + layout.edge_dofs[np.asarray(fixed_flux_edges)].ravel()
        fixed.append(qd)
        values.append(np.zeros(len(qd)))
    fixed = np.concatenate(fixed).astype(np.int64)
    values = np.concatenate(values)
    order = np.argsort(fixed)
    fixed, values = fixed[order], values[order]
    mask = np.ones(M.shape[0], dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    Mc = M.tocsc()
    rhs = b[free] - Mc[:, fixed][free] @ values
    Mff = Mc[:, free].tocsr()[free]
    return SaddleSystem(matrix=Mff.tocsr(), rhs=rhs, free=free, fixed=fixed, fixed_values=values,
                        full_matrix=M, full_rhs=b, layout=layout, beta=float(beta), n_edge_terms=n_terms)


def assemble_ritz(mesh, layout, problem, *, space: SpaceConfig | None = None) -> RitzSystem:
    K, F = assemble_stiffness(mesh, layout, problem, space)
    dnodes = dirichlet_nodes(layout, problem)
    xy = layout.node_coords[dnodes]
    gvals = np.asarray(problem.g(xy[:, 0], xy[:, 1]), dtype=float).reshape(-1)
    mask = np.ones(layout.n_u, dtype=bool)
    mask[dnodes] = False
    free = np.flatnonzero(mask)
    Kc = K.tocsc()
    rhs = F[free] - Kc[:, dnodes][free] @ gvals
    return RitzSystem(matrix=Kc[:, free].tocsr()[free], rhs=rhs, free=free, fixed=dnodes,
                      fixed_values=gvals, n_u=layout.n_u)


def solve_ritz(mesh, layout, problem, *, space=None) -> np.ndarray:
    system = assemble_ritz(mesh, layout, problem, space=space)
    x, _ = solve_spd(system.matrix, system.rhs)
    return system.expand(x)


def solve_cfo(mesh: TriMesh, problem: ProblemDefinition, k: int, beta: float, *,
              layout: DofLayout | None = None, with_ritz: bool = True, space: SpaceConfig | None = None,
              fixed_flux_edges=None, h_measure: str = "area") -> CfoSolution:
    """Assemble and solve the CFO system; optionally also the Ritz-Galerkin companion."""
    layout = layout or build_dof_layout(mesh, k)
    system = assemble_cfo(mesh, layout, problem, beta, space=space, fixed_flux_edges=fixed_flux_edges,
                          h_measure=h_measure)
    x, info = solve_symmetric_indefinite(system.matrix, system.rhs)
    u, q, lam = system.split(system.expand(x))
    ritz = solve_ritz(mesh, layout, problem, space=space) if with_ritz else None
    return CfoSolution(u=u, q=q, lam=lam, mesh=mesh, layout=layout, k=k, beta=float(beta),
                       ritz=ritz, info=info)


# -- diagnostics -------------------------------------------------------------------

def edge_flux_integrals(mesh: TriMesh, layout: DofLayout, q: np.ndarray) -> np.ndarray:
    """``int_e q ds`` along each edge's global normal."""
    s, w = edge_quadrature(layout.k + 1)
    moments = reference_basis_edge(layout.k - 1).eval(s).T @ w
    return mesh.edge_lengths * (q[layout.edge_dofs] @ moments)


def weak_divergence(mesh: TriMesh, layout: DofLayout, q: np.ndarray, element=None):
    """``(1/|D|) oint_dD q (n . n_e) ds`` for one triangle or, by default, all of them."""
    fe = edge_flux_integrals(mesh, layout, q)
    div = (mesh.tri_signs * fe[mesh.tri_edges]).sum(axis=1) / mesh.areas
    return div if element is None else float(div[element])


def cfo_lagrangian(mesh, layout, problem, beta, u, q, lam=None, space: SpaceConfig | None = None,
                   h_measure: str = "area") -> float:
    """Pointwise evaluation of ``J_{2,beta}(u, q) + sum_D lam_D (oint q sigma - int f)``.

    Evaluated element by element from basis function values without touching the
    assembled matrices; used as an independent check of the optimality system.
    """
    space = space or SpaceConfig(layout.k)
    k = layout.k
    basis = reference_basis_tri(k)
    eb = reference_basis_edge(k - 1)
    ref_pts, ref_w = triangle_quadrature(space.quad_degree)
    s, sw = edge_quadrature(space.n_edge_points)
    sizes = element_size(mesh, h_measure)
    total = 0.0
    for t in range(mesh.n_triangles):
        p = mesh.vertices[mesh.triangles[t]]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        Jinv = np.linalg.inv(J)
        area2 = abs(np.linalg.det(J))
        c = mesh.centroids[t]
        coef = u[layout.cell_dofs[t]]

        def alpha_at(x):
            if problem.element_alpha is not None:
                ea = np.asarray(problem.element_alpha[t], dtype=float)
                return np.broadcast_to(ea * np.eye(2) if ea.ndim == 0 else ea, (len(x), 2, 2))
            return problem.alpha(x[:, 0], x[:, 1], c[0], c[1])

        x = p[0] + ref_pts @ J.T
        gu = np.einsum("qib,i->qb", basis.grad(ref_pts), coef) @ Jinv
        uval = basis.eval(ref_pts) @ coef
        a = alpha_at(x)
        fx = np.broadcast_to(problem.f(x[:, 0], x[:, 1], c[0], c[1]), (len(x),))
        w = area2 * ref_w
        total += 0.5 * np.sum(w * np.einsum("qa,qab,qb->q", gu, a, gu)) - np.sum(w * fx * uval)

        h_b = sizes[t] ** beta
        circ = 0.0
        for l in range(3):
            e = mesh.tri_edges[t, l]
            pa, pb = mesh.vertices[mesh.edges[e]]
            xe = pa + s[:, None] * (pb - pa)
            xi = (xe - p[0]) @ Jinv.T
            ge = np.einsum("qib,i->qb", basis.grad(xi), coef) @ Jinv
            ae = alpha_at(xe)
            qv = eb.eval(s) @ q[layout.edge_dofs[e]]
            mismatch = qv + np.einsum("qa,qab,b->q", ge, ae, mesh.normals[e])
            le = mesh.edge_lengths[e]
            total += 0.5 * h_b * le * np.sum(sw * mismatch ** 2)
            circ += mesh.tri_signs[t, l] * le * np.sum(sw * qv)
        if lam is not None:
            total += lam[t] * (circ - np.sum(w * fx))
    return float(total)


def write_system(system: SaddleSystem, path) -> None:
    """Coordinate-format dump ``row col value`` of the reduced matrix, then the rhs."""
    coo = system.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
        for v in system.rhs:
            fh.write(f"{v:.17g}\n")
