"""Error norms, conservation audits, convergence tables and multiplier estimator fields."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .assembly import (CfoSolution, _coefficient, _source, edge_flux_integrals, edge_tables, solve_cfo,
                       volume_tables)
from .fem import SpaceConfig, build_dof_layout, edge_quadrature
from .mesh import TriMesh, build_uniform_mesh
from .problems import ProblemDefinition

CSV_COLUMNS = ("h", "L2", "L2_rate", "H1", "H1_rate", "flux", "flux_rate", "lambda", "lambda_rate",
               "uRh_L2", "uRh_L2_rate", "uRh_H1", "uRh_H1_rate", "cons_residual")
# ErrorReport attribute behind each rated CSV metric
METRICS = {"L2": "l2", "H1": "h1", "flux": "flux", "lambda": "lam", "uRh_L2": "uRh_l2", "uRh_H1": "uRh_h1"}


def fmt(value: float) -> str:
    """Scientific notation with six significant digits."""
    return f"{value:.5e}"


@dataclass
class ErrorReport:
    h: float
    k: int
    beta: float
    l2: float
    h1: float
    flux: float
    lam: float
    uRh_l2: float = math.nan
    uRh_h1: float = math.nan
    ritz_h1: float = math.nan
    cons_residual: float = math.nan

    def triangle_inequality_holds(self, rtol: float = 1e-8) -> bool:
        """``|u_h - R_h u|_1 <= |u_h - u|_1 + |R_h u - u|_1``."""
        if math.isnan(self.uRh_h1) or math.isnan(self.ritz_h1):
            return True
        return self.uRh_h1 <= (self.h1 + self.ritz_h1) * (1 + rtol) + 1e-300

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _eval_on_elements(vt, layout, coef):
    c = coef[layout.cell_dofs]
    return np.einsum("qi,ti->tq", vt.phi, c), np.einsum("tqia,ti->tqa", vt.grad, c)


def _exact_on_elements(problem: ProblemDefinition, mesh: TriMesh, pts):
    c = mesh.centroids
    x, y = pts[..., 0], pts[..., 1]
    u = np.broadcast_to(problem.u(x, y, c[:, 0:1], c[:, 1:2]), x.shape)
    g = problem.grad_u(x, y, c[:, 0:1], c[:, 1:2])
    return u, g


def element_error_squares(solution: CfoSolution, problem: ProblemDefinition, degree: int | None = None):
    """Per-triangle ``int_T |u_h - u|^2`` and ``int_T |grad(u_h - u)|^2``."""
    mesh, layout = solution.mesh, solution.layout
    vt = volume_tables(mesh, layout.k, degree or 2 * layout.k + 4)
    uh, guh = _eval_on_elements(vt, layout, solution.u)
    u, gu = _exact_on_elements(problem, mesh, vt.points)
    e0 = np.einsum("tq,tq->t", vt.weights, (uh - u) ** 2)
    e1 = np.einsum("tq,tq->t", vt.weights, ((guh - gu) ** 2).sum(-1))
    return e0, e1


def _difference_norms(mesh, layout, a, b, degree):
    vt = volume_tables(mesh, layout.k, degree)
    ua, ga = _eval_on_elements(vt, layout, a - b)
    return (math.sqrt(float(np.sum(vt.weights * ua ** 2))),
            math.sqrt(float(np.sum(vt.weights * (ga ** 2).sum(-1)))))


def flux_error(solution: CfoSolution, problem: ProblemDefinition, n_points: int | None = None) -> float:
    """``(sum_T h_T oint_dT |alpha grad u . n_e + q_h|^2 ds)^(1/2)``, alpha traced from inside T."""
    mesh, layout = solution.mesh, solution.layout
    k = layout.k
    et = edge_tables(mesh, k, n_points or k + 3)
    T = mesh.n_triangles
    pts = et.points
    c = mesh.centroids
    a = _coefficient(problem, mesh, pts.reshape(T, -1, 2)).reshape(pts.shape[:3] + (2, 2))
    gu = problem.grad_u(pts[..., 0], pts[..., 1], c[:, 0:1, None], c[:, 1:2, None])
    n = mesh.normals[mesh.tri_edges]
    exact = np.einsum("tla,tlgab,tlgb->tlg", n, a, gu)  # alpha grad u . n_e
    qh = np.einsum("gm,tlm->tlg", et.psi, solution.q[layout.edge_dofs[mesh.tri_edges]])
    per_tri = np.einsum("tlg,tlg->t", et.weights, (exact + qh) ** 2)
    return math.sqrt(float(np.sum(mesh.diameters * per_tri)))


def conservation_audit(solution_or_q, problem: ProblemDefinition, mesh: TriMesh | None = None,
                       layout=None):
    """Per-triangle ``|oint_dT q sigma ds - int_T f dx|`` and the maximum.

    Accepts a :class:`CfoSolution` or a raw flux vector (then ``mesh`` and ``layout``
    are required).
    """
    if isinstance(solution_or_q, CfoSolution):
        q, mesh, layout = solution_or_q.q, solution_or_q.mesh, solution_or_q.layout
    else:
        q = np.asarray(solution_or_q, dtype=float)
        if mesh is None or layout is None:
            raise ValueError("mesh and layout are required with a raw flux vector")
    fe = edge_flux_integrals(mesh, layout, q)
    circ = (mesh.tri_signs * fe[mesh.tri_edges]).sum(axis=1)
    # same rule as the constraint right-hand side, so the audit measures the solve
    vt = volume_tables(mesh, layout.k, SpaceConfig(layout.k).quad_degree)
    fint = np.einsum("tq,tq->t", vt.weights, _source(problem, mesh, vt.points))
    res = np.abs(circ - fint)
    return float(res.max()), res, fint


def conservation_bound(fint: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    return rtol * np.maximum(1.0, np.abs(fint))


def ritz_flux(mesh: TriMesh, layout, problem: ProblemDefinition, ritz: np.ndarray) -> np.ndarray:
    """Edge flux from the Galerkin solution: L2 projection onto P_{k-1}(e) of the
    average of ``-alpha grad R_h u . n_e`` from the adjacent triangles."""
    k = layout.k
    et = edge_tables(mesh, k, k + 2)
    T = mesh.n_triangles
    a = _coefficient(problem, mesh, et.points.reshape(T, -1, 2)).reshape(et.points.shape[:3] + (2, 2))
    g = np.einsum("tlgia,ti->tlga", et.grad, ritz[layout.cell_dofs])
    n = mesh.normals[mesh.tri_edges]
    flux = -np.einsum("tla,tlgab,tlgb->tlg", n, a, g)
    _, w = edge_quadrature(k + 2)
    mom = np.einsum("tlg,g,gm->tlm", flux, w, et.psi)  # orthonormal basis on [0, 1]
    acc = np.zeros((mesh.n_edges, k))
    cnt = np.zeros(mesh.n_edges)
    np.add.at(acc, mesh.tri_edges.ravel(), mom.reshape(-1, k))
    np.add.at(cnt, mesh.tri_edges.ravel(), 1.0)
    q = np.empty(layout.n_q)
    q[layout.edge_dofs] = acc / cnt[:, None]
    return q


def compute_errors(solution: CfoSolution, problem: ProblemDefinition, n_per_side: int | None = None) -> ErrorReport:
    """All error metrics of one solve; integrals use degree ``2k + 4`` rules."""
    if not problem.has_exact:
        raise ValueError("compute_errors needs an exact solution")
    mesh, layout = solution.mesh, solution.layout
    k = layout.k
    degree = 2 * k + 4
    e0, e1 = element_error_squares(solution, problem, degree)
    lam = math.sqrt(float(np.sum(solution.lam ** 2 * mesh.areas)))
    cons, _, _ = conservation_audit(solution, problem)
    report = ErrorReport(h=1.0 / n_per_side if n_per_side else mesh.h, k=k, beta=solution.beta,
                         l2=math.sqrt(float(e0.sum())), h1=math.sqrt(float(e1.sum())),
                         flux=flux_error(solution, problem), lam=lam, cons_residual=cons)
    if solution.ritz is not None:
        report.uRh_l2, report.uRh_h1 = _difference_norms(mesh, layout, solution.u, solution.ritz, degree)
        ritz_sol = CfoSolution(u=solution.ritz, q=solution.q, lam=solution.lam, mesh=mesh, layout=layout,
                               k=k, beta=solution.beta)
        report.ritz_h1 = math.sqrt(float(element_error_squares(ritz_sol, problem, degree)[1].sum()))
    return report


# -- convergence tables -----------------------------------------------------------

def rate(coarse: float, fine: float) -> float:
    """Observed order between consecutive halvings, ``log2(e(h) / e(h/2))``."""
    if coarse <= 0 or fine <= 0 or not (math.isfinite(coarse) and math.isfinite(fine)):
        return math.nan
    return math.log2(coarse / fine)


@dataclass
class ConvergenceTable:
    problem: str
    k: int
    beta: float
    sizes: list[int]
    reports: list[ErrorReport] = field(default_factory=list)

    def errors(self, metric: str) -> list[float]:
        return [getattr(r, METRICS.get(metric, metric)) for r in self.reports]

    def rates(self, metric: str) -> list[float]:
        e = self.errors(metric)
        return [rate(a, b) for a, b in zip(e[:-1], e[1:])]

    def rows(self):
        out = []
        for i, r in enumerate(self.reports):
            row = {"h": fmt(r.h)}
            for name, attr in METRICS.items():
                row[name] = fmt(getattr(r, attr))
                row[f"{name}_rate"] = "-" if i == 0 else fmt(rate(getattr(self.reports[i - 1], attr),
                                                                   getattr(r, attr)))
            row["cons_residual"] = fmt(r.cons_residual)
            out.append([row[c] for c in CSV_COLUMNS])
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(self.rows())

    def format(self) -> str:
        lines = [" ".join(f"{c:>12s}" for c in CSV_COLUMNS)]
        lines += [" ".join(f"{v:>12s}" for v in row) for row in self.rows()]
        return "\n".join(lines)


def check_halving(sizes) -> list[int]:
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ValueError("a convergence study needs at least two mesh sizes")
    for a, b in zip(sizes[:-1], sizes[1:]):
        if b != 2 * a:
            raise ValueError(f"mesh sizes must double at each level, got {a} -> {b}")
    return sizes


def convergence_study(problem: ProblemDefinition, k: int, beta: float, sizes, *, with_ritz: bool = True,
                      h_measure: str = "area", progress=None) -> ConvergenceTable:
    sizes = check_halving(sizes)
    table = ConvergenceTable(problem=problem.name, k=k, beta=float(beta), sizes=sizes)
    for n in sizes:
        mesh = build_uniform_mesh(problem.domain, n)
        sol = solve_cfo(mesh, problem, k, beta, layout=build_dof_layout(mesh, k), with_ritz=with_ritz,
                        h_measure=h_measure)
        table.reports.append(compute_errors(sol, problem, n_per_side=n))
        if progress:
            progress(n, table.reports[-1])
    return table


# -- multiplier as an error indicator ----------------------------------------------

@dataclass
class EstimatorFields:
    lam_sq: np.ndarray  # lambda_T^2 per triangle
    err_sq: np.ndarray  # int_T |u_h - u|^2 per triangle
    correlation: float


def estimator_fields(solution: CfoSolution, problem: ProblemDefinition) -> EstimatorFields:
    lam_sq = solution.lam ** 2
    err_sq, _ = element_error_squares(solution, problem)
    if np.std(lam_sq) == 0 or np.std(err_sq) == 0:
        corr = math.nan
    else:
        corr = float(np.corrcoef(lam_sq, err_sq)[0, 1])
    return EstimatorFields(lam_sq=lam_sq, err_sq=err_sq, correlation=corr)


def write_field(path, values) -> None:
    with open(path, "w") as fh:
        for i, v in enumerate(values):
            fh.write(f"{i} {fmt(float(v))}\n")
