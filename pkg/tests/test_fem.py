from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfofem.fem import (SpaceConfig, bdm_dof_count, build_dof_layout, edge_quadrature, lagrange_nodes,
                        local_dof_count, reference_basis_edge, reference_basis_tri, rt_dof_count,
                        triangle_quadrature)
from cfofem.mesh import build_uniform_mesh


def monomial_integral(a, b):
    # int over the reference triangle of x^a y^b = a! b! / (a + b + 2)!
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_triangle_quadrature_exact(k):
    d = 2 * k + 2
    pts, w = triangle_quadrature(d)
    for a in range(d + 1):
        for b in range(d + 1 - a):
            got = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)
            assert got == pytest.approx(monomial_integral(a, b), abs=1e-13)


def test_triangle_quadrature_inside():
    for d in range(1, 12):
        pts, w = triangle_quadrature(d)
        assert np.all(w > 0) and np.all(pts > 0) and np.all(pts.sum(1) < 1)
        assert w.sum() == pytest.approx(0.5)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_edge_quadrature(n):
    s, w = edge_quadrature(n)
    for p in range(2 * n):
        assert np.sum(w * s ** p) == pytest.approx(1 / (p + 1), abs=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_basis_partition_and_delta(k):
    basis = reference_basis_tri(k)
    assert len(basis) == (k + 1) * (k + 2) // 2
    np.testing.assert_allclose(basis.eval(basis.nodes), np.eye(len(basis)), atol=1e-12)
    pts = np.random.default_rng(k).dirichlet([1, 1, 1], 20)[:, :2]
    np.testing.assert_allclose(basis.eval(pts).sum(1), 1.0, atol=1e-13)
    np.testing.assert_allclose(basis.grad(pts).sum(1), 0.0, atol=1e-11)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_basis_gradient_fd(k):
    basis = reference_basis_tri(k)
    p = np.array([[0.21, 0.33]])
    eps = 1e-6
    for d in range(2):
        dp = np.zeros((1, 2))
        dp[0, d] = eps
        fd = (basis.eval(p + dp) - basis.eval(p - dp)) / (2 * eps)
        np.testing.assert_allclose(basis.grad(p)[0, :, d], fd[0], atol=1e-7)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_interpolation_reproduces_polynomials(k):
    basis = reference_basis_tri(k)
    rng = np.random.default_rng(0)
    coeffs = {(a, b): rng.normal() for a in range(k + 1) for b in range(k + 1 - a)}

    def poly(x, y):
        return sum(c * x ** a * y ** b for (a, b), c in coeffs.items())

    vals = poly(basis.nodes[:, 0], basis.nodes[:, 1])
    pts, _ = triangle_quadrature(2 * k + 2)
    np.testing.assert_allclose(basis.eval(pts) @ vals, poly(pts[:, 0], pts[:, 1]), atol=1e-12)


@pytest.mark.parametrize("k", [0, 4])
def test_unsupported_degree(k):
    with pytest.raises(ValueError):
        lagrange_nodes(k)
    with pytest.raises(ValueError):
        reference_basis_tri(k)


def test_edge_basis():
    assert len(reference_basis_edge(0)) == 1
    np.testing.assert_allclose(reference_basis_edge(0).eval(np.linspace(0, 1, 5))[:, 0], 1.0)
    # degree 1 spans {1, s}: s is recovered from the two basis functions
    s = np.linspace(0, 1, 7)
    B = reference_basis_edge(1).eval(s)
    coef, *_ = np.linalg.lstsq(B, s, rcond=None)
    np.testing.assert_allclose(B @ coef, s, atol=1e-14)
    with pytest.raises(ValueError):
        reference_basis_edge(3)


def test_edge_gram_condition():
    s, w = edge_quadrature(6)
    B = reference_basis_edge(2).eval(s)
    gram = B.T @ (w[:, None] * B)
    assert np.linalg.cond(gram) < 100
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-13)


def test_dof_counts():
    assert [local_dof_count(k) for k in (1, 2, 3)] == [7, 13, 20]
    assert [rt_dof_count(k) for k in (1, 2, 3)] == [8, 15, 24]
    assert [bdm_dof_count(k) for k in (1, 2, 3)] == [6, 12, 20]
    assert local_dof_count(10) == 97


@pytest.mark.parametrize("k,n_u", [(1, 81), (2, 289), (3, 625)])
def test_layout_sizes(k, n_u):
    m = build_uniform_mesh((0, 1, 0, 1), 8)
    layout = build_dof_layout(m, k)
    assert (layout.n_u, layout.n_q, layout.n_lambda) == (n_u, k * 208, 128)


@given(st.integers(1, 3), st.integers(1, 6))
def test_layout_consistency(k, n):
    m = build_uniform_mesh((0, 1, 0, 1), n)
    layout = build_dof_layout(m, k)
    assert layout.n_u == m.n_vertices + (k - 1) * m.n_edges + comb(k - 1, 2) * m.n_triangles
    # every primal node used, and the local node positions map to the global coordinates
    assert set(np.unique(layout.cell_dofs)) == set(range(layout.n_u))
    basis = reference_basis_tri(k)
    p = m.vertices[m.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    phys = p[:, None, 0] + np.einsum("tab,nb->tna", J, basis.nodes)
    np.testing.assert_allclose(layout.node_coords[layout.cell_dofs], phys, atol=1e-13)
    # each flux dof belongs to exactly one edge
    assert sorted(layout.edge_dofs.ravel()) == list(range(layout.n_q))


def test_space_config_validation():
    assert SpaceConfig(2).quad_degree == 6 and SpaceConfig(2).n_edge_points == 4
    with pytest.raises(ValueError):
        SpaceConfig(4)
    with pytest.raises(ValueError):
        SpaceConfig(2, tri_degree=3)
