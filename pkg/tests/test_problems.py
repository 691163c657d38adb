import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfofem.assembly import assemble_stiffness, volume_tables
from cfofem.fem import build_dof_layout
from cfofem.mesh import build_uniform_mesh
from cfofem.problems import (CASE4_PARAMETERS, case4_subdomain, get_problem, homogeneous, polynomial_problem,
                             test_case_1, test_case_2, test_case_3, test_case_4)

PI = np.pi


def fd_source(problem, x, y, h=1e-5):
    """-div(alpha grad u) by central differences of the flux components."""
    def flux(px, py):
        a = problem.alpha(px, py, x, y)
        g = problem.grad_u(px, py, x, y)
        return a @ g

    dx = (flux(x + h, y)[0] - flux(x - h, y)[0]) / (2 * h)
    dy = (flux(x, y + h)[1] - flux(x, y - h)[1]) / (2 * h)
    return -(dx + dy)


def test_case1_values():
    p = test_case_1()
    assert p.f(0.0, 0.0) == pytest.approx(2 * PI ** 2)
    np.testing.assert_allclose(p.u(0.5, np.linspace(0, 1, 7)), 0.0, atol=1e-15)
    np.testing.assert_allclose(p.alpha(0.3, 0.4) @ np.array([1.0, -2.0]), [1.0, -2.0])


def test_case2_alpha():
    p = test_case_2()
    a = p.alpha(0.5, 0.5)
    np.testing.assert_allclose(a, [[1.5, 0.5 * 0.5 ** (2 / 3)], [0.5 * 0.5 ** (2 / 3), 1.5]], rtol=1e-14)
    assert np.all(np.linalg.eigvalsh(a) > 0)
    np.testing.assert_allclose(p.alpha(0.0, 0.0), np.eye(2))


@pytest.mark.parametrize("variant", ["full", "shifted"])
def test_case2_source_fd(variant):
    p = test_case_2(variant)
    for x, y in [(0.3, 0.7), (-0.45, 0.2), (-0.6, -0.35), (0.8, -0.15)]:
        if variant == "shifted" and (x < 0.1 or y < 0.1):
            continue
        assert p.f(x, y) == pytest.approx(fd_source(p, x, y), rel=1e-4)


def test_case2_bad_variant():
    with pytest.raises(ValueError):
        test_case_2("half")


def test_case3_interface():
    p = test_case_3()
    y = np.linspace(0, 1, 9)
    left = p.u(0.5, y, 0.25, 0.5)
    right = p.u(0.5, y, 0.75, 0.5)
    np.testing.assert_allclose(left, 4 + 4 * y - 2 * y ** 2)
    np.testing.assert_allclose(right, 4 + 4 * y - 2 * y ** 2)
    fl = np.einsum("...ij,...j->...i", p.alpha(0.5, y, 0.25, 0.5), p.grad_u(0.5, y, 0.25, 0.5))[:, 0]
    fr = np.einsum("...ij,...j->...i", p.alpha(0.5, y, 0.75, 0.5), p.grad_u(0.5, y, 0.75, 0.5))[:, 0]
    np.testing.assert_allclose(fl, 4 * y + 6)
    np.testing.assert_allclose(fr, 4 * y + 6)
    assert p.f(0.25, 0.3) == 4.0 and p.f(0.75, 0.3) == pytest.approx(-5.6)


@pytest.mark.parametrize("x,y", [(0.2, 0.6), (0.8, 0.1)])
def test_case3_source_fd(x, y):
    p = test_case_3()
    assert p.f(x, y) == pytest.approx(fd_source(p, x, y), rel=1e-6)


def test_case4_parameters():
    assert CASE4_PARAMETERS[3] == (1000.0, 100.0, 0.01)
    assert case4_subdomain(0.25, 0.25) == 2
    assert case4_subdomain(-0.25, 0.25) == 1
    assert case4_subdomain(0.25, -0.25) == 3
    assert case4_subdomain(-0.25, -0.25) == 4
    p = test_case_4()
    np.testing.assert_allclose(p.u(0.0, np.linspace(-1, 1, 9)), 0.0, atol=1e-15)
    s = np.sin(2 * PI * 0.25) ** 2
    assert p.f(0.25, 0.25) / s == pytest.approx((1 + 0.1) * 4 * PI ** 2 * 10)


@pytest.mark.parametrize("x,y", [(0.3, 0.7), (-0.3, 0.7), (-0.2, -0.6), (0.7, -0.4)])
def test_case4_source_fd(x, y):
    p = test_case_4()
    assert p.f(x, y) == pytest.approx(fd_source(p, x, y), rel=1e-4)


def test_case4_flux_continuity():
    # normal flux alpha grad u . n matches across both axes
    p = test_case_4()
    t = np.linspace(-0.9, 0.9, 7)
    for x_in, x_out in [(-0.1, 0.1)]:
        a = np.einsum("...ij,...j->...i", p.alpha(0.0, t, x_in, t), p.grad_u(0.0, t, x_in, t))[:, 0]
        b = np.einsum("...ij,...j->...i", p.alpha(0.0, t, x_out, t), p.grad_u(0.0, t, x_out, t))[:, 0]
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    a = np.einsum("...ij,...j->...i", p.alpha(t, 0.0, t, -0.1), p.grad_u(t, 0.0, t, -0.1))[:, 1]
    b = np.einsum("...ij,...j->...i", p.alpha(t, 0.0, t, 0.1), p.grad_u(t, 0.0, t, 0.1))[:, 1]
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("case", [1, 2, 3, 4])
def test_alpha_spd(case):
    p = get_problem(case)
    rng = np.random.default_rng(case)
    x0, x1, y0, y1 = p.domain
    x = rng.uniform(x0, x1, 10_000)
    y = rng.uniform(y0, y1, 10_000)
    assert np.linalg.eigvalsh(p.alpha(x, y, x, y)).min() > 0


@pytest.mark.parametrize("case", [1, 2, 3, 4])
def test_source_consistency(case):
    """Weak residual of the interpolated exact solution shrinks under refinement."""
    p = get_problem(case)
    res = []
    for n in (8, 16):
        mesh = build_uniform_mesh(p.domain, n)
        layout = build_dof_layout(mesh, 2)
        K, F = assemble_stiffness(mesh, layout, p)
        c = layout.node_coords
        # node values from the element side (continuous across the interfaces)
        u = p.u(c[:, 0], c[:, 1])
        r = K @ u - F
        interior = np.setdiff1d(np.arange(layout.n_u), layout.boundary_nodes)
        res.append(np.abs(r[interior]).max())
    assert res[1] < res[0] or res[1] < 1e-10  # case 3 lies in P2: roundoff only


def test_get_problem_rejects():
    with pytest.raises(ValueError):
        get_problem(5)


@given(st.dictionaries(st.tuples(st.integers(0, 2), st.integers(0, 2)), st.floats(-2, 2), min_size=1, max_size=4))
def test_polynomial_problem_consistent(coeffs):
    p = polynomial_problem(coeffs)
    x, y = 0.37, 0.61
    assert p.f(x, y) == pytest.approx(fd_source(p, x, y, h=1e-4), abs=1e-5)


def test_homogeneous():
    p = homogeneous()
    assert np.all(p.f(np.ones(3), np.ones(3)) == 0)
