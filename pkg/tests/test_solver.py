import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from cfofem.solver import RESIDUAL_TOL, SolverError, solve_spd, solve_symmetric_indefinite


def dense_elimination(A, b):
    """Gaussian elimination with partial pivoting, written out."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for i in range(n):
        p = i + np.argmax(np.abs(A[i:, i]))
        A[[i, p]], b[[i, p]] = A[[p, i]], b[[p, i]]
        for j in range(i + 1, n):
            m = A[j, i] / A[i, i]
            A[j, i:] -= m * A[i, i:]
            b[j] -= m * b[i]
    x = np.zeros(n)
    for i in reversed(range(n)):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


def test_swap_system():
    x, info = solve_symmetric_indefinite(sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]]), [1.0, 2.0])
    np.testing.assert_allclose(x, [2.0, 1.0])
    assert info.ok


def test_identity():
    b = np.arange(5.0)
    x, _ = solve_symmetric_indefinite(sp.identity(5), b)
    np.testing.assert_array_equal(x, b)


def test_random_indefinite():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(50, 50))
    M = A + A.T
    x_true = rng.normal(size=50)
    x, info = solve_symmetric_indefinite(sp.csr_matrix(M), M @ x_true)
    np.testing.assert_allclose(x, x_true, atol=1e-9)
    assert info.residual <= info.residual_bound


def test_saddle_structure():
    # [A B^T; B 0] with SPD A and full-rank B
    rng = np.random.default_rng(2)
    A = rng.normal(size=(8, 8))
    A = A @ A.T + 8 * np.eye(8)
    B = rng.normal(size=(3, 8))
    M = np.block([[A, B.T], [B, np.zeros((3, 3))]])
    x_true = rng.normal(size=11)
    x, _ = solve_symmetric_indefinite(sp.csr_matrix(M), M @ x_true)
    np.testing.assert_allclose(x, x_true, atol=1e-10)


def test_diagonal_spd():
    d = np.array([1.0, 2.0, 4.0, 8.0])
    b = np.array([3.0, 3.0, 3.0, 3.0])
    x, _ = solve_spd(sp.diags(d), b)
    np.testing.assert_allclose(x, b / d)


def test_laplacian_against_elimination():
    n = 10
    L = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    x, _ = solve_spd(L, np.ones(n))
    np.testing.assert_allclose(x, dense_elimination(L.toarray(), np.ones(n)), rtol=1e-12)


def test_hilbert():
    H = np.array([[1.0 / (i + j + 1) for j in range(5)] for i in range(5)])
    x, _ = solve_spd(H, H @ np.ones(5))
    np.testing.assert_allclose(x, np.ones(5), atol=1e-6)


def test_spd_rejects_indefinite():
    with pytest.raises(SolverError):
        solve_spd(sp.csr_matrix([[1.0, 0.0], [0.0, -1.0]]), [1.0, 1.0])


def test_singular_reported():
    with pytest.raises(SolverError):
        solve_symmetric_indefinite(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), [1.0, 2.0])


def test_deterministic():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(30, 30))
    M = sp.csr_matrix(A + A.T)
    b = rng.normal(size=30)
    x1, _ = solve_symmetric_indefinite(M, b)
    x2, _ = solve_symmetric_indefinite(M, b)
    assert x1.tobytes() == x2.tobytes()


@given(st.integers(2, 25), st.integers(0, 10_000))
def test_residual_contract(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    M = A + A.T + np.diag(rng.choice([-1, 1], n) * n)
    b = rng.normal(size=n)
    x, info = solve_symmetric_indefinite(sp.csr_matrix(M), b)
    bound = RESIDUAL_TOL * (np.abs(M).max() * np.abs(x).max() + np.abs(b).max())
    assert np.abs(M @ x - b).max() <= bound
    assert info.pivot_ratio > 0


def test_scaling_robustness():
    from cfofem.assembly import assemble_cfo
    from cfofem.fem import build_dof_layout
    from cfofem.mesh import build_uniform_mesh
    from cfofem.problems import test_case_4
    p = test_case_4()
    mesh = build_uniform_mesh(p.domain, 8)
    system = assemble_cfo(mesh, build_dof_layout(mesh, 2), p, 2.0)
    x1, _ = solve_symmetric_indefinite(system.matrix, system.rhs, scale=True)
    x2, _ = solve_symmetric_indefinite(system.matrix, system.rhs, scale=False)
    np.testing.assert_allclose(x1, x2, rtol=1e-8, atol=1e-8 * np.abs(x1).max())
