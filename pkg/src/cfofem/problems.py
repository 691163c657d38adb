"""Manufactured elliptic test problems ``-div(alpha grad u) = f``, ``u = g`` on the boundary.

Every evaluator takes point coordinates ``x, y`` plus the centroid ``cx, cy`` of the
triangle the points belong to. Piecewise-defined data pick their branch from the
centroid, so interface traces are taken from inside the element.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .mesh import BOTTOM, LEFT, RIGHT, TOP

PI = np.pi
ALL_SIDES = (BOTTOM, RIGHT, TOP, LEFT)

Evaluator = Callable[..., np.ndarray]


class InvalidProblemError(ValueError):
    """Problem data violate the assumptions of the scheme (e.g. alpha not SPD)."""


@dataclass(frozen=True, eq=False)
class ProblemDefinition:
    name: str
    domain: tuple[float, float, float, float]
    alpha: Evaluator  # (x, y, cx, cy) -> (..., 2, 2)
    f: Evaluator  # (x, y, cx, cy) -> (...)
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    u: Evaluator | None = None
    grad_u: Evaluator | None = None  # (x, y, cx, cy) -> (..., 2)
    dirichlet_sides: tuple[int, ...] = ALL_SIDES
    # per-triangle constant coefficient; overrides ``alpha`` when set
    element_alpha: np.ndarray | None = field(default=None, repr=False)

    @property
    def has_exact(self) -> bool:
        return self.u is not None and self.grad_u is not None

    def exact_flux(self, x, y, cx, cy, normal) -> np.ndarray:
        """``-alpha grad u . n`` with alpha taken from the element owning the centroid."""
        if not self.has_exact:
            raise ValueError(f"problem {self.name!r} has no exact solution")
        a = self.alpha(x, y, cx, cy)
        gu = self.grad_u(x, y, cx, cy)
        return -np.einsum("...ij,...j,...i->...", a, gu, np.broadcast_to(normal, gu.shape))

    def with_element_alpha(self, element_alpha) -> "ProblemDefinition":
        return replace(self, element_alpha=np.asarray(element_alpha, dtype=float))


def _iso(shape, scale=1.0):
    out = np.zeros(tuple(shape) + (2, 2))
    out[..., 0, 0] = scale
    out[..., 1, 1] = scale
    return out


def _zeros_like(x, y, *_):
    return np.zeros(np.broadcast(x, y).shape)


# -- Test 1: smooth, alpha = I ------------------------------------------------

def _cc(x, y):
    return np.cos(PI * x) * np.cos(PI * y)


def _grad_cc(x, y, *_):
    return np.stack(np.broadcast_arrays(-PI * np.sin(PI * x) * np.cos(PI * y),
                                        -PI * np.cos(PI * x) * np.sin(PI * y)), axis=-1)


def test_case_1() -> ProblemDefinition:
    return ProblemDefinition(
        name="case1",
        domain=(0.0, 1.0, 0.0, 1.0),
        alpha=lambda x, y, *_: _iso(np.broadcast(x, y).shape),
        f=lambda x, y, *_: 2.0 * PI ** 2 * _cc(x, y),
        g=_cc,
        u=lambda x, y, *_: _cc(x, y),
        grad_u=_grad_cc,
    )


# -- Test 2: Hoelder continuous tensor ------------------------------------------

def _alpha2(x, y, *_):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    ax, ay = np.abs(x), np.abs(y)
    off = 0.5 * np.cbrt(ax) * np.cbrt(ay)
    out = np.empty(x.shape + (2, 2))
    out[..., 0, 0] = 1.0 + ax
    out[..., 1, 1] = 1.0 + ay
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    return out


def _f2(x, y, *_):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    ax, ay = np.abs(x), np.abs(y)
    sx, sy = np.sign(x), np.sign(y)
    sinx, cosx = np.sin(PI * x), np.cos(PI * x)
    siny, cosy = np.sin(PI * y), np.cos(PI * y)
    ux, uy = -PI * sinx * cosy, -PI * cosx * siny
    uxx = -PI ** 2 * cosx * cosy
    uyy = uxx
    uxy = PI ** 2 * sinx * siny
    a12 = 0.5 * np.cbrt(ax) * np.cbrt(ay)
    with np.errstate(divide="ignore", invalid="ignore"):
        # d/dx of 0.5 |x|^(1/3) |y|^(1/3); singular on the axes
        da12_dx = np.where(ax > 0, sx * a12 / (3.0 * ax), 0.0)
        da12_dy = np.where(ay > 0, sy * a12 / (3.0 * ay), 0.0)
    div = (sx * ux + (1.0 + ax) * uxx
           + da12_dx * uy + a12 * uxy
           + da12_dy * ux + a12 * uxy
           + sy * uy + (1.0 + ay) * uyy)
    return -div


def test_case_2(domain_variant: str = "full") -> ProblemDefinition:
    domains = {"full": (-1.0, 1.0, -1.0, 1.0), "shifted": (0.1, 1.0, 0.1, 1.0)}
    if domain_variant not in domains:
        raise ValueError(f"unknown domain variant {domain_variant!r}; use 'full' or 'shifted'")
    return ProblemDefinition(
        name=f"case2-{domain_variant}",
        domain=domains[domain_variant],
        alpha=_alpha2,
        f=_f2,
        g=_cc,
        u=lambda x, y, *_: _cc(x, y),
        grad_u=_grad_cc,
    )


# -- Test 3: discontinuous across x = 1/2, piecewise-quadratic solution ------------

_ALPHA3_RIGHT = np.array([[10.0, 3.0], [3.0, 1.0]])


def _right3(x, cx):
    return np.broadcast_to(np.asarray(cx if cx is not None else x) >= 0.5, np.shape(x))


def _u3(x, y, cx=None, cy=None):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    left = 1 - 2 * y ** 2 + 4 * x * y + 6 * x + 2 * y
    right = -2 * y ** 2 + 1.6 * x * y - 0.6 * x + 3.2 * y + 4.3
    return np.where(_right3(x, cx), right, left)


def _grad_u3(x, y, cx=None, cy=None):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    r = _right3(x, cx)
    gx = np.where(r, 1.6 * y - 0.6, 4 * y + 6)
    gy = np.where(r, -4 * y + 1.6 * x + 3.2, -4 * y + 4 * x + 2)
    return np.stack([gx, gy], axis=-1)


def _alpha3(x, y, cx=None, cy=None):
    x = np.broadcast_to(np.asarray(x, float), np.broadcast(x, y).shape)
    out = _iso(x.shape)
    out[_right3(x, cx)] = _ALPHA3_RIGHT
    return out


def test_case_3() -> ProblemDefinition:
    return ProblemDefinition(
        name="case3",
        domain=(0.0, 1.0, 0.0, 1.0),
        alpha=_alpha3,
        f=lambda x, y, cx=None, cy=None: np.where(
            _right3(np.broadcast_to(np.asarray(x, float), np.broadcast(x, y).shape), cx), -5.6, 4.0),
        g=lambda x, y: _u3(x, y),
        u=_u3,
        grad_u=_grad_u3,
    )


# -- Test 4: four quadrants with diagonal coefficients -------------------------------

# (alpha_x, alpha_y, amplitude) per subdomain 1..4
CASE4_PARAMETERS = {
    1: (100.0, 10.0, 0.1),
    2: (1.0, 0.1, 10.0),
    3: (1000.0, 100.0, 0.01),
    4: (0.1, 0.01, 100.0),
}


def case4_subdomain(x, y):
    """Subdomain id: 1 = (x<0, y>0), 2 = (x>0, y>0), 3 = (x>0, y<0), 4 = (x<0, y<0)."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    east = x >= 0
    north = y >= 0
    return np.where(north, np.where(east, 2, 1), np.where(east, 3, 4))


def _case4_params(x, y, cx, cy):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    sid = case4_subdomain(x if cx is None else np.broadcast_to(cx, x.shape),
                          y if cy is None else np.broadcast_to(cy, y.shape))
    table = np.array([CASE4_PARAMETERS[i] for i in (1, 2, 3, 4)])
    return np.moveaxis(table[sid - 1], -1, 0)  # ax, ay, amp


def _alpha4(x, y, cx=None, cy=None):
    ax, ay, _ = _case4_params(x, y, cx, cy)
    out = np.zeros(ax.shape + (2, 2))
    out[..., 0, 0] = ax
    out[..., 1, 1] = ay
    return out


def _u4(x, y, cx=None, cy=None):
    _, _, amp = _case4_params(x, y, cx, cy)
    return amp * np.sin(2 * PI * x) * np.sin(2 * PI * y)


def _grad_u4(x, y, cx=None, cy=None):
    _, _, amp = _case4_params(x, y, cx, cy)
    return np.stack([amp * 2 * PI * np.cos(2 * PI * x) * np.sin(2 * PI * y),
                     amp * 2 * PI * np.sin(2 * PI * x) * np.cos(2 * PI * y)], axis=-1)


def _f4(x, y, cx=None, cy=None):
    ax, ay, amp = _case4_params(x, y, cx, cy)
    return amp * (ax + ay) * 4 * PI ** 2 * np.sin(2 * PI * x) * np.sin(2 * PI * y)


def test_case_4() -> ProblemDefinition:
    return ProblemDefinition(
        name="case4",
        domain=(-1.0, 1.0, -1.0, 1.0),
        alpha=_alpha4,
        f=_f4,
        g=lambda x, y: _u4(x, y),
        u=_u4,
        grad_u=_grad_u4,
    )


# test_* names would be collected by pytest when imported into test modules
test_case_1.__test__ = False
test_case_2.__test__ = False
test_case_3.__test__ = False
test_case_4.__test__ = False


def homogeneous(domain=(0.0, 1.0, 0.0, 1.0), alpha: Evaluator | None = None) -> ProblemDefinition:
    """Zero source and zero boundary data; exact solution is zero."""
    return ProblemDefinition(
        name="homogeneous",
        domain=domain,
        alpha=alpha or (lambda x, y, *_: _iso(np.broadcast(x, y).shape)),
        f=_zeros_like,
        g=lambda x, y: _zeros_like(x, y),
        u=_zeros_like,
        grad_u=lambda x, y, *_: np.zeros(np.broadcast(x, y).shape + (2,)),
    )


def polynomial_problem(coeffs: dict[tuple[int, int], float], domain=(0.0, 1.0, 0.0, 1.0)) -> ProblemDefinition:
    """alpha = I with exact solution ``sum c x^a y^b``; used for exactness checks."""

    def u(x, y, *_):
        return sum(c * np.asarray(x, float) ** a * np.asarray(y, float) ** b for (a, b), c in coeffs.items()) \
            + _zeros_like(x, y)

    def grad(x, y, *_):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        gx = sum(c * a * x ** max(a - 1, 0) * y ** b for (a, b), c in coeffs.items() if a) + 0 * x
        gy = sum(c * b * x ** a * y ** max(b - 1, 0) for (a, b), c in coeffs.items() if b) + 0 * x
        return np.stack([gx, gy], axis=-1)

    def lap(x, y, *_):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = 0 * x
        for (a, b), c in coeffs.items():
            if a >= 2:
                out = out + c * a * (a - 1) * x ** (a - 2) * y ** b
            if b >= 2:
                out = out + c * b * (b - 1) * x ** a * y ** (b - 2)
        return -out

    return ProblemDefinition(
        name="polynomial",
        domain=domain,
        alpha=lambda x, y, *_: _iso(np.broadcast(x, y).shape),
        f=lap,
        g=lambda x, y: u(x, y),
        u=u,
        grad_u=grad,
    )


def get_problem(case: int, variant: str = "full") -> ProblemDefinition:
    if case == 1:
        return test_case_1()
    if case == 2:
        return test_case_2(variant)
    if case == 3:
        return test_case_3()
    if case == 4:
        return test_case_4()
    raise ValueError(f"unknown test case {case}; expected 1..4")
