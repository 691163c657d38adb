"""Operator-splitting driver for incompressible two-phase flow (no gravity, no capillarity).

Pressure: ``-div(lambda(S) kappa grad p) = 0`` solved with the CFO scheme, so the edge
flux is conservative on every triangle. Saturation: ``S_t + div(v f(S)) = 0`` advanced
with explicit first-order upwinding on the same triangles.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .analysis import conservation_audit
from .assembly import CfoSolution, edge_flux_integrals, solve_cfo
from .fem import build_dof_layout
from .mesh import BOTTOM, LEFT, RIGHT, TOP, TriMesh, build_uniform_mesh
from .problems import ProblemDefinition, _iso, _zeros_like

log = logging.getLogger(__name__)

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)


class CFLViolation(ValueError):
    """Requested time step exceeds the stability bound."""

    def __init__(self, dt: float, dt_max: float):
        super().__init__(f"time step {dt:.6e} violates the CFL bound; use dt <= {dt_max:.6e}")
        self.dt = dt
        self.suggested_dt = dt_max


# -- permeability --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PermeabilityField:
    """Cell-wise scalar permeability on a uniform ``nx x ny`` grid over the unit square.

    ``log_kappa[j, i]`` belongs to the cell in column ``i`` (x) and row ``j`` (y, from
    the bottom).
    """

    log_kappa: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.log_kappa, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise ValueError("log-permeability must be a non-empty 2D grid")
        if not np.all(np.isfinite(a)):
            raise ValueError("log-permeability contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        ny, nx = self.log_kappa.shape
        return nx, ny

    @property
    def kappa(self) -> np.ndarray:
        return np.exp(self.log_kappa)

    def cell_of(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        i = np.clip(np.floor(points[:, 0] * nx).astype(int), 0, nx - 1)
        j = np.clip(np.floor(points[:, 1] * ny).astype(int), 0, ny - 1)
        return i, j

    def on_mesh(self, mesh: TriMesh) -> np.ndarray:
        """Permeability of each triangle, taken from the cell holding its centroid."""
        i, j = self.cell_of(mesh.centroids)
        return self.kappa[j, i]


def read_permeability(path) -> PermeabilityField:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'nx ny' header")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ValueError(f"{path}: malformed header {tokens[:2]!r}") from None
    if nx < 1 or ny < 1:
        raise ValueError(f"{path}: grid dimensions must be positive")
    body = tokens[2:]
    if len(body) != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {len(body)}")
    try:
        values = np.array([float(v) for v in body])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    return PermeabilityField(values.reshape(ny, nx))


def write_permeability(field_: PermeabilityField, path) -> None:
    nx, ny = field_.shape
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny}\n")
        for row in field_.log_kappa:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def synthetic_permeability(nx: int, ny: int, mean: float = 0.0, variance: float = 1.0,
                           correlation_length: float = 0.1, seed: int = 0) -> PermeabilityField:
    """Log-normal field: Gaussian-filtered white noise rescaled to the requested moments."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if correlation_length <= 0:
        raise ValueError("correlation length must be positive")
    if variance == 0:
        return PermeabilityField(np.full((ny, nx), float(mean)))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((ny, nx))
    kx = np.fft.fftfreq(nx, d=1.0 / nx) * 2 * np.pi
    ky = np.fft.fftfreq(ny, d=1.0 / ny) * 2 * np.pi
    KX, KY = np.meshgrid(kx, ky)
    filt = np.exp(-0.25 * correlation_length ** 2 * (KX ** 2 + KY ** 2))
    g = np.real(np.fft.ifft2(np.fft.fft2(noise) * filt))
    std = g.std()
    g = (g - g.mean()) / std if std > 0 else np.zeros_like(g)
    return PermeabilityField(mean + math.sqrt(variance) * g)


def load_permeability(source, **synthetic) -> PermeabilityField:
    """``source`` is a grid file path or ``"synthetic"`` (keywords as in
    :func:`synthetic_permeability`)."""
    if isinstance(source, PermeabilityField):
        return source
    if source == "synthetic":
        return synthetic_permeability(**synthetic)
    return read_permeability(source)


# -- fluid model ------------------------------------------------------------------------

@dataclass(frozen=True)
class Fluids:
    """Quadratic Corey relative permeabilities; water viscosity ``mu_w``, oil ``mu_o``."""

    mu_w: float = 1.0
    mu_o: float = 1.0

    def __post_init__(self):
        if not (self.mu_w > 0 and self.mu_o > 0):
            raise ValueError("viscosities must be positive")

    def mobility(self, s):
        s = np.asarray(s, dtype=float)
        return s ** 2 / self.mu_w + (1 - s) ** 2 / self.mu_o

    def fractional_flow(self, s):
        s = np.asarray(s, dtype=float)
        return (s ** 2 / self.mu_w) / self.mobility(s)

    def max_dfds(self, samples: int = 2001) -> float:
        """``max f'`` on [0, 1], from central differences on a fine grid."""
        s = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.abs(np.gradient(self.fractional_flow(s), s))))


# -- state and steps ------------------------------------------------------------------

@dataclass(eq=False)
class TwoPhaseState:
    S: np.ndarray  # per-triangle saturation
    p: np.ndarray | None = None  # pressure coefficients
    q: np.ndarray | None = None  # edge flux coefficients
    t: float = 0.0
    dt: float = 0.0
    edge_flux: np.ndarray | None = None  # int_e q ds along n_e


def initial_state(mesh: TriMesh, s0: float = 0.0) -> TwoPhaseState:
    return TwoPhaseState(S=np.full(mesh.n_triangles, float(s0)))


def no_flow_edges(mesh: TriMesh) -> np.ndarray:
    return np.flatnonzero(np.isin(mesh.edge_side, (BOTTOM, TOP)))


def pressure_problem(mesh: TriMesh, mobility: np.ndarray) -> ProblemDefinition:
    """``p = 1`` at x = 0, ``p = 0`` at x = 1, no source; coefficient per triangle."""
    return ProblemDefinition(
        name="pressure",
        domain=mesh.domain,
        alpha=lambda x, y, *_: _iso(np.broadcast(x, y).shape),
        f=_zeros_like,
        g=lambda x, y: 1.0 - np.asarray(x, dtype=float) + _zeros_like(x, y),
        dirichlet_sides=(LEFT, RIGHT),
        element_alpha=np.asarray(mobility, dtype=float),
    )


def pressure_step(state: TwoPhaseState, kappa: np.ndarray, mesh: TriMesh, k: int = 1, beta: float = 1.0,
                  fluids: Fluids = Fluids(), layout=None, audit_tol: float = 1e-9) -> CfoSolution:
    """CFO pressure solve with the frozen saturation; updates ``p``, ``q`` and edge fluxes."""
    S = state.S
    if np.any(S < -1e-12) or np.any(S > 1 + 1e-12):
        raise ValueError("saturation outside [0, 1]")
    problem = pressure_problem(mesh, fluids.mobility(S) * kappa)
    layout = layout or build_dof_layout(mesh, k)
    sol = solve_cfo(mesh, problem, k, beta, layout=layout, with_ritz=False,
                    fixed_flux_edges=no_flow_edges(mesh))
    worst, _, _ = conservation_audit(sol, problem)
    if worst > audit_tol:
        raise RuntimeError(f"pressure flux is not conservative: residual {worst:.3e}")
    state.p, state.q = sol.u, sol.q
    state.edge_flux = edge_flux_integrals(mesh, layout, sol.q)
    return sol


def cfl_limit(mesh: TriMesh, edge_flux: np.ndarray, fluids: Fluids = Fluids(), safety: float = 0.9) -> float:
    """``safety * min_D |D| / (max f' * sum_e |int_e q ds|)``."""
    out = np.abs(edge_flux)[mesh.tri_edges].sum(axis=1)
    speed = fluids.max_dfds() * out
    with np.errstate(divide="ignore"):
        ratio = np.where(speed > 0, mesh.areas / np.where(speed > 0, speed, 1.0), np.inf)
    return float(safety * ratio.min())


def boundary_saturation(mesh: TriMesh, inflow: float = 1.0) -> np.ndarray:
    """Ghost saturation per boundary edge: ``inflow`` at x = 0, zero elsewhere."""
    ghost = np.zeros(mesh.n_edges)
    ghost[mesh.edge_side == LEFT] = inflow
    return ghost


def upwind_fluxes(mesh: TriMesh, S: np.ndarray, edge_flux: np.ndarray, fluids: Fluids, inflow: float = 1.0):
    """Phase flux ``F_e = Q_e f(S_upwind)`` along each edge normal ``n_e``.

    The triangle whose outward normal agrees with ``n_e`` is upstream when ``Q_e > 0``.
    """
    plus = np.full(mesh.n_edges, -1)  # triangle with outward normal == n_e
    minus = np.full(mesh.n_edges, -1)
    t_idx = np.repeat(np.arange(mesh.n_triangles), 3)
    e_idx = mesh.tri_edges.ravel()
    sg = mesh.tri_signs.ravel()
    plus[e_idx[sg > 0]] = t_idx[sg > 0]
    minus[e_idx[sg < 0]] = t_idx[sg < 0]
    ghost = boundary_saturation(mesh, inflow)
    s_plus = np.where(plus >= 0, S[np.maximum(plus, 0)], ghost)
    s_minus = np.where(minus >= 0, S[np.maximum(minus, 0)], ghost)
    s_up = np.where(edge_flux > 0, s_plus, s_minus)
    return edge_flux * fluids.fractional_flow(s_up)


def transport_step(state: TwoPhaseState, mesh: TriMesh, dt: float, fluids: Fluids = Fluids(),
                   inflow: float = 1.0, safety: float = 0.9) -> TwoPhaseState:
    """Explicit upwind update ``S_D -= dt/|D| sum_e sigma F_e``; rejects CFL violations."""
    if state.edge_flux is None:
        raise ValueError("transport step needs a pressure solve first")
    dt_max = cfl_limit(mesh, state.edge_flux, fluids, safety)
    if dt > dt_max * (1 + 1e-12):
        raise CFLViolation(dt, dt_max)
    F = upwind_fluxes(mesh, state.S, state.edge_flux, fluids, inflow)
    net = (mesh.tri_signs * F[mesh.tri_edges]).sum(axis=1)
    state.S = state.S - dt / mesh.areas * net
    state.t += dt
    state.dt = dt
    return state


def boundary_exchange(mesh: TriMesh, S: np.ndarray, edge_flux: np.ndarray, fluids: Fluids,
                      inflow: float = 1.0) -> float:
    """Net water inflow rate through the domain boundary."""
    F = upwind_fluxes(mesh, S, edge_flux, fluids, inflow)
    b = mesh.boundary_edges
    t = mesh.edge_tris[b, 0]
    local = np.argmax(mesh.tri_edges[t] == b[:, None], axis=1)
    sign = mesh.tri_signs[t, local]
    return float(-(sign * F[b]).sum())


# -- driver ------------------------------------------------------------------------

@dataclass
class TwoPhaseConfig:
    n: int = 32
    k: int = 1
    beta: float = 1.0
    end_time: float = 0.02
    snapshots: tuple[float, ...] = (0.02,)
    mu_w: float = 1.0
    mu_o: float = 1.0
    perm: str = "synthetic"
    seed: int = 0
    perm_mean: float = 0.0
    perm_variance: float = 1.0
    perm_corr_length: float = 0.1
    perm_grid: int = 0  # cells per side of the synthetic field; 0 means n
    cfl: float = 0.9
    dt: float = 0.0  # 0 picks the CFL step every step
    pressure_stride: int = 1
    max_steps: int = 0  # 0 means unlimited

    def __post_init__(self):
        self.snapshots = tuple(sorted(float(s) for s in self.snapshots))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.k not in (1, 2, 3):
            raise ValueError("k must be 1, 2 or 3")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")
        if self.end_time < 0 or any(s < 0 or s > self.end_time for s in self.snapshots):
            raise ValueError("snapshot times must lie in [0, end_time]")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl safety factor must be in (0, 1]")
        if self.dt < 0 or self.pressure_stride < 1 or self.max_steps < 0:
            raise ValueError("dt, pressure_stride and max_steps must be non-negative (stride >= 1)")
        Fluids(self.mu_w, self.mu_o)

    @property
    def fluids(self) -> Fluids:
        return Fluids(self.mu_w, self.mu_o)

    def permeability(self) -> PermeabilityField:
        grid = self.perm_grid or self.n
        return load_permeability(self.perm, nx=grid, ny=grid, mean=self.perm_mean, variance=self.perm_variance,
                                 correlation_length=self.perm_corr_length, seed=self.seed)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "TwoPhaseConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise ValueError(f"unknown two-phase config keys: {sorted(unknown)}")
        kw = {}
        for key, raw in values.items():
            kw[key] = _coerce(key, raw, getattr(cls, key, None) if key != "snapshots" else ())
        return cls(**kw)


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if key == "snapshots":
            return tuple(float(s) for s in raw.split(",") if s.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ValueError(f"invalid value for {key}: {raw!r}") from None
    return raw


def read_config(path) -> dict:
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


@dataclass
class StepRecord:
    t: float
    dt: float
    mass: float
    exchanged: float  # dt * boundary inflow rate
    balance_error: float
    s_min: float
    s_max: float


@dataclass
class SimulationResult:
    mesh: TriMesh
    state: TwoPhaseState
    snapshots: dict = field(default_factory=dict)  # time -> saturation copy
    steps: list = field(default_factory=list)
    injected: float = 0.0

    @property
    def mass(self) -> float:
        return float(np.sum(self.state.S * self.mesh.areas))


def run_simulation(config: TwoPhaseConfig, permeability: PermeabilityField | None = None,
                   callback=None) -> SimulationResult:
    """Alternate pressure and transport steps until ``end_time`` (or ``max_steps``)."""
    fluids = config.fluids
    mesh = build_uniform_mesh(UNIT_SQUARE, config.n)
    layout = build_dof_layout(mesh, config.k)
    kappa = (permeability or config.permeability()).on_mesh(mesh)
    state = initial_state(mesh)
    result = SimulationResult(mesh=mesh, state=state)
    pending = list(config.snapshots)
    while pending and pending[0] <= state.t:
        result.snapshots[pending.pop(0)] = state.S.copy()

    step = 0
    while state.t < config.end_time * (1 - 1e-14):
        if config.max_steps and step >= config.max_steps:
            break
        if step % config.pressure_stride == 0:
            pressure_step(state, kappa, mesh, config.k, config.beta, fluids, layout)
        dt_max = cfl_limit(mesh, state.edge_flux, fluids, config.cfl)
        dt = config.dt if config.dt > 0 else dt_max
        target = pending[0] if pending else config.end_time
        dt = min(dt, target - state.t)
        mass0 = float(np.sum(state.S * mesh.areas))
        rate = boundary_exchange(mesh, state.S, state.edge_flux, fluids)
        transport_step(state, mesh, dt, fluids, safety=config.cfl)
        mass1 = float(np.sum(state.S * mesh.areas))
        result.injected += dt * rate
        rec = StepRecord(t=state.t, dt=dt, mass=mass1, exchanged=dt * rate,
                         balance_error=abs(mass1 - mass0 - dt * rate),
                         s_min=float(state.S.min()), s_max=float(state.S.max()))
        result.steps.append(rec)
        if callback:
            callback(state, rec)
        step += 1
        while pending and pending[0] <= state.t * (1 + 1e-14):
            result.snapshots[pending.pop(0)] = state.S.copy()
    log.info("two-phase run finished: t=%.4g after %d steps", state.t, step)
    return result


def write_snapshot(path, t: float, S: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(f"{t:.6e}\n")
        for i, s in enumerate(S):
            fh.write(f"{i} {s:.6e}\n")


def write_snapshots(result: SimulationResult, directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for t, S in sorted(result.snapshots.items()):
        path = os.path.join(directory, f"saturation_t{t:.6e}.txt")
        write_snapshot(path, t, S)
        paths.append(path)
    return paths


def config_dict(config: TwoPhaseConfig) -> dict:
    return asdict(config)
