"""Command-line driver: ``cfofem {solve,converge,estimator,twophase,dofs}``.

Options may also come from a ``key=value`` file given with ``--config``; explicit
flags win over the file. Exit status is 0 on success, 2 for invalid configuration and
3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, field, fields

import numpy as np
import scipy

from . import __version__
from .analysis import CSV_COLUMNS, compute_errors, convergence_study, estimator_fields, fmt, write_field
from .assembly import H_MEASURES, CfoSolution, solve_cfo
from .fem import bdm_dof_count, build_dof_layout, local_dof_count, rt_dof_count
from .mesh import build_uniform_mesh
from .problems import InvalidProblemError, get_problem
from .solver import SolverError
from .twophase import CFLViolation, TwoPhaseConfig, read_config, run_simulation, write_snapshots

log = logging.getLogger("cfofem")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("solve", "converge", "estimator", "twophase", "dofs")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    case: int = 1
    variant: str = "full"
    k: int = 1
    betas: tuple[float, ...] = (1.0,)
    sizes: tuple[int, ...] = (8, 16, 32, 64)
    n: int = 16
    k_max: int = 3
    h_measure: str = "area"
    out: str = "out"
    twophase: TwoPhaseConfig | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.case not in (1, 2, 3, 4):
            raise ConfigError("case must be 1, 2, 3 or 4")
        if self.variant not in ("full", "shifted"):
            raise ConfigError("variant must be 'full' or 'shifted'")
        if self.k not in (1, 2, 3):
            raise ConfigError("k must be 1, 2 or 3")
        if not self.betas:
            raise ConfigError("beta list is empty")
        if not all(math.isfinite(b) for b in self.betas):
            raise ConfigError("beta values must be finite")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.h_measure not in H_MEASURES:
            raise ConfigError(f"h_measure must be one of {H_MEASURES}")
        if self.command == "converge":
            if len(self.sizes) < 2:
                raise ConfigError("a convergence study needs at least two sizes")
            for a, b in zip(self.sizes[:-1], self.sizes[1:]):
                if b != 2 * a:
                    raise ConfigError(f"sizes must double at each level, got {a} -> {b}")
        return self


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


# option name -> (flag, parser) per command; names double as config-file keys
_COMMON = {"out": ("--out", str)}
_PROBLEM = {"case": ("--case", int), "variant": ("--variant", str), "k": ("--k", int),
            "h_measure": ("--h-measure", str)}
_OPTIONS = {
    "solve": {**_COMMON, **_PROBLEM, "beta": ("--beta", float), "n": ("--n", int)},
    "estimator": {**_COMMON, **_PROBLEM, "beta": ("--beta", float), "n": ("--n", int)},
    "converge": {**_COMMON, **_PROBLEM, "beta": ("--beta", _floats), "sizes": ("--sizes", _ints)},
    "dofs": {"k_max": ("--k-max", int)},
    "twophase": {**_COMMON, "n": ("--n", int), "k": ("--k", int), "beta": ("--beta", float),
                 "end_time": ("--end-time", float), "snapshots": ("--snapshots", _floats),
                 "mu_w": ("--mu-w", float), "mu_o": ("--mu-o", float), "perm": ("--perm", str),
                 "seed": ("--seed", int), "perm_mean": ("--perm-mean", float),
                 "perm_variance": ("--perm-variance", float), "perm_corr_length": ("--perm-corr-length", float),
                 "perm_grid": ("--perm-grid", int), "cfl": ("--cfl", float), "dt": ("--dt", float),
                 "pressure_stride": ("--pressure-stride", int), "max_steps": ("--max-steps", int)},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfofem", description="Conservative flux optimization finite elements.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in _OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file; flags override its entries")
        for key, (flag, typ) in options.items():
            # strings are parsed later so errors map to exit status 2 with a clear message
            p.add_argument(flag, dest=key, default=None, type=str)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    options = _OPTIONS[args.command]
    values = {}
    if getattr(args, "config", None):
        try:
            file_values = read_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        unknown = sorted(set(file_values) - set(options))
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {unknown}")
        values.update(file_values)
    for key in options:
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    parsed = {}
    for key, raw in values.items():
        typ = options[key][1]
        try:
            parsed[key] = typ(raw)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"invalid value for {key}: {raw!r}") from None

    cfg = RunConfig(command=args.command)
    for key in ("case", "variant", "k", "n", "k_max", "h_measure", "out", "sizes"):
        if key in parsed and args.command != "twophase":
            setattr(cfg, key, parsed[key])
    if "beta" in parsed and args.command != "twophase":
        b = parsed["beta"]
        cfg.betas = b if isinstance(b, tuple) else (b,)
    if args.command == "twophase":
        if "out" in parsed:
            cfg.out = parsed.pop("out")
        try:
            cfg.twophase = TwoPhaseConfig.from_mapping(parsed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return cfg.validate()


def _manifest(cfg: RunConfig, argv, extra: dict | None = None) -> str:
    lines = [f"command={cfg.command}", f"argv={' '.join(argv)}", f"cfofem={__version__}",
             f"python={platform.python_version()}", f"numpy={np.__version__}", f"scipy={scipy.__version__}"]
    if cfg.twophase is not None:
        lines += [f"twophase.{line}" for line in cfg.twophase.to_text().splitlines()]
        lines.append("fluid_model=corey-quadratic")
    else:
        for f_ in fields(cfg):
            if f_.name in ("command", "twophase", "extra"):
                continue
            v = getattr(cfg, f_.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f_.name}={v}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_manifest(cfg: RunConfig, argv, extra=None) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "manifest.txt")
    with open(path, "w") as fh:
        fh.write(_manifest(cfg, argv, extra))
    return path


def _beta_tag(beta: float) -> str:
    return f"{beta:g}".replace("-", "m").replace(".", "p")


# -- commands ------------------------------------------------------------------------

def cmd_dofs(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    out.write(f"{'k':>3} {'CFO':>6} {'RT':>6} {'BDM':>6}\n")
    for k in range(1, cfg.k_max + 1):
        out.write(f"{k:>3} {local_dof_count(k):>6} {rt_dof_count(k):>6} {bdm_dof_count(k):>6}\n")
    return EXIT_OK


def _solve(cfg: RunConfig, beta: float) -> tuple[CfoSolution, object]:
    problem = get_problem(cfg.case, cfg.variant)
    mesh = build_uniform_mesh(problem.domain, cfg.n)
    sol = solve_cfo(mesh, problem, cfg.k, beta, layout=build_dof_layout(mesh, cfg.k), h_measure=cfg.h_measure)
    return sol, problem


def _write_vector(path, values) -> None:
    with open(path, "w") as fh:
        for i, v in enumerate(values):
            fh.write(f"{i} {fmt(float(v))}\n")


def cmd_solve(cfg: RunConfig, argv=(), out=None) -> int:
    out = out or sys.stdout
    beta = cfg.betas[0]
    sol, problem = _solve(cfg, beta)
    os.makedirs(cfg.out, exist_ok=True)
    _write_vector(os.path.join(cfg.out, "u.txt"), sol.u)
    _write_vector(os.path.join(cfg.out, "q.txt"), sol.q)
    write_field(os.path.join(cfg.out, "lambda.txt"), sol.lam)
    report = compute_errors(sol, problem, n_per_side=cfg.n)
    lines = [f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in report.as_dict().items()]
    with open(os.path.join(cfg.out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    out.write("\n".join(lines) + "\n")
    write_manifest(cfg, argv, {"mesh": sol.mesh_id, "residual": fmt(sol.info.residual)})
    return EXIT_OK


def cmd_converge(cfg: RunConfig, argv=(), out=None) -> int:
    out = out or sys.stdout
    problem = get_problem(cfg.case, cfg.variant)
    os.makedirs(cfg.out, exist_ok=True)
    written = []
    for beta in cfg.betas:
        table = convergence_study(problem, cfg.k, beta, cfg.sizes, h_measure=cfg.h_measure)
        name = f"case{cfg.case}{'' if cfg.variant == 'full' else '_' + cfg.variant}_k{cfg.k}_beta{_beta_tag(beta)}.csv"
        path = os.path.join(cfg.out, name)
        table.to_csv(path)
        written.append(name)
        out.write(f"# case {cfg.case} k={cfg.k} beta={beta:g}\n{table.format()}\n")
    write_manifest(cfg, argv, {"csv": ",".join(written), "columns": ",".join(CSV_COLUMNS)})
    return EXIT_OK


def cmd_estimator(cfg: RunConfig, argv=(), out=None) -> int:
    out = out or sys.stdout
    sol, problem = _solve(cfg, cfg.betas[0])
    est = estimator_fields(sol, problem)
    os.makedirs(cfg.out, exist_ok=True)
    write_field(os.path.join(cfg.out, "lambda_sq.txt"), est.lam_sq)
    write_field(os.path.join(cfg.out, "error_sq.txt"), est.err_sq)
    out.write(f"correlation={fmt(est.correlation)}\n")
    write_manifest(cfg, argv, {"mesh": sol.mesh_id, "correlation": fmt(est.correlation)})
    return EXIT_OK


def cmd_twophase(cfg: RunConfig, argv=(), out=None) -> int:
    out = out or sys.stdout
    tp = cfg.twophase
    result = run_simulation(tp)
    paths = write_snapshots(result, cfg.out)
    worst = max((s.balance_error for s in result.steps), default=0.0)
    out.write(f"steps={len(result.steps)} t={fmt(result.state.t)} mass={fmt(result.mass)} "
              f"injected={fmt(result.injected)} max_balance_error={fmt(worst)}\n")
    write_manifest(cfg, argv, {"snapshots": ",".join(os.path.basename(p) for p in paths),
                               "steps": len(result.steps), "seed": tp.seed})
    return EXIT_OK


_HANDLERS = {"solve": cmd_solve, "converge": cmd_converge, "estimator": cmd_estimator, "twophase": cmd_twophase}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"cfofem: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.command == "dofs":
        return cmd_dofs(cfg)
    try:
        return _HANDLERS[cfg.command](cfg, argv)
    except (InvalidProblemError, CFLViolation, SolverError, RuntimeError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"cfofem: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"cfofem: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
