"""Command-line entry point: solve, convergence, stability and demo runs written as CSV."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import (
    MAIN_KEYS,
    StudyFailure,
    convergence_study,
    final_error,
    h_sweep,
    k_sweep,
    stability_probe,
)
from .forms import NitscheParams
from .geometry import InterfaceTrajectory, build_timeline, check_interior, demo_velocity
from .problems import PROBLEMS
from .space import eval_broken
from .timestepping import NumericalFailure, Trajectory, march, uniform_discretization

logger = logging.getLogger("cutfem1d")

COMMANDS = ("solve", "convergence", "stability", "demo")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(f"{name}: {message}")


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    t_final: float = 1.0
    slabs: Optional[int] = None
    k: Optional[float] = None
    h0: float = 1.0 / 64
    hg: Optional[float] = None
    g_start: float = 0.125
    g_length: float = 0.25
    mu: str = "0.6"
    gamma: float = 10.0
    q: int = 0
    sweep: Optional[str] = None
    points: Optional[str] = None
    out: str = "out.csv"
    tol: float = 1e-10
    problem: str = "manufactured"
    levels: int = 3

    @property
    def h_overlap(self) -> float:
        return self.hg if self.hg is not None else self.h0

    @property
    def velocity(self):
        if self.mu == "demo-sine":
            return demo_velocity
        return float(self.mu)

    @property
    def n_slabs(self) -> int:
        if self.slabs is not None:
            return self.slabs
        if self.k is not None:
            return int(round(self.t_final / self.k))
        return 64

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}, got {self.command!r}")
        for name in ("t_final", "h0", "g_length", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if self.hg is not None and not self.hg > 0:
            raise ConfigError("hg", "must be positive")
        if self.gamma < 0:
            raise ConfigError("gamma", "must be non-negative")
        if self.q not in (0, 1):
            raise ConfigError("q", f"dG order must be 0 or 1, got {self.q}")
        if self.slabs is not None and self.k is not None:
            raise ConfigError("slabs", "give either slabs or k, not both")
        if self.slabs is not None and self.slabs < 1:
            raise ConfigError("slabs", "must be a positive integer")
        if self.k is not None:
            if not self.k > 0:
                raise ConfigError("k", "must be positive")
            if abs(self.n_slabs * self.k - self.t_final) > 1e-9 * self.t_final:
                raise ConfigError("k", f"slab length {self.k} does not divide t_final = {self.t_final}")
        if self.mu != "demo-sine":
            try:
                if not math.isfinite(float(self.mu)):
                    raise ValueError
            except ValueError:
                raise ConfigError("mu", f"expected a number or 'demo-sine', got {self.mu!r}") from None
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"expected one of {', '.join(PROBLEMS)}, got {self.problem!r}")
        if self.levels < 2:
            raise ConfigError("levels", "need at least 2 refinement levels")
        if self.command == "convergence":
            parse_sweep(self.sweep)
            if self.points is not None:
                parse_points(self.points)
        if self.command in ("solve", "convergence"):
            self._check_geometry()
        return self

    def _check_geometry(self):
        traj = InterfaceTrajectory(self.g_start, self.g_length, self.velocity)
        tl = build_timeline(self.t_final, self.n_slabs)
        for n, a in enumerate(traj.positions(tl)):
            try:
                check_interior((a, a + self.g_length), traj.domain, n)
            except ValueError as exc:
                raise ConfigError("g_start", f"infeasible geometry: {exc}") from None


def parse_sweep(spec: Optional[str]):
    """``AXIS:J0:J1`` on the default dyadic grid, or ``AXIS:v1,v2,...`` explicitly."""
    if not spec:
        raise ConfigError("sweep", "convergence needs --sweep AXIS:J0:J1 or AXIS:v1,v2,...")
    axis, _, rest = spec.partition(":")
    if axis not in ("k", "h"):
        raise ConfigError("sweep", f"axis must be k or h, got {axis!r}")
    try:
        if "," in rest:
            values = [float(v) for v in rest.split(",")]
        else:
            j0, j1 = (int(v) for v in rest.split(":"))
            if not 1 <= j0 <= j1:
                raise ValueError
            values = None
    except ValueError:
        raise ConfigError("sweep", f"cannot parse {spec!r}") from None
    if values is None:
        return axis, (j0, j1)
    if any(v <= 0 for v in values) or any(b >= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep", "values must be positive and strictly decreasing")
    return axis, values


def parse_points(spec: str) -> tuple[int, int]:
    try:
        first, last = (int(v) for v in spec.split("-"))
    except ValueError:
        raise ConfigError("points", f"expected FIRST-LAST, got {spec!r}") from None
    if not 1 <= first < last:
        raise ConfigError("points", f"need 1 <= first < last, got {spec!r}")
    return first, last


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys use - or _."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("config", f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TYPES = {"t_final": float, "slabs": int, "k": float, "h0": float, "hg": float, "g_start": float,
          "g_length": float, "gamma": float, "q": int, "tol": float, "levels": int}


def build_config(values: dict) -> RunConfig:
    kwargs = {}
    for key, value in values.items():
        if key not in _FIELDS:
            raise ConfigError(key, "unknown setting")
        if value is None:
            continue
        conv = _TYPES.get(key, str)
        try:
            kwargs[key] = conv(value)
        except ValueError:
            raise ConfigError(key, f"cannot parse {value!r}") from None
    return RunConfig(**kwargs).validate()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutfem1d", description="1D heat equation on overlapping meshes with dG(q)cG(1) slabs")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--t-final", dest="t_final")
    p.add_argument("--slabs")
    p.add_argument("--k")
    p.add_argument("--h0")
    p.add_argument("--hg")
    p.add_argument("--g-start", dest="g_start")
    p.add_argument("--g-length", dest="g_length")
    p.add_argument("--mu", help="constant velocity or 'demo-sine'")
    p.add_argument("--gamma")
    p.add_argument("--q")
    p.add_argument("--sweep", help="AXIS:J0:J1 (k_j = T 2^-j, h_j = 2^(-j-2)) or AXIS:v1,v2,...")
    p.add_argument("--points", help="FIRST-LAST, 1-based inclusive fit range")
    p.add_argument("--out")
    p.add_argument("--tol")
    p.add_argument("--problem", help=f"one of {', '.join(PROBLEMS)}")
    p.add_argument("--levels", help="refinement levels for the stability command")
    return p


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path: Path, header: Sequence[str], rows, extra: Sequence[Sequence[str]] = ()):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
        for row in extra:
            w.writerow(row)


def sample_rows(traj: Trajectory):
    """(n, t_n, x, u_h) at every node of both meshes and at Gamma, for u_{h,n}^-."""
    for s in traj.slabs:
        cfg = s.space.config
        x = np.unique(np.concatenate([m.nodes for m in (cfg.mesh0, cfg.meshG) if m is not None]))
        u = eval_broken(s.space, s.final, x)
        # Dirichlet nodes carry no dof and evaluate to 0
        for xi, ui in zip(x, u):
            yield (str(s.n), s.t1, xi, ui)


def _discretization(cfg: RunConfig, q: Optional[int] = None):
    return uniform_discretization(
        cfg.h0, cfg.h_overlap, T=cfg.t_final, N=cfg.n_slabs, g_start=cfg.g_start,
        g_length=cfg.g_length, mu=cfg.velocity, params=NitscheParams(cfg.gamma), q=cfg.q if q is None else q,
        tol=cfg.tol,
    )


def _solve_to(cfg: RunConfig, out: Path, q: Optional[int] = None):
    problem = PROBLEMS[cfg.problem]()
    traj = march(problem, _discretization(cfg, q))
    _write_rows(out, ("n", "t", "x", "u_h"), sample_rows(traj))
    err = None
    if problem.exact is not None:
        err = final_error(traj, problem.exact_at(cfg.t_final))
        _write_rows(out.with_name(out.stem + "_error.csv"), ("t_final", "error"), [(cfg.t_final, err)])
    return traj, err


def run_solve(cfg: RunConfig) -> int:
    traj, err = _solve_to(cfg, Path(cfg.out))
    if err is not None:
        print(f"final_error,{_fmt(err)}")
    return EXIT_OK


def run_convergence(cfg: RunConfig) -> int:
    axis, grid = parse_sweep(cfg.sweep)
    if isinstance(grid, tuple):
        sweep = k_sweep(*grid, T=cfg.t_final) if axis == "k" else h_sweep(*grid)
    else:
        sweep = grid
    point_range = parse_points(cfg.points) if cfg.points else None
    if point_range and point_range[1] > len(sweep):
        raise ConfigError("points", f"range ends at {point_range[1]} but the sweep has {len(sweep)} points")
    fixed = cfg.h0 if axis == "k" else cfg.t_final / cfg.n_slabs
    report = convergence_study(
        axis, cfg.q, cfg.velocity, fixed, sweep, PROBLEMS[cfg.problem](), point_range,
        T=cfg.t_final, g_start=cfg.g_start, g_length=cfg.g_length, params=NitscheParams(cfg.gamma),
        progress=lambda r: logger.info("%s = %.6g: error %.6e (%.1f s)", axis, r.k if axis == "k" else r.h0,
                                       r.error, r.runtime),
    )
    first, last = report.point_range
    summary = ("slope", _fmt(report.slope), "points", f"{first}-{last}")
    _write_rows(Path(cfg.out), ("axis_value", "error"), report.points(), [summary])
    print(",".join(summary))
    return EXIT_OK


def run_stability(cfg: RunConfig) -> int:
    problem = PROBLEMS[cfg.problem]()
    if problem.f is not None:
        raise ConfigError("problem", "the stability command needs a problem with f = 0 (decay or zero)")
    k_base = cfg.t_final / cfg.n_slabs
    reports = stability_probe(problem, range(cfg.levels), q=cfg.q, h_base=cfg.h0, k_base=k_base,
                              T=cfg.t_final, mu=cfg.velocity, g_start=cfg.g_start, g_length=cfg.g_length,
                              params=NitscheParams(cfg.gamma))
    main = [f"main_{k}" for k in MAIN_KEYS]
    basic = sorted(reports[0].basic)
    strong = sorted(reports[0].strong)
    implied = list(reports[0].implied_constants())
    header = ["h", "k", "q", "u0_norm", "log_factor", *main, *(f"basic_{k}" for k in basic),
              *(f"strong_{k}" for k in strong), *(f"implied_{k}" for k in implied)]
    rows = []
    for r in reports:
        ic = r.implied_constants()
        rows.append([r.h, r.k, str(r.q), r.u0_norm, r.log_factor, *(r.main[k] for k in MAIN_KEYS),
                     *(r.basic[k] for k in basic), *(r.strong[k] for k in strong), *(ic[k] for k in implied)])
    _write_rows(Path(cfg.out), header, rows)
    return EXIT_OK


DEMO = dict(t_final=3.0, slabs=10, h0=1.0 / 21, hg=0.25 / 6, g_start=0.125, g_length=0.25, mu="demo-sine")


def demo_config(cfg: RunConfig) -> RunConfig:
    return dataclasses.replace(cfg, k=None, **DEMO).validate()


def run_demo(cfg: RunConfig) -> int:
    cfg = demo_config(cfg)
    out = Path(cfg.out)
    stem = out.with_suffix("")
    geometry = []
    for q in (0, 1):
        traj, _ = _solve_to(cfg, Path(f"{stem}_dg{q}.csv"), q)
        if q == 0:
            geometry = [(str(s.n), s.t1, *s.space.config.interval) for s in traj.slabs]
    _write_rows(Path(f"{stem}_geometry.csv"), ("n", "t", "a", "b"), geometry)
    return EXIT_OK


RUNNERS = {"solve": run_solve, "convergence": run_convergence, "stability": run_stability, "demo": run_demo}


def run(cfg: RunConfig) -> int:
    return RUNNERS[cfg.command](cfg)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        values = read_config_file(args.config) if args.config else {}
        values.update({k: v for k, v in vars(args).items() if k != "config" and v is not None})
        cfg = build_config(values)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, StudyFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
