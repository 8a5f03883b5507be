"""Error measurement, convergence studies with least-squares slopes, and stability probes."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .banded import BandedMatrix
from .forms import NitscheParams, stiffness_parts
from .problems import HeatProblem, manufactured_problem
from .quadrature import GAUSS3, composite
from .space import l2_distance, region_quadrature
from .timestepping import Discretization, SlabSolution, SlabSystem, march, uniform_discretization

AXES = ("k", "h")


def final_error(traj, exact: Callable[[np.ndarray], np.ndarray], subdivide: int = 1) -> float:
    """||u(T) - u_{h,N}^-|| over Omega0 with gauss3 on every segment of the final configuration.

    Omega1 segments never straddle a background node and Omega2 segments are
    overlap-mesh cells, so the discrete function is linear on each of them.
    ``subdivide`` splits every segment further (used as a quadrature oracle).
    """
    last: SlabSolution = traj.final
    quad = region_quadrature(last.space, composite(GAUSS3, subdivide))
    c = last.final
    uh = np.sum(np.where(quad.dofs >= 0, c[np.maximum(quad.dofs, 0)], 0.0) * quad.vals, axis=-1)
    return float(np.sqrt(np.sum(quad.w * (np.asarray(exact(quad.x)) - uh) ** 2)))


def _select(points, point_range):
    pts = list(points)
    if point_range is None:
        return pts
    first, last = point_range
    if not 1 <= first <= last <= len(pts):
        raise ValueError(f"point range {first}-{last} outside 1-{len(pts)}")
    return pts[first - 1:last]


def lls_slope(points: Sequence[tuple[float, float]], point_range: Optional[tuple[int, int]] = None) -> float:
    """Slope of the least-squares line through (log x, log e).

    ``point_range`` is a 1-based inclusive (first, last) pair; all points by default.
    """
    pts = np.asarray(_select(points, point_range), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(pts <= 0):
        raise ValueError("step sizes and errors must be positive")
    lx, le = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("all step sizes are equal; the slope is undefined")
    return float(np.polyfit(lx, le, 1)[0])


def k_sweep(first: int = 1, last: int = 15, T: float = 1.0) -> list[float]:
    """k_j = T 2^-j."""
    return [T * 2.0 ** (-j) for j in range(first, last + 1)]


def h_sweep(first: int = 1, last: int = 15) -> list[float]:
    """h_j = 2^(-j-2)."""
    return [2.0 ** (-j - 2) for j in range(first, last + 1)]


@dataclass(frozen=True)
class ConvergenceRow:
    h0: float
    hG: float
    k: float
    error: float
    runtime: float


@dataclass
class ConvergenceReport:
    axis: str
    q: int
    mu: float
    rows: list[ConvergenceRow]
    point_range: tuple[int, int]
    slope: float = float("nan")

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if any(not r.error > 0 for r in self.rows):
            raise ValueError("errors must be positive")
        if len(self.rows) >= 2:
            self.slope = lls_slope(self.points(), self.point_range)

    def axis_value(self, row: ConvergenceRow) -> float:
        return row.k if self.axis == "k" else row.h0

    def points(self) -> list[tuple[float, float]]:
        return [(self.axis_value(r), r.error) for r in self.rows]

    @property
    def runtime(self) -> float:
        return float(sum(r.runtime for r in self.rows))


class StudyFailure(RuntimeError):
    """A run inside a convergence study failed; names its parameters."""


def convergence_study(
    axis: str,
    q: int,
    mu,
    fixed: float,
    sweep: Sequence[float],
    problem: Optional[HeatProblem] = None,
    point_range: Optional[tuple[int, int]] = None,
    *,
    T: float = 1.0,
    g_start: float = 0.125,
    g_length: float = 0.25,
    params: NitscheParams = NitscheParams(),
    progress: Optional[Callable[[ConvergenceRow], None]] = None,
) -> ConvergenceReport:
    """One march per sweep value; the h axis moves h0 and hG together.

    ``fixed`` is the mesh size for a k sweep and the slab length for an h sweep.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    sweep = [float(v) for v in sweep]
    if any(v <= 0 for v in sweep) or any(b >= a for a, b in zip(sweep, sweep[1:])):
        raise ValueError("sweep values must be positive and strictly decreasing")
    problem = problem or manufactured_problem()
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    rows = []
    for value in sweep:
        h, k = (fixed, value) if axis == "k" else (value, fixed)
        start = time.perf_counter()
        try:
            disc = uniform_discretization(h, h, T=T, k=k, g_start=g_start, g_length=g_length,
                                          mu=mu, params=params, q=q)
            traj = march(problem, disc, keep_history=False)
            err = final_error(traj, problem.exact_at(T))
        except Exception as exc:
            raise StudyFailure(f"run with axis={axis}, q={q}, mu={mu}, h={h:.17g}, k={k:.17g} failed: {exc}") from exc
        row = ConvergenceRow(h, h, k, err, time.perf_counter() - start)
        rows.append(row)
        if progress is not None:
            progress(row)
    mu_value = float("nan") if callable(mu) else float(mu)
    return ConvergenceReport(axis, q, mu_value, rows, point_range or (1, len(rows)))


# --- stability -------------------------------------------------------------

MAIN_KEYS = ("final", "dudt", "laplacian", "jumps")


@dataclass
class StabilityReport:
    """Stability quantities of one run with f = 0.

    ``main`` holds the terms of the L1-in-time estimate, ``basic`` the squared
    energy terms and ``strong`` the t_n-weighted terms.  Implied constants divide
    by (log(t_N/k_1) + 1)^(1/2) ||u0|| (main) or ||u0||^2 (basic, strong).
    """

    h: float
    k: float
    q: int
    u0_norm: float
    log_factor: float
    main: dict = field(default_factory=dict)
    basic: dict = field(default_factory=dict)
    strong: dict = field(default_factory=dict)

    def __post_init__(self):
        for part in (self.main, self.basic, self.strong):
            for key, val in part.items():
                if not val >= 0:
                    raise ValueError(f"stability quantity {key} is negative or undefined: {val}")

    @property
    def main_total(self) -> float:
        return float(sum(self.main[k] for k in MAIN_KEYS))

    def implied_constants(self) -> dict:
        out = {}
        if self.u0_norm == 0:
            return {key: 0.0 for key in (*MAIN_KEYS, "main_total", "basic_total", "strong_total")}
        scale = self.log_factor * self.u0_norm
        for key in MAIN_KEYS:
            out[key] = self.main[key] / scale
        out["main_total"] = self.main_total / scale
        out["basic_total"] = sum(self.basic.values()) / self.u0_norm**2
        out["strong_total"] = sum(self.strong.values()) / self.u0_norm**2
        return out


class _StabilityObserver:
    """Accumulates the stability quantities slab by slab during a march."""

    def __init__(self, u0, params: NitscheParams):
        self.u0 = u0
        self.params = params
        self.main = dict.fromkeys(MAIN_KEYS, 0.0)
        self.basic = {"final_sq": 0.0, "energy_sq": 0.0, "jumps_sq": 0.0}
        self.strong = {"dudt_sq": 0.0, "laplacian_sq": 0.0, "jumps_sq": 0.0}

    def _initial_jump(self, cur: SlabSolution) -> float:
        quad = region_quadrature(cur.space, composite(GAUSS3, 2))
        c = cur.initial
        uh = np.sum(np.where(quad.dofs >= 0, c[np.maximum(quad.dofs, 0)], 0.0) * quad.vals, axis=-1)
        return float(np.sqrt(np.sum(quad.w * (uh - self.u0(quad.x)) ** 2)))

    def __call__(self, cur: SlabSolution, prev: Optional[SlabSolution], system: SlabSystem):
        M = system.ops.mass
        A = system.ops.stiffness
        E = stiffness_parts(cur.space, self.params.weights).energy
        lu = BandedMatrix.from_sparse(M).factorize()
        k = cur.t1 - cur.t0
        U = cur.coeffs

        def l2(v):
            return math.sqrt(max(float(v @ (M @ v)), 0.0))

        lap = [lu.solve(-(A @ u)) for u in U]
        # time integrals with gauss3 on (t0, t1); U is linear in time for q = 1
        lap_l1, lap_sq, en_sq = 0.0, 0.0, 0.0
        for tau, w in zip(GAUSS3.nodes, GAUSS3.weights):
            if len(U) == 1:
                z, v = lap[0], U[0]
            else:
                z = (1 - tau) * lap[0] + tau * lap[1]
                v = (1 - tau) * U[0] + tau * U[1]
            nz = l2(z)
            lap_l1 += k * w * nz
            lap_sq += k * w * nz**2
            en_sq += k * w * max(float(v @ (E @ v)), 0.0)
        dudt = l2(U[-1] - U[0]) / k if len(U) > 1 else 0.0

        if prev is None:
            jump = self._initial_jump(cur)
        else:
            jump = l2_distance(cur.space, cur.initial, prev.space, prev.final)

        self.main["dudt"] += k * dudt
        self.main["laplacian"] += lap_l1
        self.main["jumps"] += jump
        self.main["final"] = l2(cur.final)
        self.basic["final_sq"] = l2(cur.final) ** 2
        self.basic["energy_sq"] += en_sq
        self.basic["jumps_sq"] += jump**2
        self.strong["dudt_sq"] += cur.t1 * k * dudt**2
        self.strong["laplacian_sq"] += cur.t1 * lap_sq
        if prev is not None:
            self.strong["jumps_sq"] += cur.t1 / k * jump**2


def l2_norm_smooth(u, n_segments: int = 256) -> float:
    """||u|| on (0, 1) by gauss3 on uniform segments."""
    edges = np.linspace(0.0, 1.0, n_segments + 1)
    x = edges[:-1, None] + np.diff(edges)[:, None] * GAUSS3.nodes
    w = np.diff(edges)[:, None] * GAUSS3.weights
    return float(np.sqrt(np.sum(w * np.asarray(u(x)) ** 2)))


def stability_run(problem: HeatProblem, disc: Discretization) -> StabilityReport:
    if problem.f is not None:
        raise ValueError("the stability probe needs f = 0")
    obs = _StabilityObserver(problem.u0, disc.params)
    march(problem, disc, keep_history=False, observer=obs)
    tl = disc.timeline
    log_factor = math.sqrt(math.log(tl.T / float(tl.k[0])) + 1.0)
    return StabilityReport(disc.h0, float(tl.k.max()), disc.q, l2_norm_smooth(problem.u0),
                           log_factor, *({key: float(v) for key, v in part.items()}
                                         for part in (obs.main, obs.basic, obs.strong)))


def stability_probe(
    problem: HeatProblem,
    levels: Sequence[int] = (0, 1, 2),
    *,
    q: int = 0,
    h_base: float = 1.0 / 16,
    k_base: float = 1.0 / 16,
    T: float = 1.0,
    mu=0.6,
    g_start: float = 0.125,
    g_length: float = 0.25,
    params: NitscheParams = NitscheParams(),
) -> list[StabilityReport]:
    """Stability reports along a simultaneous dyadic (h, k) refinement."""
    reports = []
    for level in levels:
        h, k = h_base * 2.0**-level, k_base * 2.0**-level
        disc = uniform_discretization(h, h, T=T, k=k, g_start=g_start, g_length=g_length,
                                      mu=mu, params=params, q=q)
        reports.append(stability_run(problem, disc))
    return reports


def monotone_growth(values: Sequence[float], threshold: float = 0.10) -> bool:
    """True when the values increase strictly and the last exceeds the first by more than ``threshold``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return False
    increasing = bool(np.all(np.diff(v) > 0))
    return bool(increasing and v[0] > 0 and v[-1] / v[0] - 1.0 > threshold)
