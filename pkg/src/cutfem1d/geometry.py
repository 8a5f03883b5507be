"""Meshes, the slab timeline, the jumping overlap interval and its cut decomposition.

The domain is Omega0 = (x_0, x_end) of the background mesh.  On every slab the
overlapping mesh covers an interval G = (a, b); Omega2 = G, Omega1 is the rest,
and Gamma = {a, b}.  Omega_O is the part of Omega2 inside background cells
whose interior contains a Gamma point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

Velocity = Union[float, Callable[[float], float]]


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a mesh needs at least 2 nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    @property
    def quasi_uniformity(self) -> float:
        h = self.h
        return float(h.max() / h.min())

    def locate(self, x, direction: int = 1) -> np.ndarray:
        """Index of the cell holding ``x``, approached from ``direction`` (+1 right, -1 left)."""
        side = "right" if direction > 0 else "left"
        c = np.searchsorted(self.nodes, x, side=side) - 1
        return np.clip(c, 0, self.n_cells - 1)


def build_uniform_mesh(a: float, b: float, n_cells: int) -> Mesh1D:
    if int(n_cells) != n_cells or n_cells < 1:
        raise ValueError(f"n_cells must be a positive integer, got {n_cells!r}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    return Mesh1D(np.linspace(a, b, int(n_cells) + 1))


def place_overlap_mesh(reference: Mesh1D, start: float) -> Mesh1D:
    """Translate a reference overlap mesh so that its first node sits at ``start``."""
    return Mesh1D(reference.nodes - reference.nodes[0] + start)


@dataclass(frozen=True, eq=False)
class SlabTimeline:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a timeline needs at least one slab")
        if t[0] != 0.0:
            raise ValueError("timeline must start at t = 0")
        if not np.all(np.diff(t) > 0):
            raise ValueError("slab endpoints must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def k(self) -> np.ndarray:
        return np.diff(self.times)

    def slab(self, n: int) -> tuple[float, float]:
        """Endpoints (t_{n-1}, t_n) of slab ``n`` (1-based)."""
        if not 1 <= n <= self.N:
            raise IndexError(f"slab index {n} outside 1..{self.N}")
        return float(self.times[n - 1]), float(self.times[n])


def build_timeline(T: float, N: int) -> SlabTimeline:
    if not T > 0:
        raise ValueError(f"final time must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"number of slabs must be a positive integer, got {N!r}")
    times = np.linspace(0.0, T, int(N) + 1)
    times[-1] = T
    return SlabTimeline(times)


def demo_velocity(t: float) -> float:
    """Slabwise velocity of the demo run: 0.5 sin(2 pi t / 3)."""
    return 0.5 * np.sin(2.0 * np.pi * t / 3.0)


@dataclass(frozen=True)
class InterfaceTrajectory:
    """Overlap interval (a, a + length) moved by a slabwise constant velocity.

    The velocity on slab n is ``velocity(t_n)`` (or the constant itself) and the
    position is accumulated slab by slab: a_n = a_{n-1} + mu(t_n) k_n.
    """

    a0: float
    length: float
    velocity: Velocity = 0.0
    domain: tuple[float, float] = (0.0, 1.0)

    def speed(self, t: float) -> float:
        if callable(self.velocity):
            return float(self.velocity(t))
        return float(self.velocity)

    def positions(self, timeline: SlabTimeline) -> np.ndarray:
        """Left endpoints a_0..a_N."""
        t = timeline.times
        if callable(self.velocity):
            mu = np.array([self.speed(tn) for tn in t[1:]])
            return self.a0 + np.concatenate([[0.0], np.cumsum(mu * np.diff(t))])
        # constant speed: exact product avoids round-off drift from summation
        return self.a0 + float(self.velocity) * t


def check_interior(interval: tuple[float, float], domain=(0.0, 1.0), n: int | None = None):
    a, b = interval
    if not (domain[0] < a < b < domain[1]):
        where = f" on slab {n}" if n is not None else ""
        raise ValueError(f"overlap interval ({a:.17g}, {b:.17g}){where} is not strictly inside {domain}")


def slab_interface(traj: InterfaceTrajectory, timeline: SlabTimeline, n: int) -> tuple[float, float]:
    """Overlap interval held on slab ``n``; n = 0 gives the initial position."""
    if not 0 <= n <= timeline.N:
        raise IndexError(f"slab index {n} outside 0..{timeline.N}")
    a = float(traj.positions(timeline)[n])
    interval = (a, a + traj.length)
    check_interior(interval, traj.domain, n)
    return interval


@dataclass(frozen=True)
class GammaPoint:
    """One interface point.

    ``sigma`` is the outward normal of Omega1 (+1 at the left end of G).
    ``owner_cell`` is the background cell providing h_K; after snapping to a node
    it is the neighbour on the Omega2 side.
    """

    s: float
    sigma: int
    owner_cell: int
    h_K: float
    snapped: bool


@dataclass(frozen=True, eq=False)
class CutConfig:
    """Cut decomposition for one slab.  ``interval`` and ``meshG`` are None when no overlap mesh is present."""

    n: int
    interval: Optional[tuple[float, float]]
    mesh0: Mesh1D
    meshG: Optional[Mesh1D]
    gamma_points: tuple[GammaPoint, ...]
    omega1_segments: np.ndarray
    omega1_cells: np.ndarray
    omega2_segments: np.ndarray
    omega2_cells: np.ndarray
    overlap_segments: np.ndarray
    overlap_cells: np.ndarray  # (m, 2): background cell, overlap-mesh cell
    covered_background_dofs: frozenset = field(default_factory=frozenset)

    @property
    def a(self) -> float:
        return self.interval[0]

    @property
    def b(self) -> float:
        return self.interval[1]

    def region(self, x, direction: int = 0) -> np.ndarray:
        """Subdomain label (1 or 2) of points ``x``.

        ``direction`` selects the one-sided limit at Gamma; 0 puts Gamma in Omega1.
        """
        x = np.asarray(x, dtype=float)
        if self.interval is None:
            return np.ones(x.shape, dtype=int)
        a, b = self.interval
        if direction > 0:
            inside = (x >= a) & (x < b)
        elif direction < 0:
            inside = (x > a) & (x <= b)
        else:
            inside = (x > a) & (x < b)
        return np.where(inside, 2, 1)

    def measure(self, which: str) -> float:
        seg = {"1": self.omega1_segments, "2": self.omega2_segments, "O": self.overlap_segments}[which]
        return float(np.sum(seg[:, 1] - seg[:, 0])) if seg.size else 0.0


def _snap(s: float, mesh0: Mesh1D, tol: float) -> tuple[float, bool]:
    x = mesh0.nodes
    i = int(np.argmin(np.abs(x - s)))
    h = mesh0.h
    near = min(h[max(i - 1, 0)], h[min(i, mesh0.n_cells - 1)])
    if abs(x[i] - s) <= tol * near:
        return float(x[i]), True
    return s, False


def _pairs(points: np.ndarray) -> np.ndarray:
    return np.column_stack([points[:-1], points[1:]])


def build_cut_config(mesh0: Mesh1D, meshG: Mesh1D, interval, n: int = 0, tol: float = 1e-10) -> CutConfig:
    """Decompose the background domain for an overlap mesh on ``interval``.

    Interface points within ``tol * h_K`` of a background node are moved onto
    that node.  Such a point cuts no cell interior and contributes nothing to
    Omega_O.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    a, b = map(float, interval)
    x = mesh0.nodes
    check_interior((a, b), (x[0], x[-1]), n)
    slack = max(tol, 1e-14) * max(mesh0.h_max, meshG.h_max)
    if abs(meshG.nodes[0] - a) > slack or abs(meshG.nodes[-1] - b) > slack:
        raise ValueError(
            f"overlap mesh spans ({meshG.nodes[0]:.17g}, {meshG.nodes[-1]:.17g}), expected ({a:.17g}, {b:.17g})"
        )
    a, snap_a = _snap(a, mesh0, tol)
    b, snap_b = _snap(b, mesh0, tol)
    check_interior((a, b), (x[0], x[-1]), n)
    g_nodes = np.array(meshG.nodes)
    g_nodes[0], g_nodes[-1] = a, b
    meshG = Mesh1D(g_nodes)

    h = mesh0.h
    gammas = []
    for s, sigma, snapped in ((a, 1, snap_a), (b, -1, snap_b)):
        if snapped:
            node = int(np.searchsorted(x, s))
            owner = node if sigma > 0 else node - 1
        else:
            owner = int(mesh0.locate(s))
        gammas.append(GammaPoint(s, sigma, owner, float(h[owner]), snapped))

    left = np.concatenate([x[x < a], [a]])
    right = np.concatenate([[b], x[x > b]])
    om1 = np.concatenate([_pairs(left), _pairs(right)])
    om1_cells = mesh0.locate(0.5 * (om1[:, 0] + om1[:, 1]))

    om2 = _pairs(meshG.nodes)
    om2_cells = np.arange(meshG.n_cells)

    cut_cells = sorted({g.owner_cell for g in gammas if not g.snapped})
    ov, ov_cells = [], []
    for c in cut_cells:
        lo, hi = max(x[c], a), min(x[c + 1], b)
        if hi <= lo:
            continue
        inner = g_nodes[(g_nodes > lo) & (g_nodes < hi)]
        pts = np.concatenate([[lo], inner, [hi]])
        pieces = _pairs(pts)
        ov.append(pieces)
        mids = 0.5 * (pieces[:, 0] + pieces[:, 1])
        ov_cells.append(np.column_stack([np.full(len(pieces), c), meshG.locate(mids)]))
    if ov:
        overlap = np.concatenate(ov)
        overlap_cells = np.concatenate(ov_cells).astype(int)
    else:
        overlap = np.zeros((0, 2))
        overlap_cells = np.zeros((0, 2), dtype=int)

    interior = np.arange(1, mesh0.n_cells)
    covered = interior[(x[interior - 1] >= a) & (x[interior + 1] <= b)]

    for arr in (om1, om1_cells, om2, om2_cells, overlap, overlap_cells):
        arr.setflags(write=False)
    return CutConfig(
        n=n,
        interval=(a, b),
        mesh0=mesh0,
        meshG=meshG,
        gamma_points=tuple(gammas),
        omega1_segments=om1,
        omega1_cells=om1_cells,
        omega2_segments=om2,
        omega2_cells=om2_cells,
        overlap_segments=overlap,
        overlap_cells=overlap_cells,
        covered_background_dofs=frozenset(int(i) for i in covered),
    )


def build_background_config(mesh0: Mesh1D, n: int = 0) -> CutConfig:
    """Configuration without an overlap mesh: Omega1 is the whole domain."""
    x = mesh0.nodes
    om1 = _pairs(x)
    empty = np.zeros((0, 2))
    return CutConfig(
        n=n,
        interval=None,
        mesh0=mesh0,
        meshG=None,
        gamma_points=(),
        omega1_segments=om1,
        omega1_cells=np.arange(mesh0.n_cells),
        omega2_segments=empty,
        omega2_cells=np.zeros(0, dtype=int),
        overlap_segments=empty,
        overlap_cells=np.zeros((0, 2), dtype=int),
    )


@dataclass(frozen=True, eq=False)
class PairPartition:
    """Segments of Omega0 labelled by subdomain in two configurations."""

    segments: np.ndarray
    label_n: np.ndarray
    label_m: np.ndarray

    def length(self, i: int, j: int) -> float:
        sel = (self.label_n == i) & (self.label_m == j)
        seg = self.segments[sel]
        return float(np.sum(seg[:, 1] - seg[:, 0]))


def _merge_points(points: np.ndarray, eps: float) -> np.ndarray:
    p = np.sort(points)
    keep = np.concatenate([[True], np.diff(p) > eps])
    return p[keep]


def partition_pairwise(cfg_n: CutConfig, cfg_m: CutConfig) -> PairPartition:
    """Common refinement of two configurations.

    Segments are split at the nodes of every mesh and at both interface sets, so
    each segment sits inside one cell of each mesh in each configuration.
    """
    x0 = cfg_n.mesh0.nodes
    if cfg_m.mesh0.nodes.shape != x0.shape or not np.array_equal(cfg_m.mesh0.nodes, x0):
        # same domain is required; differing background meshes still work
        if cfg_m.mesh0.nodes[0] != x0[0] or cfg_m.mesh0.nodes[-1] != x0[-1]:
            raise ValueError("configurations live on different domains")
    meshes = [cfg_n.mesh0, cfg_m.mesh0, cfg_n.meshG, cfg_m.meshG]
    pts = np.concatenate([m.nodes for m in meshes if m is not None])
    scale = x0[-1] - x0[0]
    pts = _merge_points(pts, 1e-14 * scale)
    seg = _pairs(pts)
    mid = 0.5 * (seg[:, 0] + seg[:, 1])
    return PairPartition(seg, cfg_n.region(mid), cfg_m.region(mid))
