"""dG(q)cG(1) slab systems and the sequential march over the timeline.

On slab n with spatial basis phi_i and temporal basis psi_a the unknowns are
interleaved as 2 i + a for q = 1.  With M, A the slab mass and stiffness:

    q = 0:  (M + k A) U = M_{n,n-1} U_{n-1}^- + int_{I_n} (f, phi) dt
    q = 1:  kron(M, D + J) + kron(A, k T),
            D = [[-1/2, 1/2], [-1/2, 1/2]], J = [[1, 0], [0, 0]],
            T = [[1/3, 1/6], [1/6, 1/3]]

with endpoint Lagrange functions psi_0 = (t_n - t)/k, psi_1 = (t - t_{n-1})/k.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .banded import BandedLU, BandedMatrix, SingularMatrixError
from .forms import NitscheParams, mass_triplets, stiffness_triplets
from .geometry import (
    CutConfig,
    InterfaceTrajectory,
    Mesh1D,
    SlabTimeline,
    build_cut_config,
    build_timeline,
    build_uniform_mesh,
    place_overlap_mesh,
    slab_interface,
)
from .problems import HeatProblem
from .quadrature import GAUSS3, LOBATTO3
from .space import BrokenSpace, RegionQuadrature, build_space, region_quadrature, transfer_load

logger = logging.getLogger(__name__)

TIME_DERIV = np.array([[-0.5, 0.5], [-0.5, 0.5]])
TIME_JUMP = np.array([[1.0, 0.0], [0.0, 0.0]])
TIME_MASS = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


class NumericalFailure(RuntimeError):
    """A slab solve failed; carries the slab index."""

    def __init__(self, n: int, cause: Exception):
        self.n = n
        super().__init__(f"slab {n}: {cause}")


@dataclass(frozen=True)
class Discretization:
    """Everything that fixes the discrete problem apart from the data."""

    mesh0: Mesh1D
    overlap_reference: Mesh1D
    trajectory: InterfaceTrajectory
    timeline: SlabTimeline
    params: NitscheParams = NitscheParams()
    q: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.q not in (0, 1):
            raise ValueError(f"dG order q must be 0 or 1, got {self.q}")

    @property
    def h0(self) -> float:
        return self.mesh0.h_max

    @property
    def hG(self) -> float:
        return self.overlap_reference.h_max

    def config(self, n: int) -> CutConfig:
        a, b = slab_interface(self.trajectory, self.timeline, n)
        meshG = place_overlap_mesh(self.overlap_reference, a)
        return build_cut_config(self.mesh0, meshG, (a, b), n, self.tol)


def uniform_discretization(
    h0: float,
    hG: float,
    *,
    T: float = 1.0,
    N: Optional[int] = None,
    k: Optional[float] = None,
    g_start: float = 0.125,
    g_length: float = 0.25,
    mu: Union[float, Callable[[float], float]] = 0.0,
    params: NitscheParams = NitscheParams(),
    q: int = 0,
    tol: float = 1e-10,
) -> Discretization:
    """Uniform meshes and slabs; exactly one of ``N`` and ``k`` is given."""
    if (N is None) == (k is None):
        raise ValueError("give exactly one of N (slab count) and k (slab length)")
    if N is None:
        N = int(round(T / k))
        if abs(N * k - T) > 1e-9 * T:
            raise ValueError(f"slab length {k} does not divide T = {T}")
    n0 = int(round(1.0 / h0))
    nG = int(round(g_length / hG))
    if n0 < 1 or nG < 1:
        raise ValueError("mesh sizes must be positive and no larger than the domain")
    return Discretization(
        mesh0=build_uniform_mesh(0.0, 1.0, n0),
        overlap_reference=build_uniform_mesh(0.0, g_length, nG),
        trajectory=InterfaceTrajectory(g_start, g_length, mu),
        timeline=build_timeline(T, N),
        params=params,
        q=q,
        tol=tol,
    )


class LoadAssembler:
    """Cached quadrature data for (g, phi_i) with gauss3 on every slab segment."""

    def __init__(self, space: BrokenSpace, quad: Optional[RegionQuadrature] = None):
        quad = quad if quad is not None else region_quadrature(space, GAUSS3)
        self.x = quad.x
        self.w = quad.w
        keep = quad.dofs >= 0
        self._dofs = quad.dofs[keep]
        self._rows = np.nonzero(keep)[0]
        self._vals = quad.vals[keep]
        self.dim = space.dim

    def load(self, values: np.ndarray) -> np.ndarray:
        """Vector (g, phi_i) given g sampled at ``self.x``."""
        weighted = (self.w * values)[self._rows] * self._vals
        return np.bincount(self._dofs, weights=weighted, minlength=self.dim)

    def __call__(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return self.load(np.asarray(g(self.x), dtype=float))


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Slab matrix kept as unsummed triplets; band storage and CSR are derived on demand."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    data: np.ndarray

    def matvec(self, x) -> np.ndarray:
        return np.bincount(self.rows, weights=self.data * np.asarray(x)[self.cols], minlength=self.n)

    def banded(self) -> BandedMatrix:
        return BandedMatrix.from_triplets(self.n, self.rows, self.cols, self.data)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, (self.rows, self.cols)), shape=(self.n, self.n))


def block_triplets(q: int, mass, stiffness, k: float, dim: int) -> BlockOperator:
    """Slab matrix from (rows, cols, data) of M and A; q = 1 interleaves unknowns as 2 i + a."""
    rm, cm, dm = mass
    ra, ca, da = stiffness
    if q == 0:
        return BlockOperator(dim, np.concatenate([rm, ra]), np.concatenate([cm, ca]),
                             np.concatenate([dm, k * da]))
    rows, cols, data = [], [], []
    for r, c, d, B in ((rm, cm, dm, TIME_DERIV + TIME_JUMP), (ra, ca, da, k * TIME_MASS)):
        for al in range(2):
            for be in range(2):
                rows.append(2 * r + al)
                cols.append(2 * c + be)
                data.append(B[al, be] * d)
    return BlockOperator(2 * dim, np.concatenate(rows), np.concatenate(cols), np.concatenate(data))


@dataclass(eq=False)
class SlabOperators:
    """Per-configuration data reused while the mesh does not move."""

    config: CutConfig
    space: BrokenSpace
    mass_triplets: tuple
    stiffness_triplets: tuple
    loads: LoadAssembler
    _blocks: dict = field(default_factory=dict)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        r, c, d = self.mass_triplets
        return sp.csr_matrix((d, (r, c)), shape=(self.space.dim,) * 2)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        r, c, d = self.stiffness_triplets
        return sp.csr_matrix((d, (r, c)), shape=(self.space.dim,) * 2)

    def block(self, q: int, k: float):
        """Block operator and its banded LU for slab length ``k`` (cached)."""
        key = (q, k)
        if key not in self._blocks:
            # summed entries keep the block triplet count at the true nonzero count
            M, A = self.mass.tocoo(), self.stiffness.tocoo()
            L = block_triplets(q, (M.row, M.col, M.data), (A.row, A.col, A.data), k, self.space.dim)
            self._blocks[key] = (L, L.banded().factorize())
        return self._blocks[key]


def slab_operators(cfg: CutConfig, params: NitscheParams) -> SlabOperators:
    space = build_space(cfg)
    quad = region_quadrature(space, GAUSS3)
    return SlabOperators(cfg, space, mass_triplets(space, quad), stiffness_triplets(space, params, quad),
                         LoadAssembler(space, quad))


def block_matrix(q: int, M, A, k: float) -> sp.csr_matrix:
    """Assembled slab matrix from sparse M and A."""
    if q == 0:
        return (M + k * A).tocsr()
    return (sp.kron(M, TIME_DERIV + TIME_JUMP) + sp.kron(A, k * TIME_MASS)).tocsr()


def source_load(q: int, loads: LoadAssembler, f, t0: float, t1: float) -> np.ndarray:
    """Time-integrated source: midpoint rule for q = 0, Lobatto-3 against psi_a for q = 1."""
    k = t1 - t0
    if q == 0:
        if f is None:
            return np.zeros(loads.dim)
        tm = 0.5 * (t0 + t1)
        return k * loads.load(f(loads.x, tm))
    out = np.zeros((loads.dim, 2))
    if f is None:
        return out.ravel()
    for tau, w in zip(LOBATTO3.nodes, LOBATTO3.weights):
        F = loads.load(f(loads.x, t0 + tau * k))
        out[:, 0] += k * w * (1.0 - tau) * F
        out[:, 1] += k * w * tau * F
    return out.ravel()


@dataclass(eq=False)
class SlabSystem:
    n: int
    q: int
    ops: SlabOperators
    carried: np.ndarray  # M_{n,n-1} U_{n-1}^-, or (u0, phi) on the first slab
    matrix: BlockOperator
    rhs: np.ndarray
    lu: Optional[BandedLU] = None

    @property
    def space(self) -> BrokenSpace:
        return self.ops.space

    def solve(self) -> np.ndarray:
        """Coefficients with shape (q + 1, dim): values at t_{n-1}^+ (and t_n^-)."""
        if self.lu is None:
            self.lu = self.matrix.banded().factorize()
        x = self.lu.solve(self.rhs)
        return x.reshape(-1, self.q + 1).T.copy() if self.q == 1 else x[None, :]

    def residual(self, coeffs: np.ndarray) -> float:
        """Normwise backward error max|L x - b| / max(|L| |x| + |b|).

        Scaling by |b| alone is not attainable in double precision once k/h^2 is
        large: the cancellation in L x already costs eps |L| |x|.
        """
        x = coeffs.T.ravel() if self.q == 1 else coeffs[0]
        L = self.matrix
        r = np.abs(L.matvec(x) - self.rhs).max()
        size = np.bincount(L.rows, weights=np.abs(L.data * x[L.cols]), minlength=L.n)
        scale = (size + np.abs(self.rhs)).max()
        return float(r / scale) if scale > 0 else float(r)


def assemble_slab(
    q: int,
    space_n: BrokenSpace,
    previous,
    timeline: SlabTimeline,
    n: int,
    params: NitscheParams = NitscheParams(),
    f=None,
    ops: Optional[SlabOperators] = None,
    coupling=None,
) -> SlabSystem:
    """Build the slab system.

    ``previous`` is either ``(space_{n-1}, U_{n-1}^-)`` or, on the first slab,
    the initial data as a callable of x.  ``coupling`` may pass a precomputed
    M_{n,n-1}.
    """
    if ops is None:
        ops = SlabOperators(space_n.config, space_n, mass_triplets(space_n),
                            stiffness_triplets(space_n, params), LoadAssembler(space_n))
    t0, t1 = timeline.slab(n)
    if previous is None:
        raise ValueError(f"slab {n}: previous solution or initial data is required")
    if callable(previous):
        carried = ops.loads(previous)
    else:
        space_prev, u_prev = previous
        u_prev = np.asarray(u_prev, dtype=float)
        if coupling is not None:
            carried = coupling @ u_prev
        else:
            carried = transfer_load(space_prev, u_prev, space_n)
    rhs = source_load(q, ops.loads, f, t0, t1)
    if q == 0:
        rhs = rhs + carried
    else:
        rhs[0::2] += carried
    L, lu = ops.block(q, t1 - t0)
    return SlabSystem(n, q, ops, carried, L, rhs, lu)


@dataclass(eq=False)
class SlabSolution:
    n: int
    t0: float
    t1: float
    space: BrokenSpace
    coeffs: np.ndarray  # (q + 1, dim)

    @property
    def final(self) -> np.ndarray:
        """Coefficients of u_{h,n}^-."""
        return self.coeffs[-1]

    @property
    def initial(self) -> np.ndarray:
        """Coefficients of u_{h,n-1}^+."""
        return self.coeffs[0]

    def at(self, t: float) -> np.ndarray:
        if self.coeffs.shape[0] == 1:
            return self.coeffs[0]
        s = (t - self.t0) / (self.t1 - self.t0)
        return (1 - s) * self.coeffs[0] + s * self.coeffs[1]


@dataclass(eq=False)
class Trajectory:
    disc: Discretization
    slabs: list
    max_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> SlabSolution:
        return self.slabs[-1]


def march(
    problem: HeatProblem,
    disc: Discretization,
    keep_history: bool = True,
    observer: Optional[Callable[[SlabSolution, Optional[SlabSolution], SlabSystem], None]] = None,
) -> Trajectory:
    """Solve slab by slab.

    With ``keep_history=False`` only the last slab is kept.  ``observer`` is
    called after every slab with (current, previous, system).
    """
    tl = disc.timeline
    positions = disc.trajectory.positions(tl)
    slabs: list = []
    prev: Optional[SlabSolution] = None
    ops: Optional[SlabOperators] = None
    ops_key = None
    max_res = 0.0
    for n in range(1, tl.N + 1):
        try:
            key = positions[n]
            moved = ops is None or key != ops_key
            if moved:
                cfg = disc.config(n)
                new_ops = slab_operators(cfg, disc.params)
            else:
                new_ops = ops
            if prev is None:
                previous = problem.u0
                coupling = None
            else:
                previous = (prev.space, prev.final)
                coupling = None if moved else new_ops.mass
            system = assemble_slab(disc.q, new_ops.space, previous, tl, n, disc.params, problem.f,
                                   ops=new_ops, coupling=coupling)
            coeffs = system.solve()
        except SingularMatrixError as exc:
            raise NumericalFailure(n, exc) from exc
        except ValueError as exc:
            raise NumericalFailure(n, exc) from exc
        ops, ops_key = new_ops, key
        res = system.residual(coeffs)
        max_res = max(max_res, res)
        t0, t1 = tl.slab(n)
        cur = SlabSolution(n, t0, t1, ops.space, coeffs)
        if observer is not None:
            observer(cur, prev, system)
        if keep_history or n == tl.N:
            slabs.append(cur)
        prev = cur
    if max_res > 1e-9:
        logger.warning("largest slab backward error %.3e exceeds 1e-9", max_res)
    return Trajectory(disc, slabs, max_res, {"gamma": disc.params.gamma, "q": disc.q,
                                             "h0": disc.h0, "hG": disc.hG,
                                             "k": float(tl.k.max()), "N": tl.N})
