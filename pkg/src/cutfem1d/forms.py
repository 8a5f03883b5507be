"""Nitsche bilinear forms on the broken space and the associated energy norm."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import GammaPoint, partition_pairwise
from .quadrature import GAUSS2, map_rule
from .space import BACKGROUND, OVERLAP, BrokenSpace, CooBuilder, RegionQuadrature, pairwise_basis


@dataclass(frozen=True)
class NitscheParams:
    gamma: float = 10.0
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        w1, w2 = self.weights
        if self.gamma < 0:
            raise ValueError(f"penalty gamma must be non-negative, got {self.gamma}")
        if not (0 <= w1 <= 1 and 0 <= w2 <= 1) or abs(w1 + w2 - 1) > 1e-14:
            raise ValueError(f"weights must be a convex pair, got {self.weights}")


def _traces(space: BrokenSpace, gp: GammaPoint):
    """One-sided basis data at ``gp``: Omega1 side (-sigma) then Omega2 side (+sigma)."""
    x = np.array([gp.s])
    t1 = space.field_basis(x, BACKGROUND, -gp.sigma)
    t2 = space.field_basis(x, OVERLAP, gp.sigma)
    return tuple(a[0] for a in t1), tuple(a[0] for a in t2)


def _jump(t1, t2):
    return np.concatenate([t1[0], t2[0]]), np.concatenate([t1[1], -t2[1]])


def _average(t1, t2, sigma, weights):
    w1, w2 = weights
    return np.concatenate([t1[0], t2[0]]), sigma * np.concatenate([w1 * t1[2], w2 * t2[2]])


def jump_data(space: BrokenSpace, gp: GammaPoint):
    """Dofs and coefficients of [v] = v1 - v2 at a Gamma point of the space's own configuration."""
    return _jump(*_traces(space, gp))


def average_normal_data(space: BrokenSpace, gp: GammaPoint, weights):
    """Dofs and coefficients of <d_n v> at ``gp``, with traces taken in ``space``.

    The sides of ``gp`` (Omega1 at -sigma, Omega2 at +sigma) come from the
    configuration that owns ``gp``; the function may belong to another one.
    """
    return _average(*_traces(space, gp), gp.sigma, weights)


def _gamma_rows(space_trace: BrokenSpace, space_avg: BrokenSpace, points, weights):
    """Stacked jump rows (from ``space_trace``) and average rows (from ``space_avg``) over ``points``."""
    jd, jv, ad, av = [], [], [], []
    for gp in points:
        tr = _traces(space_trace, gp)
        d, v = _jump(*tr)
        jd.append(d)
        jv.append(v)
        if space_avg is not space_trace:
            tr = _traces(space_avg, gp)
        d, v = _average(*tr, gp.sigma, weights)
        ad.append(d)
        av.append(v)
    h = np.array([gp.h_K for gp in points], dtype=float)
    return np.array(jd, dtype=int), np.array(jv), np.array(ad, dtype=int), np.array(av), h


def _stiffness_terms(space: BrokenSpace, weights, quad: RegionQuadrature | None = None):
    """(name, test dofs, test coeffs, trial dofs, trial coeffs, weights) for each piece."""
    cfg = space.config
    if quad is not None:
        yield "grad", quad.dofs, quad.ders, quad.dofs, quad.ders, quad.w
    else:
        for segs, field in ((cfg.omega1_segments, BACKGROUND), (cfg.omega2_segments, OVERLAP)):
            mid = 0.5 * (segs[:, 0] + segs[:, 1])
            d, _, g = space.field_basis(mid, field)
            yield "grad", d, g, d, g, segs[:, 1] - segs[:, 0]

    segs = cfg.overlap_segments
    if segs.shape[0]:
        mid = 0.5 * (segs[:, 0] + segs[:, 1])
        d0, _, g0 = space.field_basis(mid, BACKGROUND)
        d1, _, g1 = space.field_basis(mid, OVERLAP)
        d = np.concatenate([d0, d1], axis=1)
        g = np.concatenate([g0, -g1], axis=1)
        yield "overlap", d, g, d, g, segs[:, 1] - segs[:, 0]

    if cfg.gamma_points:
        jd, jv, ad, av, h = _gamma_rows(space, space, cfg.gamma_points, weights)
        ones = -np.ones(h.size)
        yield "consistency", jd, jv, ad, av, ones
        yield "consistency", ad, av, jd, jv, ones
        yield "penalty", jd, jv, jd, jv, 1.0 / h
        yield "average", ad, av, ad, av, h


_PARTS = ("grad", "overlap", "consistency", "penalty", "average")


@dataclass(frozen=True, eq=False)
class StiffnessParts:
    """Separately assembled pieces of A_n and of the energy norm."""

    grad: sp.csr_matrix
    overlap: sp.csr_matrix
    consistency: sp.csr_matrix
    penalty: sp.csr_matrix  # sum_Gamma h_K^-1 [w][v]
    average: sp.csr_matrix  # sum_Gamma h_K <d_n w><d_n v>

    def stiffness(self, gamma: float) -> sp.csr_matrix:
        return (self.grad + self.overlap + self.consistency + gamma * self.penalty).tocsr()

    @cached_property
    def energy(self) -> sp.csr_matrix:
        return (self.grad + self.overlap + self.penalty + self.average).tocsr()


def stiffness_parts(space: BrokenSpace, weights=(0.5, 0.5)) -> StiffnessParts:
    shape = (space.dim, space.dim)
    builders = {name: CooBuilder(shape) for name in _PARTS}
    for name, *term in _stiffness_terms(space, weights):
        builders[name].add(*term)
    return StiffnessParts(*(builders[name].tocsr() for name in _PARTS))


def stiffness_triplets(space: BrokenSpace, params: NitscheParams = NitscheParams(),
                       quad: RegionQuadrature | None = None):
    """Unsummed (rows, cols, data) of A_n; ``quad`` may supply precomputed basis data."""
    out = CooBuilder((space.dim, space.dim))
    for name, td, tv, rd, rv, w in _stiffness_terms(space, params.weights, quad):
        if name == "average":
            continue
        out.add(td, tv, rd, rv, params.gamma * w if name == "penalty" else w)
    return out.arrays()


def mass_triplets(space: BrokenSpace, quad: RegionQuadrature | None = None):
    """Unsummed (rows, cols, data) of the broken L2 mass matrix."""
    out = CooBuilder((space.dim, space.dim))
    if quad is not None:
        return out.add(quad.dofs, quad.vals, quad.dofs, quad.vals, quad.w).arrays()
    cfg = space.config
    for segs, field in ((cfg.omega1_segments, BACKGROUND), (cfg.omega2_segments, OVERLAP)):
        x, w = map_rule(segs, GAUSS2)
        d, v, _ = space.field_basis(x.ravel(), field)
        out.add(d, v, d, v, w.ravel())
    return out.arrays()


def _csr(triplets, n: int) -> sp.csr_matrix:
    rows, cols, data = triplets
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def assemble_stiffness(space: BrokenSpace, params: NitscheParams = NitscheParams(),
                       quad: RegionQuadrature | None = None) -> sp.csr_matrix:
    """Matrix of A_n (symmetric)."""
    return _csr(stiffness_triplets(space, params, quad), space.dim)


def assemble_mass(space: BrokenSpace, quad: RegionQuadrature | None = None) -> sp.csr_matrix:
    """Broken L2 mass: background functions on Omega1, overlap functions on Omega2."""
    return _csr(mass_triplets(space, quad), space.dim)


def assemble_special(space_n: BrokenSpace, space_m: BrokenSpace, params: NitscheParams = NitscheParams()) -> sp.csr_matrix:
    """Matrix of the pairwise form with v in V_{h,n} (columns), w in V_{h,m} (rows).

    The gradient term runs over the common refinement of both configurations;
    the Gamma_n term pairs [v] with <d_n w> and the Gamma_m term <d_n v> with [w].
    """
    out = CooBuilder((space_m.dim, space_n.dim))
    part = partition_pairwise(space_n.config, space_m.config)
    seg = part.segments
    mid = 0.5 * (seg[:, 0] + seg[:, 1])
    dn, _, gn = pairwise_basis(space_n, mid, part.label_n)
    dm, _, gm = pairwise_basis(space_m, mid, part.label_m)
    out.add(dm, gm, dn, gn, seg[:, 1] - seg[:, 0])
    if space_n.config.gamma_points:
        jd, jv, ad, av, h = _gamma_rows(space_n, space_m, space_n.config.gamma_points, params.weights)
        out.add(ad, av, jd, jv, -np.ones(h.size))
    if space_m.config.gamma_points:
        jd, jv, ad, av, h = _gamma_rows(space_m, space_n, space_m.config.gamma_points, params.weights)
        out.add(jd, jv, ad, av, -np.ones(h.size))
    return out.tocsr()


def energy_norm(space: BrokenSpace, coeffs, weights=(0.5, 0.5), parts: StiffnessParts | None = None) -> float:
    """Broken H1 seminorm plus h-weighted interface average/jump terms and the overlap gradient jump."""
    parts = parts or stiffness_parts(space, weights)
    v = np.asarray(coeffs, dtype=float)
    return float(np.sqrt(max(v @ (parts.energy @ v), 0.0)))


def jump_identity_check(A_plus, A_minus, B_plus, B_minus, w_plus, w_minus):
    """Both sides of [AB] = [A]<B> + <A>[B] + (w- - w+)[A][B]."""
    if abs(w_plus + w_minus - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {w_plus} + {w_minus}")
    jA, jB = A_plus - A_minus, B_plus - B_minus
    aA = w_plus * A_plus + w_minus * A_minus
    aB = w_plus * B_plus + w_minus * B_minus
    lhs = A_plus * B_plus - A_minus * B_minus
    rhs = jA * aB + aA * jB + (w_minus - w_plus) * jA * jB
    return lhs, rhs
