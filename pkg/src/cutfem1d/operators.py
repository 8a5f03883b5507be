"""Analysis operators on the broken space: projections, discrete Laplacian, shift, interpolants.

Every operator is a linear solve with the slab mass or stiffness matrix.  The
``*_rhs`` builders are public so callers can re-check the defining equations.
"""

from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .banded import banded_solve
from .forms import (
    NitscheParams,
    assemble_mass,
    assemble_special,
    assemble_stiffness,
    average_normal_data,
    jump_data,
)
from .problems import SmoothFunction
from .quadrature import GAUSS3
from .space import BACKGROUND, OVERLAP, BrokenSpace, region_quadrature, scatter_vector, transfer_load

DiscreteFunction = tuple  # (space, coeffs)


def relative_residual(matrix, x, rhs) -> float:
    """max |matrix @ x - rhs| / max |rhs| (absolute when rhs vanishes)."""
    r = np.abs(matrix @ np.asarray(x) - rhs).max(initial=0.0)
    scale = np.abs(rhs).max(initial=0.0)
    return float(r / scale) if scale > 0 else float(r)


def l2_rhs(space: BrokenSpace, w: Union[Callable, DiscreteFunction]) -> np.ndarray:
    """(w, phi_i) for a callable (gauss3 per segment) or a discrete function of any configuration."""
    if isinstance(w, tuple):
        other, coeffs = w
        return transfer_load(other, coeffs, space)
    quad = region_quadrature(space, GAUSS3)
    return scatter_vector(quad.dofs, quad.vals, quad.w * w(quad.x), space.dim)


def l2_project(space: BrokenSpace, w: Union[Callable, DiscreteFunction]) -> np.ndarray:
    """P_n w: solves M x = (w, phi_i)."""
    return banded_solve(assemble_mass(space), l2_rhs(space, w))


def ritz_rhs(space: BrokenSpace, w: SmoothFunction, params: NitscheParams = NitscheParams()) -> np.ndarray:
    """A_n(w, phi_i) for smooth w, where [w] and the overlap gradient jump vanish."""
    if w.derivative is None:
        raise ValueError("the Ritz projection needs the derivative of w")
    quad = region_quadrature(space, GAUSS3)
    rhs = scatter_vector(quad.dofs, quad.ders, quad.w * w.derivative(quad.x), space.dim)
    for gp in space.config.gamma_points:
        dofs, coef = jump_data(space, gp)
        dn = gp.sigma * float(w.derivative(np.array([gp.s]))[0])
        keep = dofs >= 0
        np.add.at(rhs, dofs[keep], -dn * coef[keep])
    return rhs


def ritz_project(space: BrokenSpace, w: SmoothFunction, params: NitscheParams = NitscheParams()) -> np.ndarray:
    """R_n w: solves A_n x = A_n(w, .)."""
    return banded_solve(assemble_stiffness(space, params), ritz_rhs(space, w, params))


def discrete_laplacian(space: BrokenSpace, coeffs, params: NitscheParams = NitscheParams()) -> np.ndarray:
    """Delta_n v: solves M z = -A_n v."""
    v = np.asarray(coeffs, dtype=float)
    return banded_solve(assemble_mass(space), -(assemble_stiffness(space, params) @ v))


def shift(space_n: BrokenSpace, space_m: BrokenSpace, coeffs, params: NitscheParams = NitscheParams()) -> np.ndarray:
    """S_{n,m} v: solves A_m x = A_{n,m}(v, .) for v in V_{h,n}."""
    rhs = assemble_special(space_n, space_m, params) @ np.asarray(coeffs, dtype=float)
    return banded_solve(assemble_stiffness(space_m, params), rhs)


def spatial_interp(space: BrokenSpace, w: Callable) -> np.ndarray:
    """Nodal interpolant: w at every active background node and every overlap node."""
    # Dirichlet nodes carry no dof, so the interpolant vanishes there
    return np.array(w(space.dof_coords), dtype=float)


def temporal_interp(q: int, v: Callable[[float], np.ndarray], t0: float, t1: float) -> np.ndarray:
    """Power-basis coefficients (lowest degree first) of the temporal interpolant on (t0, t1].

    q = 0 gives the constant v(t1); q = 1 the line matching v(t1) and the
    integral of v over the interval (gauss3 in time).
    """
    if q not in (0, 1):
        raise ValueError(f"q must be 0 or 1, got {q}")
    if not t1 > t0:
        raise ValueError(f"need t0 < t1, got ({t0}, {t1})")
    end = np.asarray(v(t1), dtype=float)
    if q == 0:
        return end[None, ...]
    k = t1 - t0
    integral = sum(k * wq * np.asarray(v(t0 + k * tq), dtype=float)
                   for tq, wq in zip(GAUSS3.nodes, GAUSS3.weights))
    slope = 2.0 * (k * end - integral) / k**2
    return np.stack([end - slope * t1, slope])


def energy_error(space: BrokenSpace, w: SmoothFunction, coeffs, params: NitscheParams = NitscheParams()) -> float:
    """|||w - v||| for smooth w and discrete v; [w] and the overlap gradient jump of w vanish."""
    c = np.asarray(coeffs, dtype=float)

    def apply(dofs, coef):
        return np.sum(np.where(dofs >= 0, c[np.maximum(dofs, 0)], 0.0) * coef, axis=-1)

    quad = region_quadrature(space, GAUSS3)
    total = np.sum(quad.w * (w.derivative(quad.x) - apply(quad.dofs, quad.ders)) ** 2)
    segs = space.config.overlap_segments
    if segs.shape[0]:
        mid = 0.5 * (segs[:, 0] + segs[:, 1])
        d0, _, g0 = space.field_basis(mid, BACKGROUND)
        d1, _, g1 = space.field_basis(mid, OVERLAP)
        total += np.sum((segs[:, 1] - segs[:, 0]) * (apply(d0, g0) - apply(d1, g1)) ** 2)
    for gp in space.config.gamma_points:
        jd, jv = jump_data(space, gp)
        ad, av = average_normal_data(space, gp, params.weights)
        dn = gp.sigma * float(w.derivative(np.array([gp.s]))[0])
        total += gp.h_K * (dn - apply(ad, av)) ** 2 + apply(jd, jv) ** 2 / gp.h_K
    return float(np.sqrt(total))
