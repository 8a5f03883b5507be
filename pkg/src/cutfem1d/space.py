"""The broken P1 space: background hats on Omega1, overlap-mesh hats on Omega2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import CutConfig, partition_pairwise
from .quadrature import GAUSS2, GAUSS3, QuadRule, map_rule

BACKGROUND, OVERLAP = 0, 1


def _hats(nodes: np.ndarray, x: np.ndarray, cells: np.ndarray):
    xl, xr = nodes[cells], nodes[cells + 1]
    h = xr - xl
    vals = np.stack([(xr - x) / h, (x - xl) / h], axis=-1)
    ders = np.stack([-1.0 / h, 1.0 / h], axis=-1)
    return vals, ders


@dataclass(frozen=True, eq=False)
class BrokenSpace:
    """Degrees of freedom of V_h on one slab.

    Active background dofs are the interior background nodes that are not
    covered; all overlap-mesh nodes are dofs.  Global numbers follow node
    coordinates, background first on ties, which keeps system matrices banded.
    """

    config: CutConfig
    bg_dof: np.ndarray  # background node -> global dof or -1
    g_dof: np.ndarray  # overlap node -> global dof
    dof_coords: np.ndarray
    dof_kind: np.ndarray
    dof_node: np.ndarray
    degree: int = 1

    @property
    def dim(self) -> int:
        return int(self.dof_coords.size)

    @property
    def mesh0(self):
        return self.config.mesh0

    @property
    def meshG(self):
        return self.config.meshG

    @property
    def n_background(self) -> int:
        return int(np.count_nonzero(self.dof_kind == BACKGROUND))

    def field_basis(self, x, field: int, direction: int = 1):
        """Local hat data of one mesh at points ``x``.

        Returns (dofs, values, derivatives), each of shape x.shape + (2,);
        inactive background nodes carry dof -1.
        """
        x = np.asarray(x, dtype=float)
        if field == BACKGROUND:
            mesh, table = self.mesh0, self.bg_dof
        else:
            mesh, table = self.meshG, self.g_dof
            if mesh is None:
                if x.size:
                    raise ValueError("this configuration has no overlap mesh")
                empty = np.zeros(x.shape + (2,))
                return empty.astype(int), empty, empty
        cells = mesh.locate(x, direction)
        vals, ders = _hats(mesh.nodes, x, cells)
        dofs = np.stack([table[cells], table[cells + 1]], axis=-1)
        return dofs, vals, ders

    def basis(self, x, direction: int = 0):
        """Broken basis data at ``x``; the subdomain is chosen per point.

        ``direction`` = +1/-1 takes one-sided limits (needed exactly at Gamma and
        at nodes for derivatives); 0 assigns Gamma to Omega1.
        """
        x = np.asarray(x, dtype=float)
        step = direction if direction != 0 else 1
        region = self.config.region(x, direction)
        d0, v0, g0 = self.field_basis(x, BACKGROUND, step)
        d1, v1, g1 = self.field_basis(x, OVERLAP, step)
        in2 = (region == 2)[..., None]
        return np.where(in2, d1, d0), np.where(in2, v1, v0), np.where(in2, g1, g0)

    def field_of_side(self, side: int) -> int:
        return BACKGROUND if side == 1 else OVERLAP


def build_space(cfg: CutConfig, mesh0=None, meshG=None) -> BrokenSpace:
    """Number the dofs of V_h for ``cfg``.

    The meshes are taken from the configuration; passing them is allowed for
    symmetry with the geometric build and they must agree with it.
    """
    if mesh0 is not None and mesh0.nodes.shape != cfg.mesh0.nodes.shape:
        raise ValueError("background mesh does not match the configuration")
    if meshG is not None and (cfg.meshG is None or meshG.nodes.shape != cfg.meshG.nodes.shape):
        raise ValueError("overlap mesh does not match the configuration")
    x0 = cfg.mesh0.nodes
    xg = cfg.meshG.nodes if cfg.meshG is not None else np.zeros(0)
    bg_nodes = np.arange(1, x0.size - 1)
    if cfg.covered_background_dofs:
        covered = np.fromiter(cfg.covered_background_dofs, dtype=int)
        bg_nodes = np.setdiff1d(bg_nodes, covered)
    g_nodes = np.arange(xg.size)

    coords = np.concatenate([x0[bg_nodes], xg])
    kind = np.concatenate([np.zeros(bg_nodes.size, int), np.ones(g_nodes.size, int)])
    node = np.concatenate([bg_nodes, g_nodes])
    order = np.lexsort((kind, coords))
    coords, kind, node = coords[order], kind[order], node[order]

    bg_dof = np.full(x0.size, -1, dtype=int)
    g_dof = np.full(xg.size, -1, dtype=int)
    idx = np.arange(coords.size)
    bg_dof[node[kind == BACKGROUND]] = idx[kind == BACKGROUND]
    g_dof[node[kind == OVERLAP]] = idx[kind == OVERLAP]
    for arr in (bg_dof, g_dof, coords, kind, node):
        arr.setflags(write=False)
    return BrokenSpace(cfg, bg_dof, g_dof, coords, kind, node)


def eval_broken(space: BrokenSpace, coeffs, x, side="auto", derivative: bool = False):
    """Evaluate a broken function (or its derivative) at points ``x``.

    ``side`` is 1, 2 or "auto".  Side 1 reads the background function, which is
    defined on all of Omega0; side 2 is only valid on the closure of Omega2.
    At a Gamma point the derivative is the one-sided limit from the requested
    subdomain; "auto" places Gamma in Omega1.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.dim,):
        raise ValueError(f"expected {space.dim} coefficients, got shape {coeffs.shape}")
    x = np.asarray(x, dtype=float)
    a, b = space.config.interval or (np.nan, np.nan)
    if side == "auto":
        region = space.config.region(x)
    elif side in (1, 2):
        region = np.full(x.shape, side)
        if side == 2 and (space.config.interval is None or np.any((x < a) | (x > b))):
            raise ValueError("side 2 requested outside the closure of Omega2")
    else:
        raise ValueError(f"side must be 1, 2 or 'auto', got {side!r}")
    direction = np.ones(x.shape, dtype=int)
    direction = np.where((x == a) & (region == 1), -1, direction)
    direction = np.where((x == b) & (region == 2), -1, direction)

    out = np.zeros(x.shape)
    for field, label in ((0, 1), (1, 2)):
        for d in (-1, 1):
            sel = (region == label) & (direction == d)
            if not np.any(sel):
                continue
            dofs, vals, ders = space.field_basis(x[sel], field, d)
            use = ders if derivative else vals
            c = np.where(dofs >= 0, coeffs[np.maximum(dofs, 0)], 0.0)
            out[sel] = np.sum(c * use, axis=-1)
    return out


class CooBuilder:
    """Accumulates weighted outer products of local basis data into one sparse matrix."""

    def __init__(self, shape):
        self.shape = shape
        self._rows, self._cols, self._data = [], [], []

    def add(self, test_dofs, test_vals, trial_dofs, trial_vals, weights):
        """Add weights * test_vals[:, a] * trial_vals[:, b] at (test_dofs[:, a], trial_dofs[:, b]).

        Arrays are (P, Ka) and (P, Kb) over P evaluation points; negative dof
        numbers are dropped.
        """
        w = np.asarray(weights, dtype=float).ravel()
        P = w.size
        if P == 0:
            return self
        td = np.asarray(test_dofs).reshape(P, -1)
        tv = np.asarray(test_vals).reshape(P, -1)
        rd = np.asarray(trial_dofs).reshape(P, -1)
        rv = np.asarray(trial_vals).reshape(P, -1)
        ka, kb = td.shape[1], rd.shape[1]
        rows = np.broadcast_to(td[:, :, None], (P, ka, kb)).ravel()
        cols = np.broadcast_to(rd[:, None, :], (P, ka, kb)).ravel()
        data = (w[:, None, None] * tv[:, :, None] * rv[:, None, :]).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self._rows.append(rows[keep])
        self._cols.append(cols[keep])
        self._data.append(data[keep])
        return self

    def arrays(self):
        """Concatenated (rows, cols, data); duplicates are not summed."""
        if not self._rows:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._data)

    def tocsr(self) -> sp.csr_matrix:
        rows, cols, data = self.arrays()
        return sp.csr_matrix((data, (rows, cols)), shape=self.shape)


def scatter(test_dofs, test_vals, trial_dofs, trial_vals, weights, shape) -> sp.csr_matrix:
    return CooBuilder(shape).add(test_dofs, test_vals, trial_dofs, trial_vals, weights).tocsr()


def scatter_vector(dofs, vals, weights, size: int) -> np.ndarray:
    if len(weights) == 0:
        return np.zeros(size)
    d = np.asarray(dofs).reshape(len(weights), -1)
    v = np.asarray(vals).reshape(len(weights), -1) * np.asarray(weights)[:, None]
    keep = d >= 0
    return np.bincount(d[keep], weights=v[keep], minlength=size)


def pairwise_basis(space: BrokenSpace, x: np.ndarray, label: np.ndarray):
    """Basis data at points whose subdomain label is already known."""
    x = np.asarray(x, dtype=float)
    dofs = np.empty(x.shape + (2,), dtype=int)
    vals = np.empty(x.shape + (2,))
    ders = np.empty(x.shape + (2,))
    in2 = np.asarray(label) == 2
    for field, sel in ((BACKGROUND, ~in2), (OVERLAP, in2)):
        if np.any(sel):
            dofs[sel], vals[sel], ders[sel] = space.field_basis(x[sel], field)
    return dofs, vals, ders


def cross_mass(space_m: BrokenSpace, space_n: BrokenSpace) -> sp.csr_matrix:
    """L2 pairing (phi_j^m, phi_i^n) over Omega0, shape dim_n x dim_m.

    Each basis function is restricted according to its own configuration.
    """
    part = partition_pairwise(space_n.config, space_m.config)
    x, w = map_rule(part.segments, GAUSS2)
    ln = np.repeat(part.label_n, GAUSS2.nodes.size)
    lm = np.repeat(part.label_m, GAUSS2.nodes.size)
    x, w = x.ravel(), w.ravel()
    dn, vn, _ = pairwise_basis(space_n, x, ln)
    dm, vm, _ = pairwise_basis(space_m, x, lm)
    return scatter(dn, vn, dm, vm, w, (space_n.dim, space_m.dim))


@dataclass(frozen=True, eq=False)
class RegionQuadrature:
    """Quadrature points over Omega1 and Omega2 with the basis data of the owning field.

    Shared by mass, stiffness and load assembly so each slab evaluates the basis once.
    """

    x: np.ndarray
    w: np.ndarray
    dofs: np.ndarray
    vals: np.ndarray
    ders: np.ndarray


def region_quadrature(space: BrokenSpace, rule: QuadRule = GAUSS3) -> RegionQuadrature:
    cfg = space.config
    parts = []
    for segs, fld in ((cfg.omega1_segments, BACKGROUND), (cfg.omega2_segments, OVERLAP)):
        x, w = map_rule(segs, rule)
        x, w = x.ravel(), w.ravel()
        parts.append((x, w, *space.field_basis(x, fld)))
    return RegionQuadrature(*(np.concatenate(arrs) for arrs in zip(*parts)))


def transfer_load(space_m: BrokenSpace, coeffs_m, space_n: BrokenSpace) -> np.ndarray:
    """(v_m, phi_i^n) for a discrete v_m of another configuration; equals cross_mass @ coeffs_m."""
    part = partition_pairwise(space_n.config, space_m.config)
    x, w = map_rule(part.segments, GAUSS2)
    nq = GAUSS2.nodes.size
    x, w = x.ravel(), w.ravel()
    values = _pairwise_values(space_m, coeffs_m, x, np.repeat(part.label_m, nq))
    dn, vn, _ = pairwise_basis(space_n, x, np.repeat(part.label_n, nq))
    return scatter_vector(dn, vn, w * values, space_n.dim)


def _pairwise_values(space: BrokenSpace, coeffs, x, label):
    d, v, _ = pairwise_basis(space, x, label)
    c = np.asarray(coeffs, dtype=float)
    return np.sum(np.where(d >= 0, c[np.maximum(d, 0)], 0.0) * v, axis=-1)


def l2_distance(space_a: BrokenSpace, coeffs_a, space_b: BrokenSpace, coeffs_b) -> float:
    """L2(Omega0) norm of v_a - v_b for broken functions of two configurations (exact for P1)."""
    part = partition_pairwise(space_a.config, space_b.config)
    x, w = map_rule(part.segments, GAUSS2)
    nq = GAUSS2.nodes.size
    x, w = x.ravel(), w.ravel()
    va = _pairwise_values(space_a, coeffs_a, x, np.repeat(part.label_n, nq))
    vb = _pairwise_values(space_b, coeffs_b, x, np.repeat(part.label_m, nq))
    return float(np.sqrt(np.sum(w * (va - vb) ** 2)))
