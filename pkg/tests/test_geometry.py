from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfem1d.geometry import (
    InterfaceTrajectory,
    Mesh1D,
    build_background_config,
    build_cut_config,
    build_timeline,
    build_uniform_mesh,
    demo_velocity,
    partition_pairwise,
    place_overlap_mesh,
    slab_interface,
)

from conftest import make_config


# meshes and timeline


@pytest.mark.parametrize(
    "a,b,n,h",
    [(0.0, 1.0, 21, 1 / 21), (0.125, 0.375, 6, 0.25 / 6), (0.0, 1.0, 1, 1.0)],
)
def test_uniform_mesh(a, b, n, h):
    m = build_uniform_mesh(a, b, n)
    assert m.nodes.size == n + 1
    assert m.nodes[0] == a and m.nodes[-1] == b
    np.testing.assert_allclose(m.h, h, rtol=1e-12)
    assert m.quasi_uniformity == pytest.approx(1.0)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0), (0.0, 1.0, 2.5), (1.0, 0.0, 4), (0.5, 0.5, 3)])
def test_uniform_mesh_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_uniform_mesh(*args)


def test_mesh_rejects_unsorted_nodes():
    with pytest.raises(ValueError):
        Mesh1D(np.array([0.0, 0.5, 0.4, 1.0]))


def test_locate_one_sided():
    m = build_uniform_mesh(0, 1, 4)
    assert m.locate(0.25, 1) == 1
    assert m.locate(0.25, -1) == 0
    assert m.locate(0.0, -1) == 0 and m.locate(1.0, 1) == 3


@pytest.mark.parametrize("T,N,k", [(1.0, 4, 0.25), (3.0, 10, 0.3), (1.0, 1, 1.0)])
def test_timeline(T, N, k):
    tl = build_timeline(T, N)
    assert tl.N == N and tl.T == T
    np.testing.assert_allclose(tl.k, k, rtol=1e-12)
    assert tl.times[-1] == T


@pytest.mark.parametrize("T,N", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 1.5)])
def test_timeline_rejects_bad_input(T, N):
    with pytest.raises(ValueError):
        build_timeline(T, N)


def test_timeline_slab_index_checked():
    tl = build_timeline(1.0, 4)
    assert tl.slab(1) == (0.0, 0.25)
    with pytest.raises(IndexError):
        tl.slab(5)


# interface trajectory


def test_slab_interface_constant_speed():
    tl = build_timeline(1.0, 4)
    traj = InterfaceTrajectory(0.125, 0.25, 0.6)
    assert slab_interface(traj, tl, 4) == pytest.approx((0.725, 0.975), abs=1e-15)
    assert slab_interface(traj, tl, 0) == (0.125, 0.375)


def test_slab_interface_at_rest():
    tl = build_timeline(1.0, 4)
    traj = InterfaceTrajectory(0.125, 0.25, 0.0)
    for n in range(5):
        assert slab_interface(traj, tl, n) == (0.125, 0.375)


def test_demo_velocity_first_slab():
    # k = 0.75 and mu(0.75) = 0.5 sin(pi / 2) = 0.5, so a_1 = 0.125 + 0.375
    tl = build_timeline(3.0, 4)
    traj = InterfaceTrajectory(0.125, 0.25, demo_velocity)
    assert slab_interface(traj, tl, 1) == pytest.approx((0.5, 0.75), abs=1e-15)


def test_interface_leaving_domain_names_slab():
    tl = build_timeline(1.0, 4)
    traj = InterfaceTrajectory(0.125, 0.25, 1.0)
    with pytest.raises(ValueError, match="slab 3"):
        slab_interface(traj, tl, 3)


# cut decomposition


def test_cut_config_generic_cut():
    cfg = make_config(10, 0.125, 6)
    a, b = cfg.gamma_points
    assert (a.s, a.sigma, a.owner_cell) == (0.125, 1, 1)
    assert (b.s, b.sigma, b.owner_cell) == (0.375, -1, 3)
    assert a.h_K == pytest.approx(0.1) and not a.snapped
    assert cfg.measure("O") == pytest.approx(0.075 + 0.075)
    covered = cfg.overlap_segments
    np.testing.assert_allclose(covered[:, 0].min(), 0.125)
    np.testing.assert_allclose(covered[:, 1].max(), 0.375)
    # nodes 0.2 and 0.3 each have a neighbour outside G
    assert cfg.covered_background_dofs == frozenset()


def test_cut_config_coarse_background():
    cfg = make_config(4, 0.125, 6)
    assert [g.owner_cell for g in cfg.gamma_points] == [0, 1]
    assert cfg.measure("O") == pytest.approx(0.25)
    ov = cfg.overlap_segments
    assert 0.25 in ov[:, 0] and 0.25 in ov[:, 1]


def test_cut_config_node_aligned_has_no_overlap_region():
    cfg = make_config(10, 0.2, 2, length=0.2)
    assert all(g.snapped for g in cfg.gamma_points)
    assert cfg.measure("O") == 0.0
    assert cfg.covered_background_dofs == frozenset({3})


def test_cut_config_snaps_nearby_points():
    cfg = make_config(10, 0.2 + 1e-13, 2, length=0.2)
    assert cfg.interval[0] == 0.2
    assert all(g.snapped for g in cfg.gamma_points)


def test_cut_config_rejects_bad_overlap_mesh():
    mesh0 = build_uniform_mesh(0, 1, 10)
    meshG = place_overlap_mesh(build_uniform_mesh(0, 0.25, 4), 0.1)
    with pytest.raises(ValueError, match="overlap mesh spans"):
        build_cut_config(mesh0, meshG, (0.125, 0.375))
    with pytest.raises(ValueError):
        build_cut_config(mesh0, meshG, (0.125, 0.375), tol=-1.0)


@pytest.mark.parametrize("a", [-0.1, 0.8, 0.75])
def test_cut_config_rejects_interval_touching_boundary(a):
    mesh0 = build_uniform_mesh(0, 1, 10)
    meshG = place_overlap_mesh(build_uniform_mesh(0, 0.25, 4), a)
    with pytest.raises(ValueError, match="strictly inside"):
        build_cut_config(mesh0, meshG, (a, a + 0.25))


def test_background_config():
    cfg = build_background_config(build_uniform_mesh(0, 1, 10))
    assert cfg.interval is None and cfg.gamma_points == ()
    assert cfg.measure("1") == pytest.approx(1.0)
    assert cfg.measure("2") == 0.0 and cfg.measure("O") == 0.0
    assert np.all(cfg.region(np.linspace(0, 1, 7)) == 1)


def test_region_one_sided_at_gamma():
    cfg = make_config(10, 0.125, 6)
    assert cfg.region(0.125) == 1
    assert cfg.region(0.125, 1) == 2 and cfg.region(0.125, -1) == 1
    assert cfg.region(0.375, -1) == 2 and cfg.region(0.375, 1) == 1


interface_positions = st.floats(0.01, 0.73, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(a=interface_positions, n=st.integers(4, 64), ng=st.integers(1, 20))
def test_cut_config_invariants(a, n, ng):
    cfg = make_config(n, a, ng)
    assert cfg.measure("1") + cfg.measure("2") == pytest.approx(1.0, abs=1e-13)
    assert cfg.measure("2") == pytest.approx(0.25, abs=1e-13)
    assert cfg.measure("O") <= 2 * cfg.mesh0.h_max + 1e-14
    for g in cfg.gamma_points:
        xl, xr = cfg.mesh0.nodes[g.owner_cell], cfg.mesh0.nodes[g.owner_cell + 1]
        assert xl <= g.s <= xr
    again = make_config(n, a, ng)
    for name in ("omega1_segments", "omega2_segments", "overlap_segments"):
        np.testing.assert_array_equal(getattr(cfg, name), getattr(again, name))


@settings(max_examples=40, deadline=None)
@given(a=interface_positions, n=st.integers(4, 40), ng=st.integers(1, 12))
def test_exact_tolerance_keeps_non_degenerate_geometry(a, n, ng):
    x = np.linspace(0, 1, n + 1)
    if np.min(np.abs(x - a)) < 1e-9 or np.min(np.abs(x - a - 0.25)) < 1e-9:
        return
    loose = make_config(n, a, ng)
    exact = make_config(n, a, ng, tol=0.0)
    np.testing.assert_array_equal(loose.overlap_segments, exact.overlap_segments)
    assert loose.gamma_points == exact.gamma_points


# pairwise partition


def test_partition_identical():
    cfg = make_config(10, 0.125, 6)
    part = partition_pairwise(cfg, cfg)
    assert set(zip(part.label_n.tolist(), part.label_m.tolist())) == {(1, 1), (2, 2)}
    assert part.length(2, 2) == pytest.approx(0.25)


def test_partition_shifted_intervals():
    n = make_config(20, 0.1, 5)
    m = make_config(20, 0.2, 5)
    part = partition_pairwise(n, m)
    assert part.length(2, 1) == pytest.approx(0.1)
    assert part.length(1, 2) == pytest.approx(0.1)
    assert part.length(2, 2) == pytest.approx(0.15)
    assert part.length(1, 1) == pytest.approx(0.65)


def test_partition_disjoint():
    part = partition_pairwise(make_config(20, 0.1, 5), make_config(20, 0.6, 5))
    assert part.length(2, 2) == 0.0
    assert part.length(2, 1) == pytest.approx(0.25)


@settings(max_examples=50, deadline=None)
@given(an=interface_positions, am=interface_positions, n=st.integers(4, 40))
def test_partition_lengths_sum_to_subdomains(an, am, n):
    cn, cm = make_config(n, an, 5), make_config(n, am, 7)
    part = partition_pairwise(cn, cm)
    for i, cfg_len in ((1, cn.measure("1")), (2, cn.measure("2"))):
        assert part.length(i, 1) + part.length(i, 2) == pytest.approx(cfg_len, abs=1e-13)
    for j, cfg_len in ((1, cm.measure("1")), (2, cm.measure("2"))):
        assert part.length(1, j) + part.length(2, j) == pytest.approx(cfg_len, abs=1e-13)


def test_partition_with_background_only():
    bg = build_background_config(build_uniform_mesh(0, 1, 10))
    part = partition_pairwise(bg, make_config(10, 0.125, 6))
    assert part.length(1, 2) == pytest.approx(0.25)
    assert part.length(1, 1) == pytest.approx(0.75)
