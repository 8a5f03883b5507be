from __future__ import annotations

import numpy as np
import pytest

from cutfem1d.geometry import build_cut_config, build_uniform_mesh, place_overlap_mesh
from cutfem1d.space import build_space

ACCEPTANCE_LINES: list[str] = []


def make_config(n_cells: int, a: float, n_cells_g: int | None = None, length: float = 0.25, tol: float = 1e-10):
    """Uniform background on (0, 1) and a uniform overlap mesh on (a, a + length)."""
    mesh0 = build_uniform_mesh(0.0, 1.0, n_cells)
    if n_cells_g is None:
        n_cells_g = max(1, int(round(length * n_cells)))
    meshG = place_overlap_mesh(build_uniform_mesh(0.0, length, n_cells_g), a)
    return build_cut_config(mesh0, meshG, (a, a + length), tol=tol)


def make_space(n_cells: int, a: float, n_cells_g: int | None = None, length: float = 0.25):
    return build_space(make_config(n_cells, a, n_cells_g, length))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
