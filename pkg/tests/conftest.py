import numpy as np
import pytest

from mslab.grid import GridSpec, ScalarField


@pytest.fixture
def grid2d():
    return GridSpec(n=2, N=16)


@pytest.fixture
def grid2d_32():
    return GridSpec(n=2, N=32)


@pytest.fixture
def grid3d():
    return GridSpec(n=3, N=8)


def random_complex_field(grid, rng):
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return ScalarField(grid, vals)


def random_real_field(grid, rng):
    return ScalarField(grid, rng.standard_normal(grid.shape))


def smooth_complex_field(grid, rng, modes=3):
    """Band-limited random field, continuum-defined (safe under refinement)."""
    coords = grid.coords()
    vals = np.zeros(grid.shape, dtype=np.complex128)
    for _ in range(modes):
        k = rng.integers(1, 4, size=grid.n)
        amp = rng.standard_normal() + 1j * rng.standard_normal()
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * ki * c / grid.L for ki, c in zip(k, coords))
        vals += amp * np.sin(arg + phase)
    return ScalarField(grid, vals)
