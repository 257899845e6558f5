import math

import numpy as np
import pytest

from biasflip.core import Grid, Wavefunction


def gaussian(grid: Grid, center: float = 0.0, omega: float = 1.0, k0: float = 0.0) -> Wavefunction:
    """Analytic harmonic ground state (hbar = m = 1), built without the package helpers."""
    x = grid.x
    amp = (omega / math.pi) ** 0.25 * np.exp(-omega * (x - center) ** 2 / 2 + 1j * k0 * x)
    return Wavefunction(grid, amp)


@pytest.fixture
def hgrid() -> Grid:
    return Grid.centered(0.0, 40.0, 512)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
