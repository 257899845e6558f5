"""Fast bias inversion of asymmetric double wells with compensating forces."""

from biasflip.core import (
    CONSTANTS,
    Grid,
    PhysicalConstants,
    UnitScale,
    Wavefunction,
    expectation_energy,
    inner_product,
    normalize,
)
from biasflip.errors import BiasflipError

__version__ = "0.1.0"

__all__ = [
    "CONSTANTS",
    "BiasflipError",
    "Grid",
    "PhysicalConstants",
    "UnitScale",
    "Wavefunction",
    "expectation_energy",
    "inner_product",
    "normalize",
]
