"""Grids, wavefunctions, constants and unit scaling.

Numerical work happens in oscillator units where hbar = m = Omega_0 = 1.
`UnitScale` converts to and from SI at the I/O boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _sc

from biasflip.errors import GridMismatch, ZeroNorm


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = _sc.hbar
    bohr_magneton: float = _sc.physical_constants["Bohr magneton"][0]
    atomic_mass_unit: float = _sc.physical_constants["atomic mass constant"][0]
    planck: float = _sc.h
    electron_mass: float = _sc.m_e


CONSTANTS = PhysicalConstants()

# dimension exponents (length, time, mass)
_DIMENSIONS = {
    "length": (1, 0, 0),
    "time": (0, 1, 0),
    "mass": (0, 0, 1),
    "energy": (2, -2, 1),
    "frequency": (0, -1, 0),
    "velocity": (1, -1, 0),
    "acceleration": (1, -2, 0),
    "force": (1, -2, 1),
    "momentum": (1, -1, 1),
    "action": (2, -1, 1),
    "density": (-1, 0, 0),
}


@dataclass(frozen=True)
class UnitScale:
    """SI size of one internal unit of length, time, energy and mass."""

    length_unit: float
    time_unit: float
    energy_unit: float
    mass_unit: float

    def __post_init__(self):
        expected = self.mass_unit * self.length_unit**2 / self.time_unit**2
        if not math.isclose(self.energy_unit, expected, rel_tol=1e-12):
            raise ValueError("energy_unit must equal mass_unit * length_unit**2 / time_unit**2")

    @classmethod
    def from_oscillator(cls, mass: float, omega: float, hbar: float = CONSTANTS.hbar) -> UnitScale:
        """Scale in which hbar = mass = omega = 1."""
        length = math.sqrt(hbar / (mass * omega))
        time = 1.0 / omega
        return cls(length, time, mass * length**2 / time**2, mass)

    def factor(self, kind: str) -> float:
        try:
            p_len, p_time, p_mass = _DIMENSIONS[kind]
        except KeyError:
            raise ValueError(f"unknown quantity kind {kind!r}") from None
        return self.length_unit**p_len * self.time_unit**p_time * self.mass_unit**p_mass

    def to_internal(self, value, kind: str):
        return value / self.factor(kind)

    def to_physical(self, value, kind: str):
        return value * self.factor(kind)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid: x_i = x_min + i*dx, i < n_points (x_max excluded)."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 2, got {n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def centered(cls, center: float, span: float, n_points: int) -> Grid:
        return cls(center - span / 2, center + span / 2, n_points)

    @property
    def span(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.span / self.n_points

    @property
    def dk(self) -> float:
        return 2 * math.pi / (self.n_points * self.dx)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in numpy FFT order: 0, dk, ..., then negative values."""
        return 2 * math.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def refined(self) -> Grid:
        return Grid(self.x_min, self.x_max, 2 * self.n_points)


@dataclass
class Wavefunction:
    grid: Grid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.grid.n_points,):
            raise ValueError(
                f"amplitudes must have shape ({self.grid.n_points},), got {amps.shape}"
            )
        self.amplitudes = amps

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.density) * self.grid.dx)

    def mean_position(self) -> float:
        return float(np.sum(self.grid.x * self.density) * self.grid.dx / self.norm())

    def copy(self) -> Wavefunction:
        return Wavefunction(self.grid, self.amplitudes.copy())


def normalize(psi: Wavefunction) -> Wavefunction:
    norm = psi.norm()
    if norm < 1e-300:
        raise ZeroNorm("cannot normalize a wavefunction with zero norm")
    return Wavefunction(psi.grid, psi.amplitudes / math.sqrt(norm))


def _same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridMismatch(f"grids differ: {a} vs {b}")


def inner_product(a: Wavefunction, b: Wavefunction) -> complex:
    """<a|b> = sum(conj(a_i) b_i) dx."""
    _same_grid(a.grid, b.grid)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dx)


def kinetic_energy(psi: Wavefunction, mass: float = 1.0, hbar: float = 1.0) -> float:
    """Spectral <p^2/2m>, normalised by <psi|psi>."""
    phi_k = np.fft.fft(psi.amplitudes)
    k = psi.grid.k
    t = np.sum(np.abs(phi_k) ** 2 * (hbar * k) ** 2 / (2 * mass))
    return float(t / np.sum(np.abs(phi_k) ** 2))


def expectation_energy(
    psi: Wavefunction,
    potential_samples: np.ndarray,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> float:
    """<psi|p^2/2m + V|psi> with the kinetic term evaluated in Fourier space."""
    v = np.asarray(potential_samples, dtype=float)
    if v.shape != (psi.grid.n_points,):
        raise GridMismatch("potential samples do not match the wavefunction grid")
    density = psi.density
    pot = float(np.sum(density * v) / np.sum(density))
    return kinetic_energy(psi, mass, hbar) + pot
