"""Stationary states on a grid and their assignment to the left or right well."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from numpy.polynomial.hermite import hermval
from scipy.linalg import LinAlgError, eigh, eigh_tridiagonal

from biasflip.core import Grid, Wavefunction
from biasflip.errors import Ambiguous, ConvergenceFailure, GridTooCoarse, GridTooSmall
from biasflip.potentials import LEFT, RIGHT

PotentialInput = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]

AMBIGUOUS_BAND = (0.45, 0.55)


@dataclass
class EigenSolution:
    energies: np.ndarray
    vectors: np.ndarray  # (n_points, k), columns normalised with the grid measure
    grid: Grid

    def __len__(self) -> int:
        return len(self.energies)

    def state(self, n: int) -> Wavefunction:
        return Wavefunction(self.grid, self.vectors[:, n])

    @property
    def states(self) -> list[Wavefunction]:
        return [self.state(n) for n in range(len(self))]


def fourier_kinetic_matrix(grid: Grid, mass: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """Dense matrix of p^2/2m acting through the FFT, identical to the propagator's."""
    n = grid.n_points
    t_k = (hbar * grid.k) ** 2 / (2 * mass)
    # first column of the circulant, real for a symmetric k-set
    col = np.fft.ifft(t_k).real
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def _sample(potential: PotentialInput, grid: Grid) -> np.ndarray:
    if callable(potential):
        return np.asarray(potential(grid.x), dtype=float)
    v = np.asarray(potential, dtype=float)
    if v.shape != (grid.n_points,):
        raise ValueError("potential samples do not match the grid")
    return v


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1
    return vectors * signs


def _solve(v: np.ndarray, grid: Grid, mass: float, k: int, hbar: float, method: str):
    try:
        if method == "fourier":
            h = fourier_kinetic_matrix(grid, mass, hbar)
            h[np.diag_indices_from(h)] += v
            energies, vectors = eigh(h, subset_by_index=[0, k - 1])
        elif method == "fd":
            c = hbar**2 / (2 * mass * grid.dx**2)
            diag = v + 2 * c
            off = -c * np.ones(grid.n_points - 1)
            energies, vectors = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
        else:
            raise ValueError(f"unknown method {method!r}")
    except LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    vectors = _fix_sign(vectors) / math.sqrt(grid.dx)
    return energies, vectors


def solve_stationary(
    potential: PotentialInput,
    grid: Grid,
    mass: float = 1.0,
    k: int = 6,
    hbar: float = 1.0,
    method: str = "fourier",
    check_refinement: bool = False,
    refinement_tol: float = 1e-6,
) -> EigenSolution:
    """Lowest ``k`` eigenpairs of p^2/2m + V on ``grid``.

    ``method="fourier"`` diagonalises the Fourier-grid Hamiltonian, whose kinetic
    operator is the one used by the split-operator propagator, so its eigenstates
    are stationary under propagation. ``method="fd"`` uses the second-order
    tridiagonal finite-difference matrix instead.

    With ``check_refinement`` the potential must be a callable; the problem is
    re-solved with twice as many points over the same span and GridTooCoarse is
    raised if any energy moves by more than ``refinement_tol`` (relative).
    """
    if k < 1 or k > grid.n_points // 4:
        raise ValueError(f"k must be in [1, n_points/4], got {k}")
    v = _sample(potential, grid)
    if not np.all(np.isfinite(v)):
        raise ValueError("potential must be finite on the grid")
    energies, vectors = _solve(v, grid, mass, k, hbar, method)
    if check_refinement:
        if not callable(potential):
            raise ValueError("refinement check needs a callable potential")
        fine = grid.refined()
        e_fine, _ = _solve(_sample(potential, fine), fine, mass, k, hbar, method)
        scale = np.maximum(np.abs(e_fine), np.abs(e_fine[0]) + 1e-300)
        shift = np.max(np.abs(e_fine - energies) / scale)
        if shift > refinement_tol:
            raise GridTooCoarse(f"energies moved by {shift:.2e} (relative) under grid refinement")
    return EigenSolution(energies, vectors, grid)


def hamiltonian_residual(sol: EigenSolution, potential: np.ndarray, mass: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """||H phi_n - E_n phi_n|| for every stored state, spectral kinetic term."""
    k = sol.grid.k
    t_k = (hbar * k) ** 2 / (2 * mass)
    out = []
    for n in range(len(sol)):
        phi = sol.vectors[:, n]
        h_phi = np.fft.ifft(t_k * np.fft.fft(phi)) + potential * phi
        out.append(np.sqrt(np.sum(np.abs(h_phi - sol.energies[n] * phi) ** 2) * sol.grid.dx))
    return np.array(out)


@dataclass(frozen=True)
class WellLabel:
    side: str
    mass_fraction: float  # probability on the labelled side
    index_in_spectrum: int


def classify_wells(sol: EigenSolution, barrier_x: float, check: int | None = None) -> list[WellLabel]:
    """Label each eigenstate by the side of ``barrier_x`` that holds most probability.

    Ambiguous is raised when one of the first ``check`` states (all by default)
    has between 45% and 55% of its probability on the left.
    """
    x = sol.grid.x
    dx = sol.grid.dx
    left_mask = x < barrier_x
    n_check = len(sol) if check is None else check
    labels = []
    for n in range(len(sol)):
        dens = np.abs(sol.vectors[:, n]) ** 2
        total = np.sum(dens) * dx
        left = float(np.sum(dens[left_mask]) * dx / total)
        if n < n_check and AMBIGUOUS_BAND[0] <= left <= AMBIGUOUS_BAND[1]:
            raise Ambiguous(f"state {n} is delocalised: left probability {left:.3f}")
        if left > 0.5:
            labels.append(WellLabel(LEFT, left, n))
        else:
            labels.append(WellLabel(RIGHT, 1.0 - left, n))
    return labels


def lowest_on_side(labels: Sequence[WellLabel], side: str) -> int:
    for lab in labels:
        if lab.side == side:
            return lab.index_in_spectrum
    raise LookupError(f"no state localised in the {side} well")


def lowest_left(labels: Sequence[WellLabel]) -> int:
    return lowest_on_side(labels, LEFT)


def lowest_right(labels: Sequence[WellLabel]) -> int:
    return lowest_on_side(labels, RIGHT)


def harmonic_eigenstate(
    n: int, omega: float, center: float, grid: Grid, mass: float = 1.0, hbar: float = 1.0
) -> Wavefunction:
    """Normalised Hermite-Gaussian phi_n(x - center) sampled on the grid."""
    a0 = math.sqrt(hbar / (mass * omega))
    extent = math.sqrt(2 * n + 1) * a0
    if extent >= grid.span / 4:
        raise GridTooSmall(f"state extent {extent:g} does not fit a grid of span {grid.span:g}")
    margin = grid.span / 2 - extent
    mid = grid.x_min + grid.span / 2
    if abs(center - mid) > margin:
        raise GridTooSmall("state centre too close to the grid edge")
    xi = (grid.x - center) / a0
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    # log-space normalisation keeps large n finite
    log_norm = -0.5 * (n * math.log(2) + math.lgamma(n + 1)) - 0.25 * math.log(math.pi) - 0.5 * math.log(a0)
    amps = math.exp(log_norm) * hermval(xi, coeffs) * np.exp(-0.5 * xi**2)
    return Wavefunction(grid, amps.astype(np.complex128))
