"""Split-operator propagation of the 1D time-dependent Schroedinger equation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from biasflip.core import UnitScale, Wavefunction, expectation_energy
from biasflip.errors import GridLeak, NormLoss, NotConverged, PropagationError, UnstableStep

PotentialProvider = Callable[[float], np.ndarray]

STEPS_PER_PERIOD = 2000
MIN_STEPS_PER_PERIOD = 200
EDGE_POINTS = 5
EDGE_DENSITY_LIMIT = 1e-12


@dataclass(frozen=True)
class PropagationConfig:
    """Time step and bookkeeping options.

    ``period`` (2 pi / Omega_0, internal units) enables the resolution floor
    dt <= period / 200.
    """

    dt: float
    store_every: int = 1
    absorber: Optional[float] = None
    snapshots: bool = False
    period: Optional[float] = None
    check_edges: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        if self.period is not None and self.dt > self.period / MIN_STEPS_PER_PERIOD * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:g} exceeds the resolution floor period/{MIN_STEPS_PER_PERIOD}")

    @classmethod
    def for_duration(cls, t_final: float, period: float = 2 * math.pi, min_steps: int = 2000, **kw):
        """At least STEPS_PER_PERIOD steps per period and ``min_steps`` steps overall."""
        n = max(min_steps, math.ceil(t_final / (period / STEPS_PER_PERIOD) - 1e-9))
        dt = t_final / n if t_final > 0 else period / STEPS_PER_PERIOD
        return cls(dt=dt, period=period, **kw)


@dataclass
class PropagationResult:
    final_state: Wavefunction
    times: np.ndarray
    norm_history: np.ndarray
    energy_history: np.ndarray
    density_snapshots: Optional[np.ndarray] = field(default=None, repr=False)
    n_steps: int = 0


def _absorbing_mask(n: int, strength: float) -> np.ndarray:
    width = max(1, n // 10)
    ramp = np.zeros(n)
    edge = np.linspace(1.0, 0.0, width, endpoint=False)
    ramp[:width] = edge
    ramp[-width:] = edge[::-1]
    return np.exp(-strength * ramp**2)


def propagate(
    psi0: Wavefunction,
    potential: PotentialProvider,
    t_final: float,
    config: PropagationConfig,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> PropagationResult:
    """Strang splitting V/2 - T - V/2 with V sampled at each step's midpoint.

    ``potential(t)`` returns V on the grid of ``psi0`` at time t. The number of
    steps is ceil(t_final / dt); the step is shrunk to land on t_final exactly.
    """
    grid = psi0.grid
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    n_steps = math.ceil(t_final / config.dt - 1e-9) if t_final > 0 else 0
    dt = t_final / n_steps if n_steps else 0.0
    kinetic = np.exp(-1j * hbar * grid.k**2 * dt / (2 * mass))
    mask = _absorbing_mask(grid.n_points, config.absorber) if config.absorber else None
    k_max = math.pi / grid.dx
    t_scale = hbar**2 * k_max**2 / (2 * mass)

    psi = psi0.amplitudes.copy()
    v0 = np.asarray(potential(0.0), dtype=float)
    e0 = expectation_energy(psi0, v0, mass, hbar)
    times = [0.0]
    norms = [psi0.norm()]
    energies = [e0]
    snaps = [np.abs(psi) ** 2] if config.snapshots else None

    def record(step: int, v_now: np.ndarray) -> None:
        state = Wavefunction(grid, psi)
        norm = state.norm()
        energy = expectation_energy(state, v_now, mass, hbar)
        if not (np.isfinite(norm) and np.isfinite(energy)):
            raise UnstableStep(f"non-finite state at step {step}")
        bound = 10 * (abs(e0) + float(np.max(np.abs(v_now))) + t_scale)
        if abs(energy) > bound:
            raise UnstableStep(f"energy {energy:g} diverged at step {step}")
        if config.absorber is None and abs(norm - 1.0) > 1e-6:
            raise NormLoss(f"norm drifted to {norm:.12f} at step {step}")
        if config.absorber is None and config.check_edges:
            dens = np.abs(psi) ** 2
            edge = max(dens[:EDGE_POINTS].max(), dens[-EDGE_POINTS:].max())
            if edge > EDGE_DENSITY_LIMIT:
                raise GridLeak(f"edge density {edge:.2e} at step {step}; enlarge the grid")
        times.append(step * dt)
        norms.append(norm)
        energies.append(energy)
        if snaps is not None:
            snaps.append(np.abs(psi) ** 2)

    def result(steps_done: int) -> PropagationResult:
        return PropagationResult(
            final_state=Wavefunction(grid, psi),
            times=np.array(times),
            norm_history=np.array(norms),
            energy_history=np.array(energies),
            density_snapshots=np.array(snaps) if snaps is not None else None,
            n_steps=steps_done,
        )

    for step in range(1, n_steps + 1):
        t_mid = (step - 0.5) * dt
        half = np.exp(-0.5j * dt / hbar * np.asarray(potential(t_mid), dtype=float))
        psi *= half
        psi = np.fft.ifft(kinetic * np.fft.fft(psi))
        psi *= half
        if mask is not None:
            psi *= mask
        if step % config.store_every == 0 or step == n_steps:
            try:
                record(step, np.asarray(potential(step * dt), dtype=float))
            except PropagationError as exc:
                # keep what was recorded so callers can flush it
                exc.partial = result(step)
                raise

    return result(n_steps)


@dataclass(frozen=True)
class ConvergenceReport:
    discrepancy: float  # ||psi(dt) - psi(dt/2)||
    discrepancy_half: float  # ||psi(dt/2) - psi(dt/4)||
    ratio: float
    order: float
    second_order: bool


def _distance(a: Wavefunction, b: Wavefunction) -> float:
    return math.sqrt(float(np.sum(np.abs(a.amplitudes - b.amplitudes) ** 2)) * a.grid.dx)


def convergence_check(
    psi0: Wavefunction,
    potential: PotentialProvider,
    t_final: float,
    config: PropagationConfig,
    mass: float = 1.0,
    hbar: float = 1.0,
    tolerance: float = 1e-6,
    raise_on_failure: bool = True,
) -> ConvergenceReport:
    """Propagate with dt, dt/2 and dt/4 and compare successive final states.

    For a second-order method the successive discrepancies shrink by ~4.
    """
    finals = []
    for div in (1, 2, 4):
        cfg = PropagationConfig(
            dt=config.dt / div,
            store_every=10**9,
            absorber=config.absorber,
            period=config.period,
            check_edges=config.check_edges,
        )
        finals.append(propagate(psi0, potential, t_final, cfg, mass, hbar).final_state)
    e1 = _distance(finals[0], finals[1])
    e2 = _distance(finals[1], finals[2])
    ratio = e1 / e2 if e2 > 0 else math.inf
    order = math.log2(ratio) if 0 < ratio < math.inf else math.nan
    report = ConvergenceReport(e1, e2, ratio, order, 3.5 <= ratio <= 4.5)
    if raise_on_failure and e2 > tolerance:
        raise NotConverged(f"discrepancy {e2:.2e} at dt/2 exceeds {tolerance:g}")
    return report


def write_density_csv(path, result: PropagationResult, scale: UnitScale, x: np.ndarray) -> None:
    """Density snapshots as CSV: first column time in s, then |psi|^2 in 1/m per x_i."""
    if result.density_snapshots is None:
        raise ValueError("propagation did not record density snapshots")
    x_si = scale.to_physical(np.asarray(x), "length")
    times = scale.to_physical(result.times, "time")
    dens = scale.to_physical(result.density_snapshots, "density")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s"] + [f"x_m={xi!r}" for xi in x_si.tolist()])
        for t, row in zip(times.tolist(), dens):
            w.writerow([repr(t)] + [repr(float(v)) for v in row])
