"""Scenario presets, protocol runs, sweeps and hardware estimates."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from biasflip.core import CONSTANTS, Grid, UnitScale, Wavefunction, expectation_energy, inner_product
from biasflip.dynamics import PropagationConfig, PropagationResult, propagate
from biasflip.errors import BiasflipError, ValidityViolation, WrongScenario
from biasflip.potentials import (
    LEFT,
    AtomLatticeParams,
    IonQuarticParams,
    Params,
    ValidityReport,
    WellAnalysis,
    analyze,
    evaluate_potential,
    local_frequency,
    potential_relative,
    stationary_points,
    validity_report,
    well_minimum,
)
from biasflip.protocols import (
    ProtocolKind,
    ProtocolSpec,
    build_protocol,
    compensation_slope,
    minima_trajectory,
    trajectory_point,
)
from biasflip.spectral import classify_wells, harmonic_eigenstate, lowest_on_side, solve_stationary

BE9_ION_MASS = 9.012183065 * CONSTANTS.atomic_mass_unit - CONSTANTS.electron_mass
RB87_MASS = 86.909180531 * CONSTANTS.atomic_mass_unit
RB87_POLARIZABILITY = 1.3e-36  # m^2 s, off-resonant beam near 1 um


@dataclass(frozen=True)
class Scenario:
    """A double well, the well under study and the numerical grid.

    ``params.control`` is the initial control lambda0; the inversion runs to
    -lambda0. The grid is in oscillator units of ``scale``. When
    ``window_center`` is set (ion) the grid covers one well only and physical
    positions are ``window_center + x * a0``.
    """

    name: str
    params: Params
    well: str
    grid: Grid
    scale: UnitScale
    window_center: Optional[float] = None
    target_states: str = "exact"
    n_states: int = 6

    @property
    def lambda0(self) -> float:
        return self.params.control

    @property
    def omega_ref(self) -> float:
        return self.scale.to_physical(1.0, "frequency")

    @property
    def period(self) -> float:
        """2 pi / Omega_0 in seconds."""
        return 2 * math.pi * self.scale.time_unit

    @property
    def windowed(self) -> bool:
        return self.window_center is not None

    @cached_property
    def x_si(self) -> np.ndarray:
        x = self.scale.to_physical(self.grid.x, "length")
        return x + self.window_center if self.windowed else x

    def analysis(self) -> WellAnalysis:
        return analyze(self.params)

    def to_internal_x(self, x_si: float) -> float:
        offset = self.window_center if self.windowed else 0.0
        return self.scale.to_internal(x_si - offset, "length")

    def potential(self, lam: float, slope: float = 0.0) -> np.ndarray:
        """V(x; lam) + slope * x on the grid, in internal energy units.

        Windowed grids drop the (time-dependent) constant V(window_center).
        """
        p = self.params.with_control(lam)
        x = self.x_si
        if self.windowed:
            v = potential_relative(p, x, self.window_center) + slope * (x - self.window_center)
        else:
            v = evaluate_potential(p, x) + slope * x
        return self.scale.to_internal(v, "energy")

    def describe(self) -> dict:
        p = self.params
        out = {
            "name": self.name,
            "kind": p.kind,
            "well": self.well,
            "mass_kg": p.mass,
            "grid_points": self.grid.n_points,
            "grid_span_m": self.scale.to_physical(self.grid.span, "length"),
            "windowed": self.windowed,
            "target_states": self.target_states,
        }
        if isinstance(p, IonQuarticParams):
            out.update(alpha_N_per_m=p.alpha, beta_N_per_m3=p.beta, gamma0_N=p.gamma)
        else:
            out.update(
                omega_rad_per_s=p.omega, v0_J=p.v0, d_lattice_m=p.d_lattice, delta_x0_m=p.delta_x
            )
        return out


def make_scenario(
    params: Params,
    well: str = LEFT,
    name: str = "custom",
    span_a0: Optional[float] = None,
    n_points: Optional[int] = None,
    windowed: Optional[bool] = None,
    target_states: str = "exact",
    n_states: int = 6,
) -> Scenario:
    """Build a scenario with a grid sized for the given potential.

    Ion wells default to a 40 a0 window around the chosen well, atoms to a
    full-domain grid of 80 a0 centred on the trap.
    """
    if well not in ("left", "right"):
        raise ValueError("well must be 'left' or 'right'")
    is_ion = isinstance(params, IonQuarticParams)
    windowed = is_ion if windowed is None else windowed
    scale = UnitScale.from_oscillator(params.mass, params.omega_ref)
    if windowed:
        span = 40.0 if span_a0 is None else span_a0
        n = 256 if n_points is None else n_points
        lam = params.control
        center = 0.5 * (well_minimum(params, well) + well_minimum(params.with_control(-lam), well))
        grid = Grid.centered(0.0, span, n)
    else:
        span = 80.0 if span_a0 is None else span_a0
        n = 1024 if n_points is None else n_points
        center = None
        grid = Grid.centered(0.0, span, n)
    return Scenario(name, params, well, grid, scale, center, target_states, n_states)


def ion_be9(
    well: str = LEFT,
    gamma0: float = 86.4e-21,
    alpha: float = -4.7e-12,
    beta: float = 5.2e-3,
    **kw,
) -> Scenario:
    params = IonQuarticParams(alpha=alpha, beta=beta, gamma=gamma0, mass=BE9_ION_MASS)
    return make_scenario(params, well, name="ion-be9", **kw)


def atom_rb87(
    well: str = LEFT,
    delta_x0: float = 200e-9,
    d_lattice: float = 5.18e-6,
    trap_hz: float = 59.4,
    v0_hz: float = 1.4e3,
    **kw,
) -> Scenario:
    params = AtomLatticeParams(
        omega=2 * math.pi * trap_hz,
        v0=CONSTANTS.planck * v0_hz,
        d_lattice=d_lattice,
        delta_x=delta_x0,
        mass=RB87_MASS,
    )
    return make_scenario(params, well, name="atom-rb87", **kw)


PRESETS = {"ion-be9": ion_be9, "atom-rb87": atom_rb87}


def moderate_bias(params: IonQuarticParams) -> float:
    """gamma0 ~ hbar Omega_0 / D: a bias of one vibrational quantum."""
    d = analyze(params.with_control(0.0)).distance
    return CONSTANTS.hbar * params.omega_ref / d


# --------------------------------------------------------------------------
# stationary states


@dataclass(frozen=True)
class WellState:
    psi: Wavefunction
    energy: float  # internal units
    index: int  # position in the spectrum, -1 for harmonic targets


@lru_cache(maxsize=256)
def well_state(scenario: Scenario, lam: float) -> WellState:
    """Lowest state of ``scenario.well`` at control ``lam``."""
    p = scenario.params.with_control(lam)
    v = scenario.potential(lam)
    if scenario.target_states == "harmonic":
        x0 = well_minimum(p, scenario.well)
        w = scenario.scale.to_internal(local_frequency(p, x0), "frequency")
        psi = harmonic_eigenstate(0, w, scenario.to_internal_x(x0), scenario.grid)
        return WellState(psi, expectation_energy(psi, v), -1)
    sol = solve_stationary(v, scenario.grid, k=scenario.n_states)
    barrier = scenario.to_internal_x(stationary_points(p)[1])
    labels = classify_wells(sol, barrier)
    idx = lowest_on_side(labels, scenario.well)
    # check delocalisation only up to the state we need
    classify_wells(sol, barrier, check=idx + 1)
    return WellState(sol.state(idx), float(sol.energies[idx]), idx)


# --------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunMetrics:
    protocol_kind: str
    t_final: float  # s
    fidelity: float
    excitation_energy: float  # J
    excitation_energy_hbar_omega: float
    sudden_fidelity_reference: float
    ratio_R: float
    norm_drift: float = 0.0
    n_steps: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@lru_cache(maxsize=64)
def cached_validity(params: Params, control_max: float) -> ValidityReport:
    return validity_report(params, control_max)


def sudden_fidelity(scenario: Scenario) -> float:
    """|<initial well state | target well state>| with no evolution in between."""
    a = well_state(scenario, scenario.lambda0).psi
    b = well_state(scenario, -scenario.lambda0).psi
    return abs(inner_product(a, b))


def displacement_ratio(scenario: Scenario) -> float:
    return scenario.analysis().ratio


def potential_provider(scenario: Scenario, spec: ProtocolSpec):
    """Callable tau -> V(x, tau) (internal units) for the given schedule."""
    t_unit = scenario.scale.time_unit
    params = scenario.params
    if spec.kind.compensated:
        ion = isinstance(params, IonQuarticParams)

        def provider(tau: float) -> np.ndarray:
            lam, _, _, _, _, x0_ddot = trajectory_point(spec, params, tau * t_unit, scenario.well)
            slope = float(compensation_slope(params, x0_ddot))
            if ion:
                return scenario.potential(lam + slope)
            return scenario.potential(lam, slope)

        return provider

    def provider(tau: float) -> np.ndarray:
        return scenario.potential(float(spec.value(tau * t_unit)))

    return provider


def default_config(scenario: Scenario, t_final: float, snapshots: bool = False, store_every: Optional[int] = None):
    """Time step for a run of ``t_final`` seconds (see PropagationConfig.for_duration)."""
    tau = scenario.scale.to_internal(t_final, "time")
    cfg = PropagationConfig.for_duration(tau, 2 * math.pi, snapshots=snapshots)
    n_steps = max(1, math.ceil(tau / cfg.dt - 1e-9)) if tau > 0 else 1
    stride = store_every if store_every else max(1, n_steps // 100)
    return replace(cfg, store_every=stride)


def simulate(
    scenario: Scenario, spec: ProtocolSpec, config: Optional[PropagationConfig] = None
) -> tuple[Wavefunction, Optional[PropagationResult]]:
    """Evolve the initial well state under ``spec``; returns the final state."""
    psi0 = well_state(scenario, spec.lambda_start).psi
    if spec.kind is ProtocolKind.SUDDEN or spec.t_final == 0:
        return psi0, None
    tau = scenario.scale.to_internal(spec.t_final, "time")
    cfg = config or default_config(scenario, spec.t_final)
    result = propagate(psi0, potential_provider(scenario, spec), tau, cfg)
    return result.final_state, result


def run_protocol(
    scenario: Scenario, spec: ProtocolSpec, config: Optional[PropagationConfig] = None
) -> RunMetrics:
    """Fidelity and excitation energy of ``spec`` against the final well ground state."""
    lam_max = max(abs(spec.lambda_start), abs(spec.lambda_end))
    report = cached_validity(scenario.params, lam_max)
    if report.status == "fail":
        raise ValidityViolation(
            f"parallel-motion margin {report.parallel_margin:.3g} too large at |lambda|={lam_max:g}"
        )
    final, result = simulate(scenario, spec, config)
    target = well_state(scenario, spec.lambda_end)
    v_final = scenario.potential(spec.lambda_end)
    energy = expectation_energy(final, v_final)
    target_energy = expectation_energy(target.psi, v_final)
    e_ex = energy - target_energy
    drift = float(np.max(np.abs(result.norm_history - 1.0))) if result is not None else 0.0
    return RunMetrics(
        protocol_kind=spec.kind.value,
        t_final=spec.t_final,
        fidelity=abs(inner_product(target.psi, final)),
        excitation_energy=scenario.scale.to_physical(e_ex, "energy"),
        excitation_energy_hbar_omega=e_ex,
        sudden_fidelity_reference=sudden_fidelity(scenario),
        ratio_R=displacement_ratio(scenario),
        norm_drift=drift,
        n_steps=result.n_steps if result is not None else 0,
    )


def protocol_for(scenario: Scenario, kind, t_final: float) -> ProtocolSpec:
    return build_protocol(kind, scenario.lambda0, -scenario.lambda0, t_final)


@dataclass(frozen=True)
class SweepCell:
    kind: str
    t_final: float
    metrics: Optional[RunMetrics] = None
    error: Optional[str] = None


def _threads(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("BIASFLIP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def sweep_tf(
    scenario: Scenario,
    kinds: Iterable,
    tf_grid: Sequence[float],
    config_factory=None,
    workers: Optional[int] = None,
) -> list[SweepCell]:
    """Run every (kind, t_f) cell; failed cells carry an error message instead of metrics.

    Rows are ordered by the given kinds, then by t_f, whatever the scheduling.
    """
    tfs = [float(t) for t in tf_grid]
    if any(t <= 0 for t in tfs) or any(b <= a for a, b in zip(tfs, tfs[1:])):
        raise ValueError("tf_grid must be positive and strictly ascending")
    jobs = [(ProtocolKind(k), t) for k in kinds for t in tfs]

    def run(job) -> SweepCell:
        kind, tf = job
        try:
            spec = protocol_for(scenario, kind, tf)
            cfg = config_factory(scenario, tf) if config_factory else None
            return SweepCell(kind.value, tf, run_protocol(scenario, spec, cfg))
        except BiasflipError as exc:
            return SweepCell(kind.value, tf, error=f"{type(exc).__name__}: {exc}")

    n = _threads(workers)
    if n == 1:
        return [run(j) for j in jobs]
    # warm the eigenstate cache before fanning out
    well_state(scenario, scenario.lambda0)
    well_state(scenario, -scenario.lambda0)
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(run, jobs))


# --------------------------------------------------------------------------
# oracles and estimates


def forced_oscillator_energy(times, x0_ddot, omega: float, mass: float) -> float:
    """(m/2) |int x0''(t) exp(i omega t) dt|^2, the energy a driven harmonic oscillator keeps."""
    times = np.asarray(times, dtype=float)
    phase = np.exp(1j * omega * times)
    f = np.asarray(x0_ddot) * phase
    amp = simpson(f.real, x=times) + 1j * simpson(f.imag, x=times)
    return 0.5 * mass * abs(amp) ** 2


def forced_oscillator_prediction(scenario: Scenario, kind, t_final: float) -> float:
    """Excitation (J) predicted for a rigid harmonic well following the exact minimum."""
    spec = protocol_for(scenario, kind, t_final)
    n = max(4001, 400 * math.ceil(t_final / scenario.period) + 1)
    traj = minima_trajectory(spec, scenario.params, scenario.well, n_samples=n)
    return forced_oscillator_energy(traj.times, traj.x0_ddot, scenario.omega_ref, scenario.params.mass)


@dataclass(frozen=True)
class HardwareEstimate:
    a_max: float  # m/s^2, lower bound 2 d / t_f^2
    a_peak: float  # m/s^2, peak of the quintic trajectory
    gradient_G: float  # T/m, from a_peak
    gradient_lower_bound: float  # T/m, from a_max
    dipole_power_over_waist_cubed: float  # W/m^3, from a_peak
    polarizability: float  # m^2 s
    displacement: float  # m

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def hardware_feasibility(
    scenario: Scenario, t_final: float, polarizability: float = RB87_POLARIZABILITY, magnetic_moment: float | None = None
) -> HardwareEstimate:
    """Field gradient or dipole-beam parameters needed to apply the compensating force.

    The gradient assumes a magnetic moment of one Bohr magneton (F = m_F = 2).
    """
    if not isinstance(scenario.params, AtomLatticeParams):
        raise WrongScenario("hardware estimates are defined for the neutral-atom scenario")
    mu = CONSTANTS.bohr_magneton if magnetic_moment is None else magnetic_moment
    m = scenario.params.mass
    spec = build_protocol(ProtocolKind.COMPENSATED, scenario.lambda0, -scenario.lambda0, t_final)
    traj = minima_trajectory(spec, scenario.params, scenario.well)
    d = abs(traj.x0[-1] - traj.x0[0])
    a_bound = 2 * d / t_final**2
    a_peak = max(float(np.max(np.abs(traj.x0_ddot))), a_bound)
    return HardwareEstimate(
        a_max=a_bound,
        a_peak=a_peak,
        gradient_G=m * a_peak / mu,
        gradient_lower_bound=m * a_bound / mu,
        dipole_power_over_waist_cubed=m * a_peak / polarizability,
        polarizability=polarizability,
        displacement=d,
    )
