import math

import numpy as np
import pytest

from biasflip.core import CONSTANTS
from biasflip.errors import WrongScenario
from biasflip.experiments import (
    BE9_ION_MASS,
    RB87_MASS,
    atom_rb87,
    displacement_ratio,
    forced_oscillator_energy,
    hardware_feasibility,
    ion_be9,
    moderate_bias,
    protocol_for,
    run_protocol,
    sudden_fidelity,
    sweep_tf,
    well_state,
)
from biasflip.potentials import IonQuarticParams
from biasflip.protocols import short_time_bound


@pytest.fixture(scope="module")
def ion():
    return ion_be9()


@pytest.fixture(scope="module")
def atom():
    return atom_rb87()


def test_presets(ion, atom):
    p = ion.params
    assert (p.alpha, p.beta, p.gamma) == (-4.7e-12, 5.2e-3, 86.4e-21)
    assert p.mass == pytest.approx(9.012 * CONSTANTS.atomic_mass_unit, rel=1e-3)
    assert BE9_ION_MASS < 9.012183065 * CONSTANTS.atomic_mass_unit
    q = atom.params
    assert q.d_lattice == 5.18e-6 and q.delta_x == 200e-9
    assert q.omega == pytest.approx(2 * math.pi * 59.4)
    assert q.v0 == pytest.approx(CONSTANTS.planck * 1.4e3)
    assert q.mass == RB87_MASS
    assert ion.windowed and not atom.windowed


def test_displacement_ratios(ion, atom):
    assert displacement_ratio(ion) == pytest.approx(0.65, abs=0.02)
    assert displacement_ratio(atom) == pytest.approx(0.67, abs=0.03)
    gm = moderate_bias(ion.params)
    mod = ion_be9(gamma0=gm)
    assert displacement_ratio(mod) == pytest.approx(0.00065, rel=0.1)


def test_sudden_fidelity_values(ion, atom):
    assert sudden_fidelity(ion) == pytest.approx(0.89, abs=0.01)
    assert sudden_fidelity(atom) == pytest.approx(0.90, abs=0.01)
    r = displacement_ratio(ion)
    assert sudden_fidelity(ion) == pytest.approx(math.exp(-r * r / 4), abs=0.01)


def test_atom_target_is_first_excited_state(atom):
    assert well_state(atom, atom.lambda0).index == 0
    assert well_state(atom, -atom.lambda0).index == 1


def test_ion_compensated_run(ion):
    m = run_protocol(ion, protocol_for(ion, "compensated", 0.1e-6))
    assert m.fidelity > 0.999
    assert m.excitation_energy_hbar_omega < 1e-3
    assert m.fidelity <= 1 + 1e-9
    assert m.norm_drift < 1e-9
    assert m.excitation_energy == pytest.approx(m.excitation_energy_hbar_omega * CONSTANTS.hbar * ion.omega_ref)


def test_ion_uncompensated_short_limit(ion):
    m = run_protocol(ion, protocol_for(ion, "polynomial", 1e-9))
    assert m.fidelity == pytest.approx(0.89, abs=0.01)
    assert m.fidelity == pytest.approx(m.sudden_fidelity_reference, abs=0.01)


def test_sudden_run_has_no_propagation(ion):
    m = run_protocol(ion, protocol_for(ion, "sudden", 0.0))
    assert m.n_steps == 0
    assert m.fidelity == pytest.approx(sudden_fidelity(ion), abs=1e-12)


def test_atom_compensated_at_63us(atom):
    m = run_protocol(atom, protocol_for(atom, "compensated", 63e-6))
    assert m.fidelity > 0.999
    assert m.excitation_energy_hbar_omega >= -1e-9


def test_left_right_mirror():
    left = run_protocol(ion_be9("left"), protocol_for(ion_be9("left"), "polynomial", 0.15e-6))
    right_sc = ion_be9("right", gamma0=-86.4e-21)
    right = run_protocol(right_sc, protocol_for(right_sc, "polynomial", 0.15e-6))
    assert right.fidelity == pytest.approx(left.fidelity, abs=1e-6)
    assert right.excitation_energy_hbar_omega == pytest.approx(left.excitation_energy_hbar_omega, abs=1e-6)


def test_harmonic_target_states():
    sc = ion_be9(target_states="harmonic")
    m = run_protocol(sc, protocol_for(sc, "compensated", 0.1e-6))
    assert m.fidelity > 0.999
    assert well_state(sc, sc.lambda0).index == -1


def test_sweep_order_and_threads(ion):
    tfs = [0.05e-6, 0.1e-6]
    kinds = ["compensated", "polynomial"]
    serial = sweep_tf(ion, kinds, tfs, workers=1)
    parallel = sweep_tf(ion, kinds, tfs, workers=3)
    assert [(c.kind, c.t_final) for c in serial] == [(k, t) for k in kinds for t in tfs]
    for a, b in zip(serial, parallel):
        assert (a.kind, a.t_final) == (b.kind, b.t_final)
        assert a.metrics.fidelity == b.metrics.fidelity
    # dominance above ten short-time bounds
    assert 10 * short_time_bound(ion.params, ion.lambda0) < tfs[0]
    for t in tfs:
        comp = next(c for c in serial if c.kind == "compensated" and c.t_final == t)
        unc = next(c for c in serial if c.kind == "polynomial" and c.t_final == t)
        assert comp.metrics.fidelity >= unc.metrics.fidelity - 1e-6


def test_sweep_error_markers():
    p = IonQuarticParams(-4.7e-12, 5.2e-3, 86.4e-21, BE9_ION_MASS)
    from biasflip.experiments import make_scenario

    # a grid far too small for the motion: every cell leaks
    sc = make_scenario(p, "left", span_a0=4.0, n_points=32)
    cells = sweep_tf(sc, ["polynomial"], [0.05e-6])
    assert cells[0].metrics is None
    assert cells[0].error.startswith("GridLeak")


@pytest.mark.parametrize("grid", [[0.2e-6, 0.1e-6], [0.0, 1e-7], [1e-7, 1e-7]])
def test_sweep_rejects_bad_grid(ion, grid):
    with pytest.raises(ValueError):
        sweep_tf(ion, ["polynomial"], grid)


def test_forced_oscillator_constant_push():
    omega, tau, a = 1.3, 2.0, 0.7
    t = np.linspace(0, tau, 2001)
    got = forced_oscillator_energy(t, np.full_like(t, a), omega, 1.0)
    expected = 0.5 * a * a * (2 - 2 * math.cos(omega * tau)) / omega**2
    assert got == pytest.approx(expected, rel=1e-10)


def test_hardware_estimates(atom, ion):
    with pytest.raises(WrongScenario):
        hardware_feasibility(ion, 1e-6)
    h = hardware_feasibility(atom, 63e-6)
    assert h.a_peak >= h.a_max
    assert h.a_max == pytest.approx(2 * h.displacement / 63e-6**2)
    assert h.a_peak == pytest.approx(10 / math.sqrt(3) * h.displacement / 63e-6**2, rel=0.01)
    assert 1 <= h.gradient_G <= 100
    assert h.gradient_G == pytest.approx(atom.params.mass * h.a_peak / CONSTANTS.bohr_magneton)
    assert h.dipole_power_over_waist_cubed == pytest.approx(atom.params.mass * h.a_peak / 1.3e-36)
    h2 = hardware_feasibility(atom, 126e-6)
    assert h2.a_max == pytest.approx(h.a_max / 4, rel=1e-9)
