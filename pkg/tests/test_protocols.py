import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasflip.core import CONSTANTS, Grid, Wavefunction, inner_product
from biasflip.errors import NonPositiveDuration, ShiftTooLarge, ValidityViolation
from biasflip.experiments import BE9_ION_MASS, atom_rb87, ion_be9
from biasflip.potentials import IonQuarticParams, analyze
from biasflip.protocols import (
    ProtocolKind,
    build_faquad,
    build_polynomial,
    build_protocol,
    build_sudden,
    compensate,
    default_samples,
    displacement_unitary_apply,
    faquad_constant,
    minima_trajectory,
    short_time_bound,
)
from biasflip.spectral import harmonic_eigenstate
from conftest import gaussian

G0 = 86.4e-21
ALPHA = -4.7e-12


@pytest.fixture(scope="module")
def ion():
    return ion_be9()


@pytest.fixture(scope="module")
def atom():
    return atom_rb87()


@settings(max_examples=50, deadline=None)
@given(
    l0=st.floats(-10, 10),
    l1=st.floats(-10, 10),
    tf=st.floats(1e-9, 1e3),
)
def test_polynomial_boundary_conditions(l0, l1, tf):
    spec = build_polynomial(l0, l1, tf)
    lam, d1, d2 = spec.derivatives(np.array([0.0, tf]))
    scale = max(abs(l0), abs(l1), 1.0)
    assert lam[0] == pytest.approx(l0, abs=1e-12 * scale)
    assert lam[1] == pytest.approx(l1, abs=1e-12 * scale)
    np.testing.assert_allclose(d1 * tf, 0, atol=1e-12 * scale)
    np.testing.assert_allclose(d2 * tf**2, 0, atol=1e-12 * scale)


def test_polynomial_coefficients_and_midpoint():
    spec = build_polynomial(2.0, -2.0, 3.0)
    assert spec.poly_coeffs == (2.0, 0.0, 0.0, -40.0, 60.0, -24.0)
    assert spec.value(1.5) == pytest.approx(0.0, abs=1e-15)


def test_polynomial_peak_acceleration():
    tf, delta = 2.0, 3.0
    spec = build_polynomial(0.0, delta, tf)
    t = np.linspace(0, tf, 200_001)
    d2 = spec.derivatives(t)[2]
    i = np.argmax(np.abs(d2))
    assert abs(d2[i]) == pytest.approx(10 / math.sqrt(3) * delta / tf**2, rel=1e-8)
    assert t[i] / tf in (pytest.approx((3 - math.sqrt(3)) / 6, abs=1e-4), pytest.approx((3 + math.sqrt(3)) / 6, abs=1e-4))


@pytest.mark.parametrize("builder", [build_polynomial, build_faquad])
@pytest.mark.parametrize("tf", [0.0, -1.0])
def test_non_positive_duration(builder, tf):
    with pytest.raises(NonPositiveDuration):
        builder(1.0, -1.0, tf)


def test_faquad_linear():
    spec = build_faquad(3.0, -1.0, 4.0)
    assert spec.value(2.0) == pytest.approx(1.0)
    lam, d1, d2 = spec.derivatives(np.linspace(0, 4, 9))
    np.testing.assert_allclose(np.diff(lam), -0.5)
    np.testing.assert_allclose(d1, -1.0)
    np.testing.assert_allclose(d2, 0.0)


def test_faquad_constant_at_period(ion):
    wa = analyze(ion.params)
    omega = wa.omega_ref
    tf = 2 * math.pi / omega
    assert tf == pytest.approx(0.179e-6, rel=0.02)
    m = ion.params.mass
    spec = build_faquad(G0, -G0, tf, displacement=wa.displacement, mass=m, omega=omega)
    expected = m * wa.displacement * omega / (2 * math.pi * math.sqrt(2 * CONSTANTS.hbar * m * omega))
    assert spec.faquad_c == pytest.approx(expected, rel=1e-12)


def test_faquad_adiabaticity_ratio_constant():
    # rigid harmonic transport on a linear ramp, internal units
    grid = Grid.centered(1.0, 40.0, 512)
    tf, d = 5.0, 2.0
    spec = build_faquad(0.0, d, tf)
    ratios = []
    for t in np.linspace(0, tf, 7):
        x0, v0, _ = (float(a) for a in spec.derivatives(t))
        phi0 = harmonic_eigenstate(0, 1.0, x0, grid)
        phi1 = harmonic_eigenstate(1, 1.0, x0, grid)
        dh = Wavefunction(grid, -(grid.x - x0) * v0 * phi0.amplitudes)  # dH/dt = -omega^2 (x - x0) x0'
        ratios.append(abs(inner_product(phi1, dh)) / 1.0**2)
    assert np.ptp(ratios) < 1e-10 * max(ratios)
    assert ratios[0] == pytest.approx(faquad_constant(d, tf, 1.0, 1.0, 1.0), rel=1e-10)


def test_sudden_spec():
    spec = build_sudden(1.0, -1.0)
    assert spec.kind is ProtocolKind.SUDDEN
    assert spec.t_final == 0.0
    assert spec.value(0.0) == 1.0
    assert spec.value(1e-12) == -1.0
    with pytest.raises(ValueError):
        minima_trajectory(spec, ion_be9().params)


def test_build_protocol_dispatch():
    assert build_protocol("compensated", 1, -1, 1.0).kind.compensated
    assert build_protocol("polynomial", 1, -1, 1.0).kind is ProtocolKind.POLYNOMIAL
    assert build_protocol("faquad", 1, -1, 1.0).kind is ProtocolKind.FAQUAD
    assert build_protocol("sudden", 1, -1, 1.0).t_final == 0.0


def test_default_samples():
    assert default_samples(1e-9, 2 * math.pi * 1e6) == 2001
    assert default_samples(100.0, 2 * math.pi) >= 200 * 100


def test_ion_trajectory_boundaries_and_linear_regime(ion):
    spec = build_polynomial(G0, -G0, 0.2e-6)
    traj = minima_trajectory(spec, ion.params, "left")
    assert traj.x0_dot[0] == 0 and traj.x0_ddot[0] == 0
    assert abs(traj.x0_dot[-1]) < 1e-12 * abs(traj.x0_dot).max()
    assert abs(traj.x0_ddot[-1]) < 1e-12 * abs(traj.x0_ddot).max()
    np.testing.assert_array_equal(traj.lambda_eff, traj.lam)
    linear = traj.lambda_ddot / (4 * ALPHA)
    assert np.max(np.abs(traj.x0_ddot - linear)) < 0.005 * np.max(np.abs(linear))
    assert len(traj.times) >= 2001


def test_atom_trajectory_travel(atom):
    spec = build_polynomial(atom.lambda0, -atom.lambda0, 63e-6)
    traj = minima_trajectory(spec, atom.params, "left")
    assert abs(traj.x0[-1] - traj.x0[0]) == pytest.approx(0.4e-6, rel=0.1)


def test_trajectory_validity_violation():
    p = IonQuarticParams(ALPHA, 5.2e-3, 0.0, BE9_ION_MASS)
    big = 1.2 * p.two_minima_bound
    with pytest.raises(ValidityViolation):
        minima_trajectory(build_polynomial(big, -big, 1e-6), p)


def test_compensation_ion_short_duration(ion):
    spec = build_polynomial(G0, -G0, 0.07e-6, compensated=True)
    traj = minima_trajectory(spec, ion.params, "left")
    assert traj.compensated
    assert np.max(np.abs(traj.lambda_eff)) > G0
    assert traj.lambda_eff[0] == pytest.approx(traj.lam[0], rel=1e-12)
    assert traj.lambda_eff[-1] == pytest.approx(traj.lam[-1], rel=1e-9)
    np.testing.assert_array_equal(traj.extra_slope, 0.0)
    # large oscillation: gamma_eff first dips below -gamma0, then overshoots +gamma0
    i_max, i_min = np.argmax(traj.lambda_eff), np.argmin(traj.lambda_eff)
    assert 0 < i_min < i_max < len(traj.times) - 1
    assert traj.lambda_eff[i_min] < -G0 and traj.lambda_eff[i_max] > G0
    # forward substitution recovers gamma within the quadratic correction
    m = ion.params.mass
    recovered = traj.lambda_eff + m * traj.lambda_ddot / (4 * ALPHA)
    assert np.max(np.abs(recovered - traj.lam)) < 0.005 * np.max(np.abs(traj.lambda_eff - traj.lam))


def test_compensation_peak_matches_quintic(ion):
    tf = 0.1e-6
    traj = minima_trajectory(build_polynomial(G0, -G0, tf, compensated=True), ion.params, "left", n_samples=20001)
    d = abs(traj.x0[-1] - traj.x0[0])
    assert np.max(np.abs(traj.x0_ddot)) == pytest.approx(10 / math.sqrt(3) * d / tf**2, rel=0.01)


def test_compensation_atom_is_extra_slope(atom):
    spec = build_polynomial(atom.lambda0, -atom.lambda0, 63e-6, compensated=True)
    traj = minima_trajectory(spec, atom.params, "left")
    np.testing.assert_array_equal(traj.lambda_eff, traj.lam)
    np.testing.assert_allclose(traj.extra_slope, -atom.params.mass * traj.x0_ddot)


def test_compensation_adiabatic_limit(ion):
    traj = minima_trajectory(build_polynomial(G0, -G0, 1e-3, compensated=True), ion.params, "left", n_samples=4001)
    assert np.max(np.abs(traj.lambda_eff - traj.lam)) < 1e-3 * G0


def test_compensate_with_zero_acceleration_is_identity(ion):
    traj = minima_trajectory(build_polynomial(G0, -G0, 1e-6), ion.params, "left")
    from dataclasses import replace

    flat = replace(traj, x0_ddot=np.zeros_like(traj.x0_ddot))
    out = compensate(flat, ion.params)
    np.testing.assert_array_equal(out.lambda_eff, flat.lam)
    np.testing.assert_array_equal(out.extra_slope, 0.0)


def test_short_time_bound(ion):
    p = ion.params
    t1 = short_time_bound(p, G0)
    assert 0.5e-9 < t1 < 2e-9
    assert short_time_bound(p, 4 * G0) == pytest.approx(2 * t1, rel=1e-12)
    # direct oracle: duration at which the quintic's peak compensation m|x0''| reaches the
    # parallel-motion scale of the slope
    spec = build_polynomial(G0, -G0, 1.0)
    peak = np.max(np.abs(spec.derivatives(np.linspace(0, 1, 100_001))[2]))  # |gamma''| * tf^2
    t_direct = math.sqrt(p.mass * peak / (4 * abs(p.alpha)) / p.parallel_bound * 1.0)
    assert 0.1 < t1 / t_direct < 10


def test_trajectory_csv(tmp_path, ion):
    traj = minima_trajectory(build_polynomial(G0, -G0, 1e-7, compensated=True), ion.params, "left", n_samples=11)
    path = tmp_path / "traj.csv"
    traj.write_csv(path, "N")
    rows = list(csv.reader(open(path)))
    header = rows[0]
    for col in ("t_s", "lambda_N", "lambda_dot_N_per_s", "lambda_ddot_N_per_s2", "x0_m", "x0_ddot_m_per_s2", "lambda_eff_N"):
        assert col in header
    assert len(rows) == 12
    assert float(rows[-1][header.index("t_s")]) == pytest.approx(1e-7)


# --- displacement unitary ---------------------------------------------------


def test_displacement_identity(hgrid):
    psi = gaussian(hgrid, 0.7)
    out = displacement_unitary_apply(psi, 0.0, 0.0)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-13)


def test_displacement_shift_convention(hgrid):
    out = displacement_unitary_apply(gaussian(hgrid, 0.0), 1.0, 0.0)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    assert abs(inner_product(gaussian(hgrid, -1.0), out)) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(x0=st.floats(-9.0, 9.0), v0=st.floats(-2.0, 2.0), c=st.floats(-3.0, 3.0))
def test_displacement_moments_and_inverse(x0, v0, c):
    grid = Grid.centered(0.0, 40.0, 512)
    psi = gaussian(grid, c)
    out = displacement_unitary_apply(psi, x0, v0)
    assert out.mean_position() == pytest.approx(psi.mean_position() - x0, abs=grid.dx)
    back = displacement_unitary_apply(out, x0, v0, inverse=True)
    np.testing.assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-10)


def test_displacement_too_large(hgrid):
    with pytest.raises(ShiftTooLarge):
        displacement_unitary_apply(gaussian(hgrid), 0.3 * hgrid.span, 0.0)
