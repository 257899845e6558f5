"""Control-parameter schedules for the bias inversion.

A schedule moves the control lambda (gamma for the ion, the lattice
displacement for the atom) from ``lambda_start`` to ``lambda_end`` in
``t_final``. Kinds:

* ``sudden``: instantaneous switch, no trajectory;
* ``faquad``: linear ramp, which is the FAQUAD solution for rigid harmonic transport;
* ``polynomial``: quintic with vanishing first and second derivatives at both ends;
* ``compensated``: the quintic plus the compensating linear potential -m x0'' x.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from biasflip.core import CONSTANTS, Wavefunction
from biasflip.errors import NonPositiveDuration, ShiftTooLarge, ValidityViolation
from biasflip.potentials import IonQuarticParams, Params, minimum_sensitivity, validity_report


class ProtocolKind(str, enum.Enum):
    SUDDEN = "sudden"
    POLYNOMIAL = "polynomial"
    FAQUAD = "faquad"
    COMPENSATED = "compensated"

    @property
    def compensated(self) -> bool:
        return self is ProtocolKind.COMPENSATED


@dataclass(frozen=True)
class ProtocolSpec:
    kind: ProtocolKind
    lambda_start: float
    lambda_end: float
    t_final: float  # s
    faquad_c: Optional[float] = None
    poly_coeffs: Optional[tuple[float, ...]] = None  # in powers of s = t / t_final

    @property
    def delta(self) -> float:
        return self.lambda_end - self.lambda_start

    def derivatives(self, t):
        """(lambda, dlambda/dt, d2lambda/dt2) at time(s) t."""
        t = np.asarray(t, dtype=float)
        if self.kind is ProtocolKind.SUDDEN:
            lam = np.where(t > 0, self.lambda_end, self.lambda_start)
            zero = np.zeros_like(t)
            return lam, zero, zero
        tf = self.t_final
        s = np.clip(t / tf, 0.0, 1.0)
        if self.kind is ProtocolKind.FAQUAD:
            inside = (t >= 0) & (t <= tf)
            return (
                self.lambda_start + self.delta * s,
                np.where(inside, self.delta / tf, 0.0),
                np.zeros_like(s),
            )
        c = self.poly_coeffs
        lam = c[0] + s**3 * (c[3] + s * (c[4] + s * c[5]))
        d1 = s**2 * (3 * c[3] + s * (4 * c[4] + 5 * c[5] * s)) / tf
        d2 = s * (6 * c[3] + s * (12 * c[4] + 20 * c[5] * s)) / tf**2
        return lam, d1, d2

    def value(self, t):
        return self.derivatives(t)[0]


def _check_duration(t_final: float) -> None:
    if not t_final > 0:
        raise NonPositiveDuration(f"t_final must be positive, got {t_final!r}")


def build_polynomial(
    lambda_start: float, lambda_end: float, t_final: float, compensated: bool = False
) -> ProtocolSpec:
    """Quintic connection lambda(s) = l0 + D (10 s^3 - 15 s^4 + 6 s^5), D = l1 - l0."""
    _check_duration(t_final)
    delta = lambda_end - lambda_start
    coeffs = (lambda_start, 0.0, 0.0, 10 * delta, -15 * delta, 6 * delta)
    kind = ProtocolKind.COMPENSATED if compensated else ProtocolKind.POLYNOMIAL
    return ProtocolSpec(kind, lambda_start, lambda_end, t_final, poly_coeffs=coeffs)


def faquad_constant(displacement: float, t_final: float, mass: float, omega: float, hbar: float = CONSTANTS.hbar) -> float:
    """m v / sqrt(2 hbar m omega) for a linear move of length ``displacement``."""
    return mass * (displacement / t_final) / math.sqrt(2 * hbar * mass * omega)


def build_faquad(
    lambda_start: float,
    lambda_end: float,
    t_final: float,
    *,
    displacement: Optional[float] = None,
    mass: Optional[float] = None,
    omega: Optional[float] = None,
    hbar: float = CONSTANTS.hbar,
) -> ProtocolSpec:
    """Linear ramp. The FAQUAD constant is recorded when the well travel is given."""
    _check_duration(t_final)
    c = None
    if displacement is not None and mass is not None and omega is not None:
        c = faquad_constant(displacement, t_final, mass, omega, hbar)
    return ProtocolSpec(ProtocolKind.FAQUAD, lambda_start, lambda_end, t_final, faquad_c=c)


def build_sudden(lambda_start: float, lambda_end: float) -> ProtocolSpec:
    return ProtocolSpec(ProtocolKind.SUDDEN, lambda_start, lambda_end, 0.0)


def build_protocol(kind, lambda_start: float, lambda_end: float, t_final: float) -> ProtocolSpec:
    kind = ProtocolKind(kind)
    if kind is ProtocolKind.SUDDEN:
        return build_sudden(lambda_start, lambda_end)
    if kind is ProtocolKind.FAQUAD:
        return build_faquad(lambda_start, lambda_end, t_final)
    return build_polynomial(lambda_start, lambda_end, t_final, compensated=kind.compensated)


@dataclass(frozen=True)
class ProtocolTrajectory:
    """Sampled schedule in SI units.

    ``lambda_eff`` is the control actually applied (ion: gamma - m x0'');
    ``extra_slope`` is the slope of an additional linear potential (atom:
    -m x0''). Exactly one of the two carries the compensation.
    """

    kind: ProtocolKind
    well: str
    times: np.ndarray
    lam: np.ndarray
    lambda_dot: np.ndarray
    lambda_ddot: np.ndarray
    x0: np.ndarray
    x0_dot: np.ndarray
    x0_ddot: np.ndarray
    lambda_eff: np.ndarray
    extra_slope: np.ndarray
    compensated: bool = False

    def write_csv(self, path, control_unit: str) -> None:
        u = control_unit
        header = [
            "t_s",
            "s",
            f"lambda_{u}",
            f"lambda_dot_{u}_per_s",
            f"lambda_ddot_{u}_per_s2",
            "x0_m",
            "x0_ddot_m_per_s2",
            f"lambda_eff_{u}",
            "extra_slope_N",
        ]
        tf = self.times[-1] if self.times[-1] > 0 else 1.0
        cols = [
            self.times,
            self.times / tf,
            self.lam,
            self.lambda_dot,
            self.lambda_ddot,
            self.x0,
            self.x0_ddot,
            self.lambda_eff,
            self.extra_slope,
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


def trajectory_point(spec: ProtocolSpec, params: Params, t: float, well: str) -> tuple[float, ...]:
    """(lambda, lambda', lambda'', x0, x0', x0'') at time t (SI)."""
    lam, d1, d2 = (float(v) for v in spec.derivatives(t))
    x0, dx, d2x = minimum_sensitivity(params.with_control(lam), well)
    return lam, d1, d2, x0, dx * d1, d2x * d1**2 + dx * d2


def default_samples(t_final: float, omega_ref: float) -> int:
    per_period = 200 * t_final * omega_ref / (2 * math.pi)
    return max(2001, math.ceil(per_period) + 1)


def minima_trajectory(
    spec: ProtocolSpec, params: Params, well: str = "left", n_samples: Optional[int] = None
) -> ProtocolTrajectory:
    """Sample the schedule and the exact minimum of ``well`` along it.

    x0' and x0'' follow from the chain rule with exact dx0/dlambda and
    d2x0/dlambda2. Raises ValidityViolation when the parallel-transport margin
    fails at the schedule extremes.
    """
    if spec.kind is ProtocolKind.SUDDEN:
        raise ValueError("a sudden switch has no trajectory")
    lam_max = max(abs(spec.lambda_start), abs(spec.lambda_end))
    report = validity_report(params, lam_max)
    if report.status == "fail":
        raise ValidityViolation(
            f"parallel-motion margin {report.parallel_margin:.3g} / frequency margin "
            f"{report.frequency_margin:.3g} too large at |lambda|={lam_max:g}"
        )
    n = n_samples or default_samples(spec.t_final, params.omega_ref)
    times = np.linspace(0.0, spec.t_final, n)
    rows = np.array([trajectory_point(spec, params, t, well) for t in times])
    lam = rows[:, 0]
    traj = ProtocolTrajectory(
        kind=spec.kind,
        well=well,
        times=times,
        lam=lam,
        lambda_dot=rows[:, 1],
        lambda_ddot=rows[:, 2],
        x0=rows[:, 3],
        x0_dot=rows[:, 4],
        x0_ddot=rows[:, 5],
        lambda_eff=lam.copy(),
        extra_slope=np.zeros_like(lam),
    )
    if spec.kind.compensated:
        traj = compensate(traj, params)
    return traj


def compensation_slope(params: Params, x0_ddot):
    """Slope -m x0'' of the linear potential that cancels the well's inertial force."""
    return -params.mass * np.asarray(x0_ddot)


def compensate(traj: ProtocolTrajectory, params: Params) -> ProtocolTrajectory:
    """Add -m x0'' x: folded into gamma for the ion, kept separate for the atom."""
    slope = compensation_slope(params, traj.x0_ddot)
    if isinstance(params, IonQuarticParams):
        return replace(traj, lambda_eff=traj.lam + slope, extra_slope=np.zeros_like(slope), compensated=True)
    return replace(traj, lambda_eff=traj.lam.copy(), extra_slope=slope, compensated=True)


def short_time_bound(params: IonQuarticParams, gamma0: float) -> float:
    """Duration below which the compensated slope leaves the parallel-motion regime."""
    a, b = params.alpha, params.beta
    return math.sqrt(3 * params.mass * gamma0 / (4 * math.sqrt(2)) * math.sqrt(-b / a**5))


def displacement_unitary_apply(
    psi: Wavefunction,
    x0: float,
    v0: float,
    mass: float = 1.0,
    hbar: float = 1.0,
    inverse: bool = False,
) -> Wavefunction:
    """Apply exp(i p x0/hbar) exp(-i m v0 x/hbar), or its inverse.

    exp(i p x0/hbar) maps psi(x) to psi(x + x0), i.e. moves a packet by -x0.
    The translation is done in Fourier space and is exact for band-limited states.
    """
    grid = psi.grid
    if abs(x0) > grid.span / 4:
        raise ShiftTooLarge(f"shift {x0:g} exceeds a quarter of the grid span")
    boost = np.exp(-1j * mass * v0 * grid.x / hbar)
    shift = np.exp(1j * grid.k * x0)
    amps = psi.amplitudes
    if inverse:
        out = np.fft.ifft(np.conj(shift) * np.fft.fft(amps)) * np.conj(boost)
    else:
        out = np.fft.ifft(shift * np.fft.fft(boost * amps))
    return Wavefunction(grid, out)
