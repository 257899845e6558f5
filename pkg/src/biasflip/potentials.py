"""Double-well potential models and their closed-form analytics.

Two scenarios are supported:

* a trapped ion in the quartic well ``V = beta x^4 + alpha x^2 + gamma x``
  controlled through the slope ``gamma``;
* a neutral atom in a dipole trap plus optical lattice,
  ``V = m w^2 x^2 / 2 + V0 cos^2(pi (x - dx) / d_l)``, controlled through the
  lattice displacement ``dx``.

Everything in this module works in SI units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy.optimize import brentq

from biasflip.core import CONSTANTS
from biasflip.errors import NotDoubleWell

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class IonQuarticParams:
    alpha: float  # N/m, negative
    beta: float  # N/m^3, positive
    gamma: float  # N
    mass: float  # kg

    kind = "ion"
    control_unit = "N"

    def __post_init__(self):
        if not self.alpha < 0:
            raise ValueError("alpha must be negative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    @property
    def control(self) -> float:
        return self.gamma

    def with_control(self, value: float) -> IonQuarticParams:
        return replace(self, gamma=float(value))

    @property
    def two_minima_bound(self) -> float:
        """Largest |gamma| for which two minima exist."""
        return (2 / 3) ** 1.5 * math.sqrt(-self.alpha**3 / self.beta)

    @property
    def parallel_bound(self) -> float:
        """Scale of |gamma| below which both minima move in parallel."""
        return 4 * math.sqrt(2) / 3 * math.sqrt(-self.alpha**3 / self.beta)

    @property
    def omega_ref(self) -> float:
        return 2 * math.sqrt(-self.alpha / self.mass)


@dataclass(frozen=True)
class AtomLatticeParams:
    omega: float  # rad/s, dipole trap
    v0: float  # J, lattice depth
    d_lattice: float  # m
    delta_x: float  # m, lattice displacement
    mass: float  # kg

    kind = "atom"
    control_unit = "m"

    def __post_init__(self):
        if not (self.omega > 0 and self.v0 > 0 and self.d_lattice > 0 and self.mass > 0):
            raise ValueError("omega, v0, d_lattice and mass must all be positive")

    @property
    def control(self) -> float:
        return self.delta_x

    def with_control(self, value: float) -> AtomLatticeParams:
        return replace(self, delta_x=float(value))

    @property
    def omega_ref(self) -> float:
        x_plus = stationary_points(self.with_control(0.0))[2]
        return local_frequency(self.with_control(0.0), x_plus)


Params = Union[IonQuarticParams, AtomLatticeParams]


@dataclass(frozen=True)
class CubicIntermediates:
    """Coefficients of x^3 + a x^2 + b x + c = 0 and its trigonometric solution."""

    a_coef: float
    b_coef: float
    c_coef: float
    q_val: float
    r_val: float
    theta: float

    @property
    def two_minima(self) -> bool:
        return self.r_val**2 < self.q_val**3


@dataclass(frozen=True)
class WellAnalysis:
    """Analytics of one configuration and of the inversion control -> -control."""

    control: float
    x_minus: float
    x_plus: float
    barrier_x: float
    distance: float
    bias: float
    omega_minus: float
    omega_plus: float
    omega_ref: float
    displacement: float
    oscillator_length: float
    ratio: float

    def minimum(self, well: str) -> float:
        return self.x_minus if well == LEFT else self.x_plus

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


# --------------------------------------------------------------------------
# potential values and derivatives


def evaluate_potential(params: Params, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if isinstance(params, IonQuarticParams):
        return params.beta * x**4 + params.alpha * x**2 + params.gamma * x
    phase = math.pi * (x - params.delta_x) / params.d_lattice
    return 0.5 * params.mass * params.omega**2 * x**2 + params.v0 * np.cos(phase) ** 2


def potential_relative(params: Params, x, center: float) -> np.ndarray:
    """V(x) - V(center), expanded so that no large terms cancel.

    For the ion well the grid sits tens of micrometres from the origin while
    the interesting energies are many orders of magnitude smaller than V.
    """
    x = np.asarray(x, dtype=float)
    y = x - center
    if isinstance(params, IonQuarticParams):
        b, a, c = params.beta, params.alpha, center
        c1 = 4 * b * c**3 + 2 * a * c + params.gamma
        c2 = 6 * b * c**2 + a
        c3 = 4 * b * c
        return y * (c1 + y * (c2 + y * (c3 + y * b)))
    k = math.pi / params.d_lattice
    u_mid = k * (x + center - 2 * params.delta_x)
    # cos^2(a) - cos^2(b) = -sin(a + b) sin(a - b)
    lattice = -params.v0 * np.sin(u_mid) * np.sin(k * y)
    return 0.5 * params.mass * params.omega**2 * y * (x + center) + lattice


def _derivatives(params: Params, x: float) -> tuple[float, ...]:
    """(V_x, V_xx, V_xxx, V_xl, V_xxl, V_xll) with l the control parameter."""
    if isinstance(params, IonQuarticParams):
        b, a = params.beta, params.alpha
        return (4 * b * x**3 + 2 * a * x + params.gamma, 12 * b * x**2 + 2 * a, 24 * b * x, 1.0, 0.0, 0.0)
    k = math.pi / params.d_lattice
    v0 = params.v0
    two_u = 2 * k * (x - params.delta_x)
    s, c = math.sin(two_u), math.cos(two_u)
    mw2 = params.mass * params.omega**2
    return (
        mw2 * x - v0 * k * s,
        mw2 - 2 * v0 * k**2 * c,
        4 * v0 * k**3 * s,
        2 * v0 * k**2 * c,
        -4 * v0 * k**3 * s,
        4 * v0 * k**3 * s,
    )


def force_gradient(params: Params, x: float) -> float:
    """dV/dx at x."""
    return _derivatives(params, x)[0]


def local_frequency(params: Params, x: float) -> float:
    curvature = _derivatives(params, x)[1]
    if curvature <= 0:
        raise NotDoubleWell(f"potential is not convex at x={x:g}")
    return math.sqrt(curvature / params.mass)


# --------------------------------------------------------------------------
# stationary points


def ion_cubic(params: IonQuarticParams) -> CubicIntermediates:
    a = 0.0
    b = 2 * params.alpha / (4 * params.beta)
    c = params.gamma / (4 * params.beta)
    q = (a**2 - 3 * b) / 9
    r = (2 * a**3 - 9 * a * b + 27 * c) / 54
    ratio = max(-1.0, min(1.0, r / math.sqrt(q**3)))
    return CubicIntermediates(a, b, c, q, r, math.acos(ratio))


def _ion_stationary(params: IonQuarticParams) -> tuple[float, float, float]:
    if not abs(params.gamma) < params.two_minima_bound:
        raise NotDoubleWell(
            f"|gamma|={abs(params.gamma):g} N is not below the two-minima bound "
            f"{params.two_minima_bound:g} N"
        )
    cub = ion_cubic(params)
    if not cub.two_minima:
        raise NotDoubleWell("cubic has a single real root")
    sq = math.sqrt(cub.q_val)
    roots = [-2 * sq * math.cos((cub.theta + 2 * math.pi * j) / 3) - cub.a_coef / 3 for j in range(3)]
    x_minus, x_plus, barrier = roots
    return x_minus, barrier, x_plus


def _polish(params: Params, x: float, steps: int = 2) -> float:
    for _ in range(steps):
        d = _derivatives(params, x)
        if d[1] == 0:
            break
        x = x - d[0] / d[1]
    return x


def _root(params: Params, lo: float, hi: float) -> float:
    f_lo, f_hi = force_gradient(params, lo), force_gradient(params, hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NotDoubleWell(f"no stationary point bracketed in [{lo:g}, {hi:g}]")
    root = brentq(lambda x: force_gradient(params, x), lo, hi, xtol=1e-16 * abs(hi - lo), rtol=1e-15, maxiter=200)
    polished = _polish(params, root)
    return polished if lo <= polished <= hi else root


def _atom_stationary(params: AtomLatticeParams) -> tuple[float, float, float]:
    dl = params.d_lattice
    # lattice maximum closest to the trap centre separates the two central wells
    top = params.delta_x - dl * round(params.delta_x / dl)
    q = dl / 4
    barrier = _root(params, top - q, top + q)
    x_minus = _root(params, top - dl / 2 - q, top - dl / 2 + q)
    x_plus = _root(params, top + dl / 2 - q, top + dl / 2 + q)
    if _derivatives(params, barrier)[1] >= 0:
        raise NotDoubleWell("central stationary point is not a barrier")
    for xm in (x_minus, x_plus):
        if _derivatives(params, xm)[1] <= 0:
            raise NotDoubleWell("lattice site does not host a minimum")
    if not x_minus < barrier < x_plus:
        raise NotDoubleWell("stationary points are out of order")
    return x_minus, barrier, x_plus


def stationary_points(params: Params) -> tuple[float, float, float]:
    """(x_minus, barrier_x, x_plus) of the central double well."""
    if isinstance(params, IonQuarticParams):
        return _ion_stationary(params)
    return _atom_stationary(params)


def well_minimum(params: Params, well: str) -> float:
    x_minus, _, x_plus = stationary_points(params)
    return x_minus if well == LEFT else x_plus


def minimum_sensitivity(params: Params, well: str) -> tuple[float, float, float]:
    """Minimum position and its first two derivatives with respect to the control.

    Derivatives follow from differentiating the stationarity condition
    V_x(x0(l), l) = 0 implicitly, so they are exact to rounding.
    """
    x0 = well_minimum(params, well)
    _, vxx, vxxx, vxl, vxxl, vxll = _derivatives(params, x0)
    dx = -vxl / vxx
    d2x = -(vxxx * dx**2 + 2 * vxxl * dx + vxll) / vxx
    return x0, dx, d2x


# --------------------------------------------------------------------------
# analyses


def _analysis(params: Params, omega_ref: float) -> WellAnalysis:
    hbar = CONSTANTS.hbar
    x_minus, barrier, x_plus = stationary_points(params)
    mirrored = stationary_points(params.with_control(-params.control))
    displacement = 0.5 * (abs(x_minus - mirrored[0]) + abs(x_plus - mirrored[2]))
    a0 = math.sqrt(hbar / (params.mass * omega_ref))
    v = evaluate_potential(params, [x_minus, x_plus])
    return WellAnalysis(
        control=params.control,
        x_minus=x_minus,
        x_plus=x_plus,
        barrier_x=barrier,
        distance=x_plus - x_minus,
        bias=float(v[1] - v[0]),
        omega_minus=local_frequency(params, x_minus),
        omega_plus=local_frequency(params, x_plus),
        omega_ref=omega_ref,
        displacement=displacement,
        oscillator_length=a0,
        ratio=displacement / a0,
    )


def ion_minima(params: IonQuarticParams) -> tuple[WellAnalysis, CubicIntermediates]:
    """Exact analytics from the trigonometric solution of 4 beta x^3 + 2 alpha x + gamma = 0."""
    return _analysis(params, params.omega_ref), ion_cubic(params)


def ion_minima_approx(params: IonQuarticParams) -> tuple[float, float]:
    """Minima to second order in gamma."""
    a, b, g = params.alpha, params.beta, params.gamma
    half = math.sqrt(-a / b) / math.sqrt(2)
    quad = 3 * g**2 * math.sqrt(-a * b) / (16 * math.sqrt(2) * a**3)
    return -half + g / (4 * a) - quad, half + g / (4 * a) + quad


def atom_cubics(params: AtomLatticeParams) -> tuple[CubicIntermediates, CubicIntermediates]:
    """Cubic intermediates of the fourth-order local expansion, (minus, plus) wells."""
    pi = math.pi
    dl, v0, m, w, dx = params.d_lattice, params.v0, params.mass, params.omega, params.delta_x
    q = (2 * dl**2 * pi**2 * v0 + dl**4 * m * w**2) / (4 * pi**4 * v0)
    out = []
    for sign in (-1, +1):
        a = -1.5 * (2 * dx + sign * dl)
        arg = -3 * dl * (2 * dx + sign * dl) * m * pi**2 * math.sqrt(v0) * w**2 / (
            2 * (2 * pi**2 * v0 + dl**2 * m * w**2) ** 1.5
        )
        if not -1 <= arg <= 1:
            raise NotDoubleWell("closed-form cubic has no trigonometric solution")
        theta = math.acos(arg)
        r = math.sqrt(q**3) * math.cos(theta)
        b = (a**2 - 9 * q) / 3
        c = (54 * r - 2 * a**3 + 9 * a * b) / 27
        out.append(CubicIntermediates(a, b, c, q, r, theta))
    return out[0], out[1]


def atom_minima_closed_form(params: AtomLatticeParams) -> tuple[float, float]:
    minus, plus = atom_cubics(params)
    return tuple(
        -2 * math.sqrt(c.q_val) * math.cos((c.theta - 2 * math.pi) / 3) - c.a_coef / 3 for c in (minus, plus)
    )


def atom_minima(params: AtomLatticeParams) -> tuple[WellAnalysis, tuple[CubicIntermediates, CubicIntermediates]]:
    """Exact analytics by bracketed root finding on dV/dx.

    The closed-form cubic solution is returned alongside for comparison; the
    root-found minima are the ones used everywhere else.
    """
    return _analysis(params, params.omega_ref), atom_cubics(params)


def analyze(params: Params) -> WellAnalysis:
    if isinstance(params, IonQuarticParams):
        return ion_minima(params)[0]
    return atom_minima(params)[0]


@dataclass(frozen=True)
class AtomExpansion:
    """x0,+- ~ +-a + b dx +- c dx^2 and omega0,+- ~ f -+ g dx."""

    a: float
    b: float
    c: float
    f: float
    g: float


def atom_minima_expansion(params: AtomLatticeParams, step: float | None = None) -> AtomExpansion:
    """Expansion coefficients from five-point stencils on the exact minima."""
    h = 2e-3 * params.d_lattice if step is None else step
    shifts = (-2 * h, -h, 0.0, h, 2 * h)
    plus = []
    omega_plus = []
    for s in shifts:
        p = params.with_control(s)
        xp = stationary_points(p)[2]
        plus.append(xp)
        omega_plus.append(local_frequency(p, xp))
    m2, m1, z, p1, p2 = plus
    b = (8 * (p1 - m1) - (p2 - m2)) / (12 * h)
    c = (-p2 + 16 * p1 - 30 * z + 16 * m1 - m2) / (24 * h**2)
    w_m2, w_m1, w_z, w_p1, w_p2 = omega_plus
    g = -(8 * (w_p1 - w_m1) - (w_p2 - w_m2)) / (12 * h)
    return AtomExpansion(a=z, b=b, c=c, f=w_z, g=g)


# --------------------------------------------------------------------------
# validity


OK_MARGIN = 0.1
WARN_MARGIN = 0.5


def classify_margin(margin: float) -> str:
    if margin <= OK_MARGIN:
        return "ok"
    if margin <= WARN_MARGIN:
        return "warn"
    return "fail"


@dataclass(frozen=True)
class ValidityReport:
    kind: str
    control_max: float
    two_minima_bound: float | None
    parallel_bound: float
    two_minima_margin: float | None
    parallel_margin: float
    frequency_margin: float
    frequency_variation: float
    distance_variation: float
    double_well_ok: bool
    status: str

    @property
    def parallel_ok(self) -> bool:
        return self.parallel_margin < OK_MARGIN

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["parallel_ok"] = self.parallel_ok
        return d


def sweep_wells(params: Params, control_max: float, n: int = 201) -> dict[str, np.ndarray]:
    """Exact minima and frequencies over control in [-control_max, control_max]."""
    controls = np.linspace(-control_max, control_max, n)
    rows = []
    for lam in controls:
        p = params.with_control(lam)
        xm, _, xp = stationary_points(p)
        rows.append((xm, xp, local_frequency(p, xm), local_frequency(p, xp)))
    arr = np.array(rows)
    return {
        "control": controls,
        "x_minus": arr[:, 0],
        "x_plus": arr[:, 1],
        "omega_minus": arr[:, 2],
        "omega_plus": arr[:, 3],
    }


def validity_report(params: Params, control_max: float | None = None) -> ValidityReport:
    """Check the two-minima and parallel-transport regimes for |control| <= control_max."""
    lam = abs(params.control if control_max is None else control_max)
    if isinstance(params, IonQuarticParams):
        two_bound = params.two_minima_bound
        par_bound = params.parallel_bound
        two_margin = lam / two_bound
        double_ok = two_margin < 1
    else:
        two_bound = None
        two_margin = None
        try:
            for s in (-lam, 0.0, lam):
                stationary_points(params.with_control(s))
            double_ok = True
        except NotDoubleWell:
            double_ok = False
        if double_ok:
            exp = atom_minima_expansion(params)
            par_bound = abs(exp.b / exp.c) if exp.c != 0 else math.inf
        else:
            par_bound = 0.0
    if not double_ok:
        return ValidityReport(
            params.kind, lam, two_bound, par_bound, two_margin, math.inf, math.inf, math.nan, math.nan, False, "fail"
        )
    par_margin = lam / par_bound if par_bound > 0 else math.inf
    omega_ref = params.omega_ref
    if lam == 0:
        freq_var = 0.0
        dist_var = 0.0
        freq_margin = 0.0
    else:
        sw = sweep_wells(params, lam)
        freq_var = float(
            max(np.ptp(sw["omega_minus"]), np.ptp(sw["omega_plus"]))
        )
        freq_margin = float(
            max(np.max(np.abs(sw["omega_minus"] - omega_ref)), np.max(np.abs(sw["omega_plus"] - omega_ref)))
            / omega_ref
        )
        dist = sw["x_plus"] - sw["x_minus"]
        d_zero = np.subtract(*stationary_points(params.with_control(0.0))[::-2])
        dist_var = float(np.max(np.abs(dist - d_zero)))
    worst = max(par_margin, freq_margin)
    return ValidityReport(
        kind=params.kind,
        control_max=lam,
        two_minima_bound=two_bound,
        parallel_bound=par_bound,
        two_minima_margin=two_margin,
        parallel_margin=par_margin,
        frequency_margin=freq_margin,
        frequency_variation=freq_var,
        distance_variation=dist_var,
        double_well_ok=True,
        status=classify_margin(worst),
    )
