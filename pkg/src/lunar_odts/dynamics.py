"""Lunar-orbiter and receiver-clock dynamics.

State (10): position, velocity (Moon-centred inertial, TCL-compatible),
clock bias, drift and drift rate (all times c, i.e. m, m/s, m/s^2) and
the SRP coefficient gamma = C_R A / m.

Forces: lunar spherical harmonics, Earth and Sun as third bodies, and
solar radiation pressure without shadowing.  The clock bias carries the
relativistic rate ``(mu_L/r + v^2/2)/c`` of a clock at the orbiter
relative to TCL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

from . import constants as k
from .gravity import GravityField, moon_orientation, sh_accel
from .timeframes import Body, CelestialEphemeris, hermite_eval

N_STATE = 10
IR = slice(0, 3)
IV = slice(3, 6)
ICLK = slice(6, 9)
ISRP = 9

_NS = _dop.N_STAGES
RK_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
RK_B = np.ascontiguousarray(_dop.B)
RK_C = np.ascontiguousarray(_dop.C[:_NS])

SRP_CONST = k.SOLAR_FLUX_1AU * k.AU**2 / k.C_LIGHT

# layout of the scalar parameter vector handed to the compiled kernels
P_MU, P_RAD, P_NMAX, P_MMAX, P_MU_E, P_MU_S, P_SRP, P_TDB0, P_TAB0, P_TABH, \
    P_EARTH, P_SUN, P_USE_SRP, P_REL, P_FD = range(15)


class PropagationError(ArithmeticError):
    pass


@dataclass(eq=False)
class ForceModel:
    """Force-model settings plus the arrays the compiled kernels need.

    Times handed to the dynamics are seconds past ``tdb_reference``
    (scenario seconds); ephemeris tables are sampled relative to the Moon.
    """

    gravity: GravityField
    ephemeris: CelestialEphemeris
    tdb_reference: float
    span: tuple[float, float]
    third_body_earth: bool = True
    third_body_sun: bool = True
    srp: bool = True
    relativistic_clock: bool = True
    table_step: float = 600.0
    fd_step: float = 1.0
    _par: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        scale = 1.0 / (1.0 - k.L_B)
        g = self.gravity.scaled(scale)
        self._c, self._s = g.unnormalized()
        t0 = self.tdb_reference + self.span[0] - 2 * self.table_step
        t1 = self.tdb_reference + self.span[1] + 2 * self.table_step
        _, pe, ve = self.ephemeris.sampled(Body.EARTH, Body.MOON, t0, t1, self.table_step)
        _, ps, vs = self.ephemeris.sampled(Body.SUN, Body.MOON, t0, t1, self.table_step)
        self._earth = (np.ascontiguousarray(pe), np.ascontiguousarray(ve))
        self._sun = (np.ascontiguousarray(ps), np.ascontiguousarray(vs))
        par = np.zeros(15)
        par[P_MU] = g.mu
        par[P_RAD] = g.radius
        par[P_NMAX] = g.degree
        par[P_MMAX] = g.order
        par[P_MU_E] = k.GM_EARTH * scale
        par[P_MU_S] = k.GM_SUN * scale
        par[P_SRP] = SRP_CONST * scale**2
        par[P_TDB0] = self.tdb_reference
        par[P_TAB0] = t0
        par[P_TABH] = self.table_step
        par[P_EARTH] = float(self.third_body_earth)
        par[P_SUN] = float(self.third_body_sun)
        par[P_USE_SRP] = float(self.srp)
        par[P_REL] = float(self.relativistic_clock)
        par[P_FD] = self.fd_step
        self._par = par

    @property
    def mu(self) -> float:
        return float(self._par[P_MU])

    def args(self):
        return (self._par, self._c, self._s, self._earth[0], self._earth[1], self._sun[0], self._sun[1])

    def earth_position(self, t: float) -> np.ndarray:
        p, _ = hermite_eval(self._par[P_TAB0], self.table_step, self._earth[0], self._earth[1],
                            self.tdb_reference + t)
        return p

    def sun_position(self, t: float) -> np.ndarray:
        p, _ = hermite_eval(self._par[P_TAB0], self.table_step, self._sun[0], self._sun[1],
                            self.tdb_reference + t)
        return p


@njit(cache=True)
def _third_body(r, rp, mu):
    d = rp - r
    dn = math.sqrt(d @ d)
    rpn = math.sqrt(rp @ rp)
    return mu * (d / dn**3 - rp / rpn**3)


@njit(cache=True)
def _third_body_grad(r, rp, mu):
    d = rp - r
    dn = math.sqrt(d @ d)
    return mu * (-np.eye(3) / dn**3 + 3.0 * np.outer(d, d) / dn**5)


@njit(cache=True)
def _accel(t, x, par, c, s, pe, ve, ps, vs):
    # total acceleration and the inertial bodies' positions at t
    tdb = par[P_TDB0] + t
    rot = moon_orientation(tdb)
    r = x[0:3]
    a = rot.T @ sh_accel(rot @ r, c, s, int(par[P_NMAX]), int(par[P_MMAX]), par[P_MU], par[P_RAD], 0)
    re, _ = hermite_eval(par[P_TAB0], par[P_TABH], pe, ve, tdb)
    rs, _ = hermite_eval(par[P_TAB0], par[P_TABH], ps, vs, tdb)
    if par[P_EARTH] > 0:
        a += _third_body(r, re, par[P_MU_E])
    if par[P_SUN] > 0:
        a += _third_body(r, rs, par[P_MU_S])
    if par[P_USE_SRP] > 0:
        d = rs - r
        dn = math.sqrt(d @ d)
        a -= x[9] * par[P_SRP] * d / dn**3
    return a, rot, re, rs


@njit(cache=True)
def _deriv(t, x, par, c, s, pe, ve, ps, vs):
    a, _, _, _ = _accel(t, x, par, c, s, pe, ve, ps, vs)
    dx = np.zeros(N_STATE)
    dx[0:3] = x[3:6]
    dx[3:6] = a
    dx[6] = x[7]
    dx[7] = x[8]
    if par[P_REL] > 0:
        rn = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
        v2 = x[3] ** 2 + x[4] ** 2 + x[5] ** 2
        dx[6] += (par[P_MU] / rn + 0.5 * v2) / 2.99792458e8
    return dx


@njit(cache=True)
def _jacobian(t, x, par, c, s, pe, ve, ps, vs):
    tdb = par[P_TDB0] + t
    rot = moon_orientation(tdb)
    r = x[0:3]
    rn = math.sqrt(r @ r)
    mu = par[P_MU]
    f = np.zeros((N_STATE, N_STATE))
    for i in range(3):
        f[i, 3 + i] = 1.0
    # central term analytically, the rest by central differences in the body frame
    g = mu * (3.0 * np.outer(r, r) / rn**5 - np.eye(3) / rn**3)
    nmax = int(par[P_NMAX])
    if nmax >= 1:
        rb = rot @ r
        h = par[P_FD]
        gb = np.zeros((3, 3))
        for j in range(3):
            rp = rb.copy()
            rm = rb.copy()
            rp[j] += h
            rm[j] -= h
            ap = sh_accel(rp, c, s, nmax, int(par[P_MMAX]), mu, par[P_RAD], 1)
            am = sh_accel(rm, c, s, nmax, int(par[P_MMAX]), mu, par[P_RAD], 1)
            gb[:, j] = (ap - am) / (2.0 * h)
        gb = 0.5 * (gb + gb.T)
        g += rot.T @ gb @ rot
    re, _ = hermite_eval(par[P_TAB0], par[P_TABH], pe, ve, tdb)
    rs, _ = hermite_eval(par[P_TAB0], par[P_TABH], ps, vs, tdb)
    if par[P_EARTH] > 0:
        g += _third_body_grad(r, re, par[P_MU_E])
    if par[P_SUN] > 0:
        g += _third_body_grad(r, rs, par[P_MU_S])
    if par[P_USE_SRP] > 0:
        d = rs - r
        dn = math.sqrt(d @ d)
        g += x[9] * par[P_SRP] * (np.eye(3) / dn**3 - 3.0 * np.outer(d, d) / dn**5)
        f[3:6, 9] = -par[P_SRP] * d / dn**3
    f[3:6, 0:3] = g
    f[6, 7] = 1.0
    f[7, 8] = 1.0
    if par[P_REL] > 0:
        cl = 2.99792458e8
        f[6, 0:3] = -mu * r / (rn**3 * cl)
        f[6, 3:6] = x[3:6] / cl
    return f


@njit(cache=True)
def _deriv_stm(t, y, par, c, s, pe, ve, ps, vs):
    x = y[:N_STATE]
    dy = np.empty(y.size)
    dy[:N_STATE] = _deriv(t, x, par, c, s, pe, ve, ps, vs)
    f = _jacobian(t, x, par, c, s, pe, ve, ps, vs)
    phi = y[N_STATE:].reshape((N_STATE, N_STATE))
    dy[N_STATE:] = (f @ phi).ravel()
    return dy


@njit(cache=True)
def _rk_step(t, y, h, with_stm, par, c, s, pe, ve, ps, vs, ra, rb, rc):
    ns = rb.size
    kk = np.zeros((ns, y.size))
    for i in range(ns):
        yi = y.copy()
        for j in range(i):
            if ra[i, j] != 0.0:
                yi += h * ra[i, j] * kk[j]
        if with_stm:
            kk[i] = _deriv_stm(t + rc[i] * h, yi, par, c, s, pe, ve, ps, vs)
        else:
            kk[i] = _deriv(t + rc[i] * h, yi, par, c, s, pe, ve, ps, vs)
    out = y.copy()
    for i in range(ns):
        out += h * rb[i] * kk[i]
    return out


@njit(cache=True)
def _rk_run(t0, y0, t1, nsteps, with_stm, par, c, s, pe, ve, ps, vs, ra, rb, rc):
    h = (t1 - t0) / nsteps
    y = y0.copy()
    for i in range(nsteps):
        y = _rk_step(t0 + i * h, y, h, with_stm, par, c, s, pe, ve, ps, vs, ra, rb, rc)
    return y


@njit(cache=True)
def _rk_trajectory(t0, y0, dt, n_out, substeps, par, c, s, pe, ve, ps, vs, ra, rb, rc):
    out = np.empty((n_out + 1, y0.size))
    out[0] = y0
    y = y0.copy()
    h = dt / substeps
    for k_ in range(n_out):
        tk = t0 + k_ * dt
        for i in range(substeps):
            y = _rk_step(tk + i * h, y, h, False, par, c, s, pe, ve, ps, vs, ra, rb, rc)
        out[k_ + 1] = y
    return out


def state_derivative(x, t: float, model: ForceModel) -> np.ndarray:
    return _deriv(float(t), np.asarray(x, dtype=float), *model.args())


def state_jacobian(x, t: float, model: ForceModel) -> np.ndarray:
    return _jacobian(float(t), np.asarray(x, dtype=float), *model.args())


def _steps(t0: float, t1: float, max_step: float) -> int:
    return max(1, int(math.ceil(abs(t1 - t0) / max_step - 1e-9)))


def propagate(x0, t0: float, t1: float, model: ForceModel, max_step: float = 30.0) -> np.ndarray:
    y = _rk_run(float(t0), np.asarray(x0, dtype=float), float(t1), _steps(t0, t1, max_step), False,
                *model.args(), RK_A, RK_B, RK_C)
    if not np.all(np.isfinite(y)):
        raise PropagationError(f"non-finite state propagating {t0} -> {t1}")
    return y


def propagate_with_stm(x0, t0: float, t1: float, model: ForceModel,
                       max_step: float = 30.0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and 10x10 transition matrix integrated jointly."""
    y0 = np.concatenate([np.asarray(x0, dtype=float), np.eye(N_STATE).ravel()])
    y = _rk_run(float(t0), y0, float(t1), _steps(t0, t1, max_step), True, *model.args(), RK_A, RK_B, RK_C)
    if not np.all(np.isfinite(y)):
        raise PropagationError(f"non-finite state propagating {t0} -> {t1}")
    return y[:N_STATE].copy(), y[N_STATE:].reshape(N_STATE, N_STATE).copy()


def trajectory(x0, t0: float, dt: float, n_out: int, model: ForceModel, substeps: int = 1) -> np.ndarray:
    """States at ``t0 + i*dt`` for ``i = 0..n_out``."""
    out = _rk_trajectory(float(t0), np.asarray(x0, dtype=float), float(dt), int(n_out), int(substeps),
                         *model.args(), RK_A, RK_B, RK_C)
    if not np.all(np.isfinite(out)):
        raise PropagationError("non-finite state in trajectory")
    return out


# --- process noise ---------------------------------------------------------

@dataclass(frozen=True)
class ClockNoise:
    """Spectral amplitudes (sqrt of PSD): white FM [s^1/2], random-walk FM [s^-1/2], random-run [s^-3/2]."""

    sqrt_q1: float = 6.2299445014e-13
    sqrt_q2: float = 2.0129544799e-14
    sqrt_q3: float = 7.0118586804e-28


def clock_transition(dt: float) -> np.ndarray:
    return np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])


def clock_process_noise(noise: ClockNoise, dt: float) -> np.ndarray:
    """Discrete noise of (c dt, c dt', c dt'') over ``dt`` (m units)."""
    q1, q2, q3 = noise.sqrt_q1**2, noise.sqrt_q2**2, noise.sqrt_q3**2
    t2, t3, t4, t5 = dt**2, dt**3, dt**4, dt**5
    q = np.array([
        [q1 * dt + q2 * t3 / 3 + q3 * t5 / 20, q2 * t2 / 2 + q3 * t4 / 8, q3 * t3 / 6],
        [q2 * t2 / 2 + q3 * t4 / 8, q2 * dt + q3 * t3 / 3, q3 * t2 / 2],
        [q3 * t3 / 6, q3 * t2 / 2, q3 * dt],
    ])
    return k.C_LIGHT**2 * q


def posvel_process_noise(q_a: float, dt: float) -> np.ndarray:
    i3 = np.eye(3)
    return q_a * np.block([[dt**3 / 3 * i3, dt**2 / 2 * i3], [dt**2 / 2 * i3, dt * i3]])


def process_noise(q_a: float, clock: ClockNoise, dt: float) -> np.ndarray:
    q = np.zeros((N_STATE, N_STATE))
    q[:6, :6] = posvel_process_noise(q_a, dt)
    q[6:9, 6:9] = clock_process_noise(clock, dt)
    return q
