"""Synthetic GNSS observables at a lunar receiver.

Truth geometry (light-time, tangential altitude, link budget, Shapiro and
ionospheric terms) depends only on the orbits and is computed once per
scenario.  A :class:`Realization` adds everything random: receiver clock,
broadcast errors, thermal noise, ambiguities and cycle slips.

Geometry is evaluated in the Moon-centred inertial frame with scenario
coordinate time; broadcast orbits coincide with the truth orbits and the
broadcast error enters as a line-of-sight range term.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from . import constants as k
from .constellation import Constellation, Signal
from .dynamics import ClockNoise, clock_process_noise, clock_transition
from .timeframes import HermiteTable


class ObservableError(ValueError):
    pass


class LightTimeError(ObservableError, ArithmeticError):
    pass


class DegenerateTriangle(ObservableError):
    pass


class AngleOutOfTable(ObservableError):
    pass


class MissingPair(ObservableError):
    pass


class SourceMismatch(ObservableError):
    pass


# --- receiver ---------------------------------------------------------------

@dataclass(frozen=True)
class ReceiverParams:
    b_dll: float = 0.7          # Hz
    b_pll: float = 1.0          # Hz
    spacing: float = 0.1        # chips (not used by the thermal-noise formula)
    t_dll: float = 0.02         # s
    t_pll: float = 0.02         # s
    b_fe: float = 2.0e6         # Hz
    t_sys: float = 162.0        # K
    l_pol: float = 1.0          # dB
    r_loss: float = 0.9         # dB
    g_peak: float = 14.0        # dBi
    hpbw: float = 12.2          # deg, full width
    threshold: float = 18.0     # dB-Hz
    slip_cn0: float = 25.0      # dB-Hz
    slip_prob: float = 0.10
    slip_max_cycles: int = 10

    def __post_init__(self) -> None:
        for name in ("b_dll", "b_pll", "spacing", "t_dll", "t_pll", "b_fe", "t_sys", "hpbw"):
            if not getattr(self, name) > 0:
                raise ObservableError(f"receiver parameter {name} must be positive")
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ObservableError("slip_prob must lie in [0, 1]")

    def rx_gain(self, theta_deg):
        """Parabolic main beam: peak at boresight, -3 dB at half the beamwidth."""
        th = np.asarray(theta_deg, dtype=float)
        return self.g_peak - 12.0 * (th / self.hpbw) ** 2


def _check_angles(theta) -> None:
    th = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(th)) or np.any(th < 0.0) or np.any(th > 180.0):
        raise AngleOutOfTable("off-boresight angle outside [0, 180] deg")


def cn0_db(p_tx_dbw, g_tx_dbi, g_rx_dbi, distance, frequency, rx: ReceiverParams):
    """Carrier-to-noise density of the link (dB-Hz)."""
    fspl = 20.0 * np.log10(4.0 * np.pi * np.asarray(distance) * frequency / k.C_LIGHT)
    return (np.asarray(p_tx_dbw) + g_tx_dbi + g_rx_dbi - fspl - rx.l_pol
            - 10.0 * math.log10(k.BOLTZMANN * rx.t_sys) - rx.r_loss)


def link_budget_cn0(constellation: Constellation, source: int, signal: Signal, theta_tx_deg: float,
                    theta_rx_deg: float, distance: float, rx: ReceiverParams) -> float:
    _check_angles([theta_tx_deg, theta_rx_deg])
    src = constellation.sources[source]
    if not src.has(signal):
        raise ObservableError(f"{src.ident} does not transmit {signal.value}")
    th = np.full(len(constellation), float(theta_tx_deg))
    g_tx = constellation.tx_gain(signal, th)[source]
    return float(cn0_db(src.power_dbw[signal.value], g_tx, rx.rx_gain(theta_rx_deg), distance,
                        signal.frequency, rx))


def thermal_noise_sigmas(cn0, signal: Signal, rx: ReceiverParams):
    """DLL code and PLL phase 1-sigma (m) for C/N0 in dB-Hz."""
    c = 10.0 ** (np.asarray(cn0, dtype=float) / 10.0)
    tc = 1.0 / signal.chip_rate
    var_code = (k.C_LIGHT * tc) ** 2 * (rx.b_dll / (2 * c) / (rx.b_fe * tc) * (1 + 1 / (rx.t_dll * c)))
    var_phase = (signal.wavelength / (2 * np.pi)) ** 2 * (rx.b_pll / (2 * c) * (1 + 1 / (2 * rx.t_pll * c)))
    return np.sqrt(var_code), np.sqrt(var_phase)


# --- propagation terms -------------------------------------------------------

IONO_K = 40.3e16  # m^3/s^2 per TECU


@dataclass(frozen=True)
class IonoModel:
    """Slant TEC versus tangential altitude: ionospheric plus plasmaspheric exponentials.

    The code delay at frequency f is ``40.3 TEC / f^2`` plus a 1/f^3 term
    sized so the L1/L5 ionosphere-free residual is ``if_residual`` times the
    L1 first-order delay below ``knee`` and decays exponentially above.
    """

    a_iono: float = 300.0       # TECU
    h_iono: float = 350e3       # m
    a_plasma: float = 1000.0    # TECU
    h_plasma: float = 700e3     # m
    if_residual: float = 0.02
    knee: float = 1000e3        # m
    decay: float = 1000e3       # m

    def tec(self, h):
        h = np.asarray(h, dtype=float)
        return self.a_iono * np.exp(-h / self.h_iono) + self.a_plasma * np.exp(-h / self.h_plasma)

    def residual_if(self, h):
        h = np.asarray(h, dtype=float)
        frac = self.if_residual * np.exp(-np.maximum(h - self.knee, 0.0) / self.decay)
        return frac * IONO_K * self.tec(h) / k.F_L1**2

    def delays(self, h, frequency: float):
        """(code delay, phase advance, ionosphere-free residual), metres."""
        if np.isinf(frequency):
            z = np.zeros_like(np.asarray(h, dtype=float))
            return z, z, self.residual_if(h)
        res = self.residual_if(h)
        s = -res * k.F_L1 * k.F_L5 * (k.F_L1 + k.F_L5)
        code = IONO_K * self.tec(h) / frequency**2 + s / frequency**3
        return code, -code, res


def iono_plasma_delay(tangential_altitude, frequency: float, model: Optional[IonoModel] = None):
    return (model or IonoModel()).delays(tangential_altitude, frequency)


def shapiro_delay(r_rx_sun, r_tx_sun, distance):
    """Solar Shapiro delay in seconds."""
    r1 = np.asarray(r_rx_sun, dtype=float)
    r2 = np.asarray(r_tx_sun, dtype=float)
    d = np.asarray(distance, dtype=float)
    if np.any(r1 + r2 <= d):
        raise DegenerateTriangle("receiver, transmitter and Sun violate the triangle inequality")
    return 2.0 * k.GM_SUN / k.C_LIGHT**3 * np.log((r1 + r2 + d) / (r1 + r2 - d))


def tangential_altitude(rx, tx, earth=None):
    """Height above the R_E sphere of the (infinite) line through rx and tx."""
    rx = np.asarray(rx, dtype=float)
    tx = np.asarray(tx, dtype=float)
    if earth is not None:
        rx = rx - earth
        tx = tx - earth
    d = tx - rx
    s = -np.sum(rx * d, axis=-1) / np.sum(d * d, axis=-1)
    closest = rx + s[..., None] * d
    return np.linalg.norm(closest, axis=-1) - k.R_EARTH


def _segment_blocked(a, b, radius):
    """Whether the segment a-b passes inside a sphere of ``radius`` about the origin."""
    d = b - a
    s = np.clip(-np.sum(a * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
    return np.linalg.norm(a + s[..., None] * d, axis=-1) < radius


def solve_light_time(rx_pos, t_rx: float, tx_position: Callable[[float], np.ndarray],
                     tol: float = 1e-12, max_iter: int = 10) -> tuple[float, np.ndarray]:
    """Transmit time and position with ``t_tx = t_rx - |r_rx - r_tx(t_tx)| / c``.

    Iterates on the delay ``tau = t_rx - t_tx`` to keep full precision.
    """
    rx_pos = np.asarray(rx_pos, dtype=float)
    tau = 0.0
    for _ in range(max_iter):
        pos = np.asarray(tx_position(t_rx - tau), dtype=float)
        new = float(np.linalg.norm(rx_pos - pos)) / k.C_LIGHT
        if abs(new - tau) < tol:
            return t_rx - new, np.asarray(tx_position(t_rx - new), dtype=float)
        tau = new
    raise LightTimeError(f"light-time iteration did not converge in {max_iter} steps")


# --- truth geometry ----------------------------------------------------------

@dataclass(eq=False)
class TruthGeometry:
    """Per-epoch, per-source deterministic quantities (arrays of shape (N, M))."""

    times: np.ndarray
    rx: np.ndarray               # (N, 10) truth orbit, clock columns hold the relativistic integral
    tau: np.ndarray              # light-time delay, s
    tx_pos: np.ndarray           # (N, M, 3) Moon-centred, at transmit time
    tx_vel: np.ndarray
    range: np.ndarray
    h_tan: np.ndarray
    shapiro: np.ndarray          # m
    visible: np.ndarray          # not occulted by Earth or Moon
    theta_tx: np.ndarray         # deg
    theta_rx: np.ndarray         # deg
    cn0: dict = field(default_factory=dict)
    iono_code: dict = field(default_factory=dict)
    iono_phase: dict = field(default_factory=dict)
    iono_residual_if: Optional[np.ndarray] = None

    @property
    def n_epochs(self) -> int:
        return self.times.size

    def tracked(self, sig: Signal, threshold: float) -> np.ndarray:
        c = self.cn0[sig]
        return self.visible & np.isfinite(c) & (c >= threshold)


def compute_truth_geometry(times: np.ndarray, rx_states: np.ndarray, constellation: Constellation,
                           earth: HermiteTable, sun: HermiteTable, tdb_reference: float,
                           rx: ReceiverParams, iono: IonoModel, tol: float = 1e-12,
                           chunk: int = 2048) -> TruthGeometry:
    """Light-time solutions and link geometry for every epoch and source.

    ``earth`` and ``sun`` give positions relative to the Moon at TDB
    ``tdb_reference + t``.
    """
    times = np.asarray(times, dtype=float)
    n, m = times.size, len(constellation)
    out = {name: np.empty((n, m)) for name in ("tau", "range", "h_tan", "shapiro", "theta_tx", "theta_rx")}
    tx_pos = np.empty((n, m, 3))
    tx_vel = np.empty((n, m, 3))
    visible = np.empty((n, m), dtype=bool)
    for lo in range(0, n, chunk):
        sl = slice(lo, min(n, lo + chunk))
        t = times[sl]
        r = rx_states[sl, :3]
        tau = np.zeros((t.size, m))
        for it in range(12):
            tt = t[:, None] - tau
            pe, ve = earth(tdb_reference + tt)
            pg, vg = constellation.states(tt)
            p = pe + pg
            rng = np.linalg.norm(r[:, None, :] - p, axis=-1)
            new = rng / k.C_LIGHT
            done = np.max(np.abs(new - tau)) < tol
            tau = new
            if done:
                break
        else:
            raise LightTimeError("light-time iteration did not converge")
        tt = t[:, None] - tau
        pe, ve = earth(tdb_reference + tt)
        pg, vg = constellation.states(tt)
        p = pe + pg
        v = ve + vg
        los = p - r[:, None, :]
        rng = np.linalg.norm(los, axis=-1)
        tx_pos[sl] = p
        tx_vel[sl] = v
        out["tau"][sl] = tau
        out["range"][sl] = rng
        # the ray passes the Earth around the transmit epoch
        out["h_tan"][sl] = tangential_altitude(r[:, None, :] - pe, pg)
        earth_block = _segment_blocked(r[:, None, :] - pe, pg, k.R_EARTH)
        moon_block = _segment_blocked(np.broadcast_to(r[:, None, :], p.shape), p, k.R_MOON)
        visible[sl] = ~(earth_block | moon_block)
        nadir = -pg / np.linalg.norm(pg, axis=-1, keepdims=True)
        cos_tx = np.sum(nadir * (-los), axis=-1) / rng
        out["theta_tx"][sl] = np.degrees(np.arccos(np.clip(cos_tx, -1, 1)))
        pe_rx, _ = earth(tdb_reference + t)
        bore = pe_rx - r
        bore /= np.linalg.norm(bore, axis=-1, keepdims=True)
        cos_rx = np.sum(bore[:, None, :] * los, axis=-1) / rng
        out["theta_rx"][sl] = np.degrees(np.arccos(np.clip(cos_rx, -1, 1)))
        ps_rx, _ = sun(tdb_reference + t)
        ps_tx, _ = sun(tdb_reference + tt)
        r1 = np.linalg.norm(r - ps_rx, axis=-1)[:, None]
        r2 = np.linalg.norm(p - ps_tx, axis=-1)
        out["shapiro"][sl] = k.C_LIGHT * shapiro_delay(np.broadcast_to(r1, r2.shape), r2, rng)
    geo = TruthGeometry(times, np.asarray(rx_states, dtype=float), out["tau"], tx_pos, tx_vel,
                        out["range"], out["h_tan"], out["shapiro"], visible, out["theta_tx"],
                        out["theta_rx"])
    g_rx = rx.rx_gain(geo.theta_rx)
    for sig in Signal:
        has = constellation.has(sig)
        g_tx = constellation.tx_gain(sig, geo.theta_tx)
        c = cn0_db(constellation.power(sig)[None, :], g_tx, g_rx, geo.range, sig.frequency, rx)
        c[:, ~has] = np.nan
        c[~visible] = np.nan
        geo.cn0[sig] = c
        code, phase, res = iono.delays(geo.h_tan, sig.frequency)
        geo.iono_code[sig] = code
        geo.iono_phase[sig] = phase
        geo.iono_residual_if = res
    return geo


# --- random realization --------------------------------------------------------

def _gauss_markov2(rng: np.random.Generator, n: int, dt: float, sigma: np.ndarray, tau: float,
                   mean: np.ndarray) -> np.ndarray:
    """Critically damped second-order Gauss-Markov sequences, stationary start.

    Columns are independent processes with std ``sigma`` about ``mean``.
    """
    w = 1.0 / tau
    a = np.array([[0.0, 1.0], [-w * w, -2.0 * w]])
    q = 4.0 * w**3  # unit-variance driving PSD
    big = np.zeros((4, 4))
    big[:2, :2] = -a
    big[:2, 2:] = np.array([[0.0, 0.0], [0.0, q]])
    big[2:, 2:] = a.T
    e = expm(big * dt)
    phi = e[2:, 2:].T
    qd = phi @ e[:2, 2:]
    qd = 0.5 * (qd + qd.T)
    lq = np.linalg.cholesky(qd)
    p0 = np.diag([1.0, w * w])
    cols = sigma.size
    x = np.linalg.cholesky(p0) @ rng.standard_normal((2, cols))
    out = np.empty((n, cols))
    out[0] = x[0]
    draws = rng.standard_normal((n - 1, 2, cols))
    for i in range(1, n):
        x = phi @ x + lq @ draws[i - 1]
        out[i] = x[0]
    return mean[None, :] + sigma[None, :] * out


def _psd_sqrt(q: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (q + q.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_clock(rng: np.random.Generator, n: int, dt: float, noise: ClockNoise,
                   x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Stochastic part of the receiver clock (c dt, c dt', c dt''), shape (n, 3)."""
    phi = clock_transition(dt)
    lq = _psd_sqrt(clock_process_noise(noise, dt))
    out = np.empty((n, 3))
    out[0] = np.zeros(3) if x0 is None else x0
    draws = rng.standard_normal((n - 1, 3)) @ lq.T
    for i in range(1, n):
        out[i] = phi @ out[i - 1] + draws[i - 1]
    return out


STREAMS = ("clock", "ephemeris", "code", "phase", "ambiguity", "initial")


def run_generators(seed: int, run: int) -> dict[str, np.random.Generator]:
    """Independent named streams for one Monte-Carlo run."""
    seqs = np.random.SeedSequence([int(seed), int(run)]).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, seqs)}


@dataclass(eq=False)
class Realization:
    """Random components of one run plus the assembled observables."""

    clock: np.ndarray                    # (N, 3) stochastic clock
    rx_clock: np.ndarray                 # (N,) total receiver clock bias, m
    eph_error: np.ndarray                # (N, M)
    isb: np.ndarray                      # (M,)
    tracked: dict = field(default_factory=dict)
    sigma_code: dict = field(default_factory=dict)
    sigma_phase: dict = field(default_factory=dict)
    code_noise: dict = field(default_factory=dict)
    phase_noise: dict = field(default_factory=dict)
    ambiguity: dict = field(default_factory=dict)   # cycles, int64
    slip: dict = field(default_factory=dict)
    pseudorange: dict = field(default_factory=dict)
    phase: dict = field(default_factory=dict)

    def truth_state(self, geo: TruthGeometry, i) -> np.ndarray:
        x = np.array(geo.rx[i], dtype=float)
        x[..., 6] += self.clock[i, 0]
        x[..., 7] += self.clock[i, 1]
        x[..., 8] += self.clock[i, 2]
        return x


def _ambiguities(rng: np.random.Generator, tracked: np.ndarray, cn0: np.ndarray, rx: ReceiverParams):
    n, m = tracked.shape
    amb = np.zeros((n, m), dtype=np.int64)
    slip = np.zeros((n, m), dtype=bool)
    fresh = rng.integers(-1_000_000, 1_000_000, size=(n, m))
    u = rng.random((n, m))
    mag = rng.integers(1, rx.slip_max_cycles + 1, size=(n, m))
    sign = np.where(rng.random((n, m)) < 0.5, -1, 1)
    prev_tracked = np.zeros(m, dtype=bool)
    cur = np.zeros(m, dtype=np.int64)
    for i in range(n):
        t = tracked[i]
        new_arc = t & ~prev_tracked
        cur = np.where(new_arc, fresh[i], cur)
        s = t & prev_tracked & (cn0[i] < rx.slip_cn0) & (u[i] < rx.slip_prob)
        cur = np.where(s, cur + sign[i] * mag[i], cur)
        slip[i] = s
        amb[i] = np.where(t, cur, 0)
        prev_tracked = t
    return amb, slip


def realize(geo: TruthGeometry, constellation: Constellation, rx: ReceiverParams,
            clock_noise: ClockNoise, seed: int, run: int,
            streams: Optional[dict[str, np.random.Generator]] = None) -> Realization:
    """Draw one set of random errors and assemble pseudoranges and phases."""
    g = streams or run_generators(seed, run)
    n, m = geo.range.shape
    dt = float(geo.times[1] - geo.times[0]) if n > 1 else 1.0
    clock = simulate_clock(g["clock"], n, dt, clock_noise)
    stats = constellation.error_stats()
    tau = stats[0].tau
    pos = _gauss_markov2(g["ephemeris"], n, dt, np.array([s.pos_std for s in stats]), tau,
                         np.array([s.pos_mean for s in stats]))
    clk = _gauss_markov2(g["ephemeris"], n, dt, np.array([s.clk_std for s in stats]), tau,
                         np.array([s.clk_mean for s in stats]))
    eph = pos + clk
    isb = np.array([s.isb for s in constellation.sources])
    rx_clock = geo.rx[:, 6] + clock[:, 0]
    real = Realization(clock, rx_clock, eph, isb)
    common = geo.range + rx_clock[:, None] + eph + geo.shapiro + isb[None, :]
    for sig in Signal:
        tr = geo.tracked(sig, rx.threshold)
        cn0 = np.where(tr, geo.cn0[sig], np.nan)
        sc, sp = thermal_noise_sigmas(cn0, sig, rx)
        wc = g["code"].standard_normal((n, m)) * np.nan_to_num(sc)
        wp = g["phase"].standard_normal((n, m)) * np.nan_to_num(sp)
        amb, slip = _ambiguities(g["ambiguity"], tr, np.nan_to_num(cn0, nan=np.inf), rx)
        real.tracked[sig] = tr
        real.sigma_code[sig] = sc
        real.sigma_phase[sig] = sp
        real.code_noise[sig] = wc
        real.phase_noise[sig] = wp
        real.ambiguity[sig] = amb
        real.slip[sig] = slip
        pr = common + geo.iono_code[sig] + wc
        ph = common + geo.iono_phase[sig] + sig.wavelength * amb + wp
        real.pseudorange[sig] = np.where(tr, pr, np.nan)
        real.phase[sig] = np.where(tr, ph, np.nan)
    return real


# --- per-observable view -------------------------------------------------------

@dataclass(frozen=True)
class RawObservable:
    epoch: float
    source: str
    signal: Signal
    pseudorange: float
    phase: float
    cn0: float
    h_tan: float
    sigma_code: float
    sigma_phase: float
    range: float
    rx_clock: float
    shapiro: float
    iono_code: float
    iono_phase: float
    eph_error: float
    isb: float
    code_noise: float
    phase_noise: float
    ambiguity: float
    slip: bool

    def code_ledger(self) -> float:
        return self.shapiro + self.iono_code + self.eph_error + self.isb + self.code_noise

    def phase_ledger(self) -> float:
        return self.shapiro + self.iono_phase + self.eph_error + self.isb + self.phase_noise + self.ambiguity


def simulate_epoch(geo: TruthGeometry, real: Realization, constellation: Constellation,
                   i: int) -> list[RawObservable]:
    """Tracked observables at epoch index ``i``, sorted by source then signal."""
    out = []
    for j, src in enumerate(constellation.sources):
        for sig in Signal:
            if not real.tracked[sig][i, j]:
                continue
            out.append(RawObservable(
                float(geo.times[i]), src.ident, sig, float(real.pseudorange[sig][i, j]),
                float(real.phase[sig][i, j]), float(geo.cn0[sig][i, j]), float(geo.h_tan[i, j]),
                float(real.sigma_code[sig][i, j]), float(real.sigma_phase[sig][i, j]),
                float(geo.range[i, j]), float(real.rx_clock[i]), float(geo.shapiro[i, j]),
                float(geo.iono_code[sig][i, j]), float(geo.iono_phase[sig][i, j]),
                float(real.eph_error[i, j]), float(real.isb[j]), float(real.code_noise[sig][i, j]),
                float(real.phase_noise[sig][i, j]), float(sig.wavelength * real.ambiguity[sig][i, j]),
                bool(real.slip[sig][i, j])))
    return out


# --- combinations ---------------------------------------------------------------

ALPHA_L1 = k.F_L1**2 / (k.F_L1**2 - k.F_L5**2)
ALPHA_L5 = k.F_L5**2 / (k.F_L1**2 - k.F_L5**2)


def iono_free_combination(obs_l1: RawObservable, obs_l5: RawObservable) -> tuple[float, float]:
    """Ionosphere-free pseudorange and its thermal-noise variance."""
    if obs_l1 is None or obs_l5 is None:
        raise MissingPair("both L1 and L5 observables are required")
    if obs_l1.signal is not Signal.L1 or obs_l5.signal is not Signal.L5:
        raise MissingPair("expected an (L1, L5) pair")
    if obs_l1.source != obs_l5.source or obs_l1.epoch != obs_l5.epoch:
        raise SourceMismatch("observables come from different sources or epochs")
    value = ALPHA_L1 * obs_l1.pseudorange - ALPHA_L5 * obs_l5.pseudorange
    var = ALPHA_L1**2 * obs_l1.sigma_code**2 + ALPHA_L5**2 * obs_l5.sigma_code**2
    return value, var


def form_tdcp(obs_now: RawObservable, obs_prev: RawObservable) -> tuple[float, float]:
    """Time-differenced carrier phase and its thermal-noise variance."""
    if obs_now.source != obs_prev.source or obs_now.signal is not obs_prev.signal:
        raise SourceMismatch("TDCP needs the same source and signal at both epochs")
    if obs_prev.epoch > obs_now.epoch:
        raise SourceMismatch("previous observable is later than the current one")
    return obs_now.phase - obs_prev.phase, obs_now.sigma_phase**2 + obs_prev.sigma_phase**2


# --- dump ---------------------------------------------------------------------

OBS_COLUMNS = ["epoch_s", "source", "signal", "pseudorange_m", "phase_m", "cn0_dbhz",
               "tangential_altitude_m", "sigma_code_m", "sigma_phase_m", "range_m", "rx_clock_m",
               "shapiro_m", "iono_code_m", "iono_phase_m", "eph_error_m", "isb_m", "code_noise_m",
               "phase_noise_m", "ambiguity_m", "slip"]


def _fmt(x: float) -> str:
    return format(x, ".12g")


def write_observables_csv(path: str | Path, geo: TruthGeometry, real: Realization,
                          constellation: Constellation, every: int = 1) -> int:
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for i in range(0, geo.n_epochs, every):
            for o in simulate_epoch(geo, real, constellation, i):
                w.writerow([_fmt(o.epoch), o.source, o.signal.value, _fmt(o.pseudorange), _fmt(o.phase),
                            _fmt(o.cn0), _fmt(o.h_tan), _fmt(o.sigma_code), _fmt(o.sigma_phase),
                            _fmt(o.range), _fmt(o.rx_clock), _fmt(o.shapiro), _fmt(o.iono_code),
                            _fmt(o.iono_phase), _fmt(o.eph_error), _fmt(o.isb), _fmt(o.code_noise),
                            _fmt(o.phase_noise), _fmt(o.ambiguity), int(o.slip)])
                rows += 1
    return rows


def visibility_counts(geo: TruthGeometry, constellation: Constellation, threshold: float) -> dict:
    """Tracked-source counts per epoch: L1, L5, dual, and L1 per system."""
    l1 = geo.tracked(Signal.L1, threshold)
    l5 = geo.tracked(Signal.L5, threshold)
    out = {"L1": l1.sum(axis=1), "L5": l5.sum(axis=1), "dual": (l1 & l5).sum(axis=1)}
    systems = constellation.systems
    for sysname in sorted(set(systems)):
        out[f"L1_{sysname}"] = l1[:, systems == sysname].sum(axis=1)
    return out


__all__ = [name for name in dir() if not name.startswith("_") and name not in (
    "annotations", "csv", "math", "np", "k", "dataclass", "field", "Path", "Callable", "Optional",
    "expm")]
