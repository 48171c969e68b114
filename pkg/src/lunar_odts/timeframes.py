"""Time scales, Earth rotation and the Sun/Earth/Moon ephemeris.

Epochs are counted from the 1977-01-01T00:00:00 label of their own scale,
kept as whole seconds plus a fraction.  Conversions follow the chain
GPST - TAI - TT - TCG - TCL - LT.  The TCL-TCG offset is obtained by
quadrature along the Earth-Moon ephemeris and is zero at the scenario
reference epoch.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit

from . import constants as k
from .kepler import elements_to_state

_LABEL_ORIGIN = datetime(1977, 1, 1)
_J2000_LABEL = datetime(2000, 1, 1, 12)
# TT-label seconds of J2000.0 counted from the 1977 origin label
J2000_TT_SECONDS = (_J2000_LABEL - _LABEL_ORIGIN).total_seconds()


class TimeScale(str, enum.Enum):
    GPST = "GPST"
    TAI = "TAI"
    TT = "TT"
    TCG = "TCG"
    TCL = "TCL"
    LT = "LT"


_CHAIN = [TimeScale.GPST, TimeScale.TAI, TimeScale.TT, TimeScale.TCG, TimeScale.TCL, TimeScale.LT]


class TimeFrameError(ValueError):
    pass


class EphemerisRangeError(TimeFrameError):
    pass


@dataclass(frozen=True, order=True)
class Epoch:
    """Whole seconds plus fraction since the scale's 1977-01-01 label."""

    sec: int
    frac: float
    scale: TimeScale = TimeScale.GPST

    @classmethod
    def from_seconds(cls, seconds: float, scale: TimeScale = TimeScale.GPST, frac: float = 0.0) -> "Epoch":
        whole = math.floor(seconds)
        return cls._norm(int(whole), (seconds - whole) + frac, scale)

    @classmethod
    def from_iso(cls, text: str, scale: TimeScale | str = TimeScale.GPST) -> "Epoch":
        dt = datetime.fromisoformat(text)
        delta = dt - _LABEL_ORIGIN
        whole = delta.days * 86400 + delta.seconds
        return cls._norm(whole, delta.microseconds * 1e-6, TimeScale(scale))

    @staticmethod
    def _norm(sec: int, frac: float, scale: TimeScale) -> "Epoch":
        carry = math.floor(frac)
        return Epoch(sec + int(carry), frac - carry, scale)

    def __add__(self, dt: float) -> "Epoch":
        whole = math.floor(dt)
        return Epoch._norm(self.sec + int(whole), self.frac + (dt - whole), self.scale)

    def __sub__(self, other):
        if isinstance(other, Epoch):
            if other.scale != self.scale:
                raise TimeFrameError(f"cannot subtract {other.scale.value} from {self.scale.value}")
            return (self.sec - other.sec) + (self.frac - other.frac)
        return self + (-other)

    @property
    def seconds(self) -> float:
        return self.sec + self.frac

    def iso(self) -> str:
        from datetime import timedelta
        return (_LABEL_ORIGIN + timedelta(seconds=self.sec, microseconds=round(self.frac * 1e6))).isoformat()


def _shift(e: Epoch, dt: float, scale: TimeScale) -> Epoch:
    return Epoch._norm(e.sec, e.frac + dt, scale) if abs(dt) < 1 else Epoch(e.sec, e.frac, scale) + dt


class TimeFrames:
    """Conversions between the supported scales.

    ``tcl_model`` is needed only for conversions that cross TCG/TCL.
    """

    def __init__(self, tcl_model: Optional["TclTcgModel"] = None):
        self.tcl_model = tcl_model

    def convert(self, e: Epoch, target: TimeScale | str) -> Epoch:
        target = TimeScale(target)
        i, j = _CHAIN.index(e.scale), _CHAIN.index(target)
        step = 1 if j > i else -1
        while i != j:
            e = self._step(e, _CHAIN[i + step])
            i += step
        return e

    def _step(self, e: Epoch, to: TimeScale) -> Epoch:
        s = e.scale
        if (s, to) == (TimeScale.GPST, TimeScale.TAI):
            return Epoch(e.sec + 19, e.frac, to)
        if (s, to) == (TimeScale.TAI, TimeScale.GPST):
            return Epoch(e.sec - 19, e.frac, to)
        if (s, to) == (TimeScale.TAI, TimeScale.TT):
            return Epoch._norm(e.sec + 32, e.frac + 0.184, to)
        if (s, to) == (TimeScale.TT, TimeScale.TAI):
            return Epoch._norm(e.sec - 32, e.frac - 0.184, to)
        if (s, to) == (TimeScale.TT, TimeScale.TCG):
            return _shift(e, k.L_G * _since_t0(e), to)
        if (s, to) == (TimeScale.TCG, TimeScale.TT):
            return _shift(e, -k.L_G / (1.0 + k.L_G) * _since_t0(e), to)
        if (s, to) == (TimeScale.TCL, TimeScale.LT):
            return _shift(e, -k.L_L * _since_t0(e), to)
        if (s, to) == (TimeScale.LT, TimeScale.TCL):
            return _shift(e, k.L_L / (1.0 - k.L_L) * _since_t0(e), to)
        if self.tcl_model is None:
            raise TimeFrameError("TCG<->TCL conversion needs a TCL-TCG model")
        if (s, to) == (TimeScale.TCG, TimeScale.TCL):
            return _shift(e, self.tcl_model.offset(Epoch(e.sec, e.frac, TimeScale.TCG)), to)
        # TCL -> TCG: fixed point on the slowly varying offset
        guess = Epoch(e.sec, e.frac, TimeScale.TCG)
        for _ in range(4):
            guess = _shift(Epoch(e.sec, e.frac, TimeScale.TCG), -self.tcl_model.offset(guess), TimeScale.TCG)
        return guess


def _since_t0(e: Epoch) -> float:
    return (e.sec - 32) + (e.frac - 0.184)


def tt_to_tdb_j2000(e: Epoch) -> float:
    """TDB seconds past J2000 (TDB taken equal to TT; the periodic part is below 2 ms)."""
    if e.scale is not TimeScale.TT:
        raise TimeFrameError("expected a TT epoch")
    return (e.sec - J2000_TT_SECONDS) + e.frac


# --- Earth rotation --------------------------------------------------------

def gmst_rad(jd_ut1: float) -> float:
    d = jd_ut1 - 2451545.0
    return math.radians((280.46061837 + 360.98564736629 * d) % 360.0)


def rotation_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(np.shape(theta) + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def ecef_rotation(t_gpst: float, theta0: float, t_ref: float = 0.0):
    """Inertial -> Earth-fixed rotation about z; ``t_gpst`` and ``t_ref`` in GPST seconds."""
    return rotation_z(theta0 + k.OMEGA_EARTH * (np.asarray(t_gpst) - t_ref))


# --- ephemeris -----------------------------------------------------------

class Body(str, enum.Enum):
    SUN = "sun"
    EARTH = "earth"
    MOON = "moon"


@njit(cache=True)
def hermite_eval(t0, step, pos, vel, t):
    """Cubic Hermite value and derivative on a uniform grid (one query)."""
    u = (t - t0) / step
    i = int(math.floor(u))
    if i < 0 or i >= pos.shape[0] - 1:
        if i == pos.shape[0] - 1 and u - i == 0.0:
            i -= 1
        else:
            return np.full(3, np.nan), np.full(3, np.nan)
    s = u - i
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    d00 = (6 * s2 - 6 * s) / step
    d10 = 3 * s2 - 4 * s + 1
    d01 = (-6 * s2 + 6 * s) / step
    d11 = 3 * s2 - 2 * s
    p = h00 * pos[i] + h10 * step * vel[i] + h01 * pos[i + 1] + h11 * step * vel[i + 1]
    v = d00 * pos[i] + d10 * vel[i] + d01 * pos[i + 1] + d11 * vel[i + 1]
    return p, v


class CelestialEphemeris:
    """Barycentric states in TCL/TCB-compatible units (positions scaled by 1/(1-L_B))."""

    scale_positions = True

    def _raw(self, body: Body, t_tdb: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def state(self, body: Body | str, t_tdb: float) -> tuple[np.ndarray, np.ndarray]:
        pos, vel = self._raw(Body(body), float(t_tdb))
        if self.scale_positions:
            pos = pos / (1.0 - k.L_B)
        return pos, vel

    def relative(self, body: Body | str, origin: Body | str, t_tdb: float):
        p1, v1 = self.state(body, t_tdb)
        p0, v0 = self.state(origin, t_tdb)
        return p1 - p0, v1 - v0

    def span(self) -> tuple[float, float]:
        return (-np.inf, np.inf)

    def sampled(self, body: Body | str, origin: Body | str, t0: float, t1: float, step: float):
        """Uniform (times, positions, velocities) of ``body`` relative to ``origin``."""
        n = int(math.ceil((t1 - t0) / step)) + 1
        times = t0 + step * np.arange(n)
        pos = np.empty((n, 3))
        vel = np.empty((n, 3))
        for i, t in enumerate(times):
            pos[i], vel[i] = self.relative(body, origin, t)
        return times, pos, vel


    def table(self, body: Body | str, origin: Body | str, t0: float, t1: float, step: float) -> "HermiteTable":
        _, pos, vel = self.sampled(body, origin, t0, t1, step)
        return HermiteTable(t0, step, pos, vel)


class HermiteTable:
    """Uniform-grid cubic Hermite interpolant, vectorized over query times."""

    def __init__(self, t0: float, step: float, pos: np.ndarray, vel: np.ndarray):
        self.t0 = float(t0)
        self.step = float(step)
        self.pos = np.ascontiguousarray(pos, dtype=float)
        self.vel = np.ascontiguousarray(vel, dtype=float)

    @property
    def t1(self) -> float:
        return self.t0 + self.step * (self.pos.shape[0] - 1)

    def __call__(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        if t.size and (t.min() < self.t0 or t.max() > self.t1):
            raise EphemerisRangeError(f"query outside table [{self.t0:.1f}, {self.t1:.1f}]")
        u = (t - self.t0) / self.step
        i = np.clip(np.floor(u).astype(np.int64), 0, self.pos.shape[0] - 2)
        s = (u - i)[..., None]
        s2 = s * s
        s3 = s2 * s
        h = self.step
        p0, p1, v0, v1 = self.pos[i], self.pos[i + 1], self.vel[i], self.vel[i + 1]
        p = ((2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * v0
             + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * h * v1)
        v = ((6 * s2 - 6 * s) / h * p0 + (3 * s2 - 4 * s + 1) * v0
             + (-6 * s2 + 6 * s) / h * p1 + (3 * s2 - 2 * s) * v1)
        return p, v


class TabulatedEphemeris(CelestialEphemeris):
    def __init__(self, epochs: np.ndarray, states: dict[Body, np.ndarray], scale_positions: bool = True):
        self.epochs = np.asarray(epochs, dtype=float)
        steps = np.diff(self.epochs)
        if self.epochs.size < 2 or np.any(np.abs(steps - steps[0]) > 1e-6):
            raise TimeFrameError("ephemeris epochs must be uniformly spaced")
        self.step = float(steps[0])
        self.t0 = float(self.epochs[0])
        self.states = states
        self.scale_positions = scale_positions

    @classmethod
    def from_csv(cls, path: str | Path, scale_positions: bool = True) -> "TabulatedEphemeris":
        rows: dict[Body, list] = {b: [] for b in Body}
        epochs: dict[Body, list] = {b: [] for b in Body}
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"ephemeris file not found: {path}")
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader)
            if [h.strip() for h in header] != ["epoch", "body", "x", "y", "z", "vx", "vy", "vz"]:
                raise TimeFrameError(f"{path}: unexpected header {header}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    body = Body(row[1].strip().lower())
                    epochs[body].append(float(row[0]))
                    rows[body].append([float(v) for v in row[2:8]])
                except (ValueError, IndexError) as exc:
                    raise TimeFrameError(f"{path}: bad row {lineno}: {exc}") from None
        ref = np.array(epochs[Body.EARTH])
        for b in Body:
            if not np.array_equal(np.array(epochs[b]), ref):
                raise TimeFrameError(f"{path}: body {b.value} has a different epoch grid")
        return cls(ref, {b: np.array(rows[b]) for b in Body}, scale_positions)

    def span(self) -> tuple[float, float]:
        return (self.t0, float(self.epochs[-1]))

    def _raw(self, body: Body, t_tdb: float):
        lo, hi = self.span()
        if not (lo <= t_tdb <= hi):
            raise EphemerisRangeError(f"t={t_tdb:.1f} outside ephemeris span [{lo:.1f}, {hi:.1f}]")
        tab = self.states[body]
        return hermite_eval(self.t0, self.step, np.ascontiguousarray(tab[:, :3]),
                            np.ascontiguousarray(tab[:, 3:]), t_tdb)


class KeplerianEphemeris(CelestialEphemeris):
    """Mean-element two-body fallback (Sun fixed at the barycentre)."""

    _OBLIQUITY = math.radians(23.4392911)
    # Earth-Moon barycentre about the Sun, ecliptic J2000
    _EMB = dict(a=1.00000261 * k.AU, e=0.01671123, i=math.radians(-1.531e-5), raan=0.0,
                argp=math.radians(102.93768193), L=math.radians(100.46457166))
    # Moon about the Earth, ecliptic J2000
    _MOON = dict(a=384_400e3, e=0.0549, i=math.radians(5.145), raan=math.radians(125.08),
                 argp=math.radians(318.15), M=math.radians(135.27))

    def _rot(self) -> np.ndarray:
        c, s = math.cos(self._OBLIQUITY), math.sin(self._OBLIQUITY)
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])

    def _raw(self, body: Body, t_tdb: float):
        if body is Body.SUN:
            return np.zeros(3), np.zeros(3)
        emb = self._EMB
        mu_s = k.GM_SUN + k.GM_EARTH + k.GM_MOON
        m_emb = emb["L"] - emb["argp"] + math.sqrt(mu_s / emb["a"] ** 3) * t_tdb
        pe, ve = elements_to_state(mu_s, emb["a"], emb["e"], emb["i"], emb["raan"], emb["argp"], m_emb)
        mo = self._MOON
        mu_em = k.GM_EARTH + k.GM_MOON
        m_moon = mo["M"] + math.sqrt(mu_em / mo["a"] ** 3) * t_tdb
        pm, vm = elements_to_state(mu_em, mo["a"], mo["e"], mo["i"], mo["raan"], mo["argp"], m_moon)
        frac = k.GM_MOON / mu_em
        rot = self._rot()
        if body is Body.EARTH:
            return rot @ (pe - frac * pm), rot @ (ve - frac * vm)
        return rot @ (pe + (1 - frac) * pm), rot @ (ve + (1 - frac) * vm)


def default_ephemeris_path() -> Path:
    return Path(__file__).parent / "data" / "ephemeris.csv"


def body_state(body: Body | str, epoch: Epoch, eph: CelestialEphemeris,
               frames: Optional[TimeFrames] = None) -> tuple[np.ndarray, np.ndarray]:
    frames = frames or TimeFrames()
    tt = frames.convert(epoch, TimeScale.TT) if epoch.scale in _CHAIN[:4] else None
    if tt is None:
        raise TimeFrameError("body_state needs an epoch convertible to TT without the TCL model")
    return eph.state(body, tt_to_tdb_j2000(tt))


# --- TCL - TCG --------------------------------------------------------------

def tcl_tcg_rate(eph: CelestialEphemeris, t_tdb: float, tidal: bool = False) -> float:
    """d(TCL - TCG)/dt at the Moon's centre."""
    r, v = eph.relative(Body.MOON, Body.EARTH, t_tdb)
    rn = np.linalg.norm(r)
    mu_e = k.GM_EARTH / (1.0 - k.L_B)
    rate = -(0.5 * v @ v + mu_e / rn) / k.C_LIGHT**2
    if tidal:
        rs, _ = eph.relative(Body.SUN, Body.EARTH, t_tdb)
        rsn = np.linalg.norm(rs)
        mu_s = k.GM_SUN / (1.0 - k.L_B)
        tide = mu_s / rsn**3 * (1.5 * (r @ rs) ** 2 / rsn**2 - 0.5 * rn**2)
        rate -= tide / k.C_LIGHT**2
    return rate


class TclTcgModel:
    """TCL - TCG along the Moon, zero at the reference TCG epoch.

    The drift integrand is integrated with Simpson's rule between nodes and
    evaluated in between with a cubic Hermite fit (the integrand is the
    exact derivative at the nodes).
    """

    def __init__(self, eph: CelestialEphemeris, reference: Epoch, before: float, after: float,
                 step: float = 600.0, tidal: bool = False):
        if reference.scale is not TimeScale.TCG:
            raise TimeFrameError("reference must be a TCG epoch")
        self.eph = eph
        self.reference = reference
        self.tidal = tidal
        self.step = step
        # TDB at the reference via TT (the TCG-TT offset is applied exactly)
        self._ref_tdb = tt_to_tdb_j2000(TimeFrames().convert(reference, TimeScale.TT))
        n_before = int(math.ceil(before / step))
        n_after = int(math.ceil(after / step))
        self.t_start = -n_before * step
        nodes = self.t_start + step * np.arange(n_before + n_after + 1)
        rate = np.array([self._rate(t) for t in nodes])
        mids = np.array([self._rate(t + 0.5 * step) for t in nodes[:-1]])
        incr = step / 6.0 * (rate[:-1] + 4.0 * mids + rate[1:])
        cum = np.concatenate([[0.0], np.cumsum(incr)])
        cum -= cum[n_before]
        self.nodes = nodes
        self.values = cum
        self.rates = rate

    def _rate(self, t_rel: float) -> float:
        return tcl_tcg_rate(self.eph, self._ref_tdb + t_rel, self.tidal)

    def offset_rel(self, t_rel: float) -> float:
        u = (t_rel - self.t_start) / self.step
        i = int(math.floor(u))
        if i < 0 or i > len(self.nodes) - 1 or (i == len(self.nodes) - 1 and u > i):
            raise EphemerisRangeError(f"TCL-TCG model queried at {t_rel:.1f} s outside its span")
        i = min(i, len(self.nodes) - 2)
        s = u - i
        h = self.step
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * self.values[i] + (s3 - 2 * s2 + s) * h * self.rates[i]
                + (-2 * s3 + 3 * s2) * self.values[i + 1] + (s3 - s2) * h * self.rates[i + 1])

    def offset(self, tcg: Epoch, position_lcrs: Optional[np.ndarray] = None) -> float:
        """TCL - TCG in seconds; ``position_lcrs`` adds the -v_LE.r/c^2 term for an off-centre event."""
        out = self.offset_rel(tcg - self.reference)
        if position_lcrs is not None:
            _, v = self.eph.relative(Body.MOON, Body.EARTH, self._ref_tdb + (tcg - self.reference))
            out -= float(v @ np.asarray(position_lcrs)) / k.C_LIGHT**2
        return out

    def secular_rate(self) -> float:
        """Least-squares slope of the offset over the model span (s/s)."""
        return float(np.polyfit(self.nodes, self.values, 1)[0])


def tcl_minus_tcg(tcg: Epoch, model: TclTcgModel, position_lcrs: Optional[np.ndarray] = None) -> float:
    return model.offset(tcg, position_lcrs)
