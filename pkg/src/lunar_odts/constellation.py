"""Synthetic GPS / Galileo / QZSS transmitters.

Nominal Keplerian almanacs in an Earth-centred inertial frame (ICRF axes),
per-block transmit power, and azimuth-symmetric antenna gain tables.
Broadcast errors are described statistically per constellation and
realized by :mod:`lunar_odts.observables`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import constants as k
from .kepler import elements_to_state


class ConstellationError(ValueError):
    pass


class Signal(str, enum.Enum):
    L1 = "L1"
    L5 = "L5"

    @property
    def frequency(self) -> float:
        return k.F_L1 if self is Signal.L1 else k.F_L5

    @property
    def wavelength(self) -> float:
        return k.C_LIGHT / self.frequency

    @property
    def chip_rate(self) -> float:
        return k.CHIP_RATE_L1 if self is Signal.L1 else k.CHIP_RATE_L5


@dataclass(frozen=True, eq=False)
class AntennaPattern:
    """Gain (dBi) versus off-boresight angle (deg), linearly interpolated."""

    angles_deg: np.ndarray
    gains_dbi: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.angles_deg, dtype=float)
        g = np.asarray(self.gains_dbi, dtype=float)
        if a.ndim != 1 or a.shape != g.shape or a.size < 2:
            raise ConstellationError("antenna table needs matching 1-D angle and gain arrays")
        if np.any(np.diff(a) <= 0) or a[0] != 0.0 or a[-1] != 180.0:
            raise ConstellationError("antenna angles must increase strictly from 0 to 180 deg")
        object.__setattr__(self, "angles_deg", a)
        object.__setattr__(self, "gains_dbi", g)

    def gain(self, theta_deg):
        return np.interp(theta_deg, self.angles_deg, self.gains_dbi)

    def offset(self, db: float) -> "AntennaPattern":
        return AntennaPattern(self.angles_deg, self.gains_dbi + db)


_ANG = [0, 5, 10, 14, 17, 20, 22, 24, 26, 30, 35, 40, 50, 60, 90, 180]
# main lobe to ~22 deg, first null near 24 deg, sidelobe around 30 deg
DEFAULT_PATTERNS: dict[str, AntennaPattern] = {
    "gps": AntennaPattern(np.array(_ANG, float), np.array(
        [13.0, 13.3, 13.5, 12.5, 10.0, 5.5, 1.0, -8.0, -3.0, 0.5, -1.0, -4.0, -10.0, -15.0, -20.0, -30.0])),
    "galileo": AntennaPattern(np.array(_ANG, float), np.array(
        [14.0, 14.3, 14.5, 14.0, 12.0, 8.0, 3.0, -6.0, -4.0, -0.5, -1.5, -5.0, -10.0, -15.0, -20.0, -30.0])),
    "qzss": AntennaPattern(
        np.array([0, 4, 8, 10, 12, 14, 16, 18, 22, 26, 30, 40, 60, 90, 180], float),
        np.array([14.5, 14.5, 13.5, 11.0, 6.0, -2.0, -8.0, -3.0, -0.5, -1.0, -4.0, -8.0, -15.0, -20.0, -30.0])),
}
# the L5 element is modelled 6 dB below L1 at every angle
L5_PATTERN_OFFSET_DB = -6.0
L5_EXTRA_POWER_DB = 3.0


@dataclass(frozen=True)
class BroadcastErrorStats:
    """Line-of-sight broadcast error statistics (m)."""

    pos_mean: float
    pos_std: float
    clk_mean: float
    clk_std: float
    # correlation time (s) of the second-order Gauss-Markov processes; a quarter
    # of the GNSS orbital period
    tau: float = 10800.0


BROADCAST_ERRORS = {
    "GPS": BroadcastErrorStats(0.102, 0.582, 0.094, 0.778),
    "GAL": BroadcastErrorStats(-0.105, 0.261, -1.138, 0.666),
    "QZS": BroadcastErrorStats(-1.215, 0.412, -1.364, 0.621),
}

BLOCK_POWER_L1 = {"IIR": 17.3, "IIR-M": 18.8, "IIF": 16.2, "III": 18.8, "GAL": 15.5, "QZS": 14.1}
BLOCK_HAS_L5 = {"IIR": False, "IIR-M": False, "IIF": True, "III": True, "GAL": True, "QZS": True}


@dataclass(frozen=True)
class GnssSource:
    """One transmitter: almanac, block, powers and signal set.

    Elements are semi-major axis (m), eccentricity, inclination, RAAN,
    argument of perigee and mean anomaly at scenario time zero (rad).
    """

    ident: str
    system: str
    block: str
    a: float
    e: float
    inc: float
    raan: float
    argp: float
    m0: float
    power_dbw: dict = field(default_factory=dict)
    pattern: str = "gps"
    isb: float = 0.0

    @property
    def signals(self) -> tuple[Signal, ...]:
        return tuple(Signal(s) for s in sorted(self.power_dbw))

    def has(self, sig: Signal) -> bool:
        return sig.value in self.power_dbw

    @property
    def mean_motion(self) -> float:
        return math.sqrt(k.GM_EARTH / self.a**3)

    def state(self, t):
        """Earth-centred inertial position and velocity at scenario time(s) ``t``."""
        return elements_to_state(k.GM_EARTH, self.a, self.e, self.inc, self.raan, self.argp,
                                 self.m0 + self.mean_motion * np.asarray(t, dtype=float))


def _source(ident, system, block, a, e, inc, raan, argp, m0, pattern) -> GnssSource:
    p1 = BLOCK_POWER_L1[block]
    power = {"L1": p1}
    if BLOCK_HAS_L5[block]:
        power["L5"] = p1 + L5_EXTRA_POWER_DB
    return GnssSource(ident, system, block, a, e, inc, raan, argp, m0, power, pattern)


def nominal_constellation(phase_deg: float = 0.0) -> list[GnssSource]:
    """31 GPS, 26 Galileo and 4 QZSS transmitters.

    GPS: six 55 deg planes; blocks IIR x7, IIR-M x7, IIF x11, III x6.
    Galileo: three 56 deg planes of nine slots (one left empty).
    QZSS: three inclined geosynchronous orbits and one geostationary.
    """
    rad = math.radians
    ph = rad(phase_deg)
    out: list[GnssSource] = []
    blocks = ["IIR"] * 7 + ["IIR-M"] * 7 + ["IIF"] * 11 + ["III"] * 6
    rng = np.random.default_rng(31)
    rng.shuffle(blocks)
    counts = [6, 5, 5, 5, 5, 5]
    idx = 0
    for plane, n in enumerate(counts):
        for slot in range(n):
            m0 = ph + 2 * math.pi * slot / n + rad(15.0) * plane
            out.append(_source(f"G{idx + 1:02d}", "GPS", blocks[idx], 26_559_700.0, 0.005, rad(55.0),
                               rad(60.0 * plane + 17.0), 0.0, m0, "gps"))
            idx += 1
    idx = 0
    for plane in range(3):
        for slot in range(9):
            if plane == 2 and slot == 8:
                continue
            m0 = ph + 2 * math.pi * slot / 9 + rad(13.33) * plane
            out.append(_source(f"E{idx + 1:02d}", "GAL", "GAL", 29_599_800.0, 0.0002, rad(56.0),
                               rad(120.0 * plane + 40.0), 0.0, m0, "galileo"))
            idx += 1
    a_geo = 42_164_200.0
    for j in range(3):
        out.append(_source(f"J{j + 1:02d}", "QZS", "QZS", a_geo, 0.075, rad(41.0),
                           rad(195.0 + 120.0 * j), rad(270.0), ph + 2 * math.pi * j / 3, "qzss"))
    out.append(_source("J04", "QZS", "QZS", a_geo, 0.0, 0.0, 0.0, 0.0, ph + rad(127.0), "qzss"))
    return out


ALMANAC_FIELDS = ["ident", "system", "block", "a_m", "e", "inc_deg", "raan_deg", "argp_deg",
                  "m0_deg", "p_l1_dbw", "p_l5_dbw", "pattern", "isb_m"]


def write_almanac(path: str | Path, sources: Iterable[GnssSource]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ALMANAC_FIELDS)
        for s in sources:
            w.writerow([s.ident, s.system, s.block, repr(s.a), repr(s.e), repr(math.degrees(s.inc)),
                        repr(math.degrees(s.raan)), repr(math.degrees(s.argp)), repr(math.degrees(s.m0)),
                        repr(s.power_dbw["L1"]), repr(s.power_dbw.get("L5", float("nan"))),
                        s.pattern, repr(s.isb)])


def load_almanac(path: str | Path) -> list[GnssSource]:
    """Read an almanac CSV; ``p_l5_dbw`` empty or ``nan`` means no L5."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"almanac not found: {path}")
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = set(ALMANAC_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ConstellationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                p5 = float(row["p_l5_dbw"]) if row["p_l5_dbw"].strip() else float("nan")
                power = {"L1": float(row["p_l1_dbw"])}
                if math.isfinite(p5):
                    power["L5"] = p5
                src = GnssSource(row["ident"], row["system"], row["block"], float(row["a_m"]), float(row["e"]),
                                 math.radians(float(row["inc_deg"])), math.radians(float(row["raan_deg"])),
                                 math.radians(float(row["argp_deg"])), math.radians(float(row["m0_deg"])),
                                 power, row["pattern"], float(row["isb_m"] or 0.0))
            except (KeyError, ValueError) as exc:
                raise ConstellationError(f"{path}:{lineno}: {exc}") from None
            if src.system not in BROADCAST_ERRORS:
                raise ConstellationError(f"{path}:{lineno}: unknown system {src.system!r}")
            if not 0 <= src.e < 1 or src.a <= k.R_EARTH:
                raise ConstellationError(f"{path}:{lineno}: implausible orbit for {src.ident}")
            out.append(src)
    if not out:
        raise ConstellationError(f"{path}: no sources")
    return out


@dataclass(frozen=True, eq=False)
class Constellation:
    """Vectorized view of a source list."""

    sources: tuple
    patterns: dict

    @classmethod
    def build(cls, sources: Sequence[GnssSource], patterns: dict | None = None) -> "Constellation":
        pats = dict(DEFAULT_PATTERNS if patterns is None else patterns)
        for s in sources:
            if s.pattern not in pats:
                raise ConstellationError(f"{s.ident}: unknown antenna pattern {s.pattern!r}")
        return cls(tuple(sources), pats)

    def __len__(self) -> int:
        return len(self.sources)

    @property
    def idents(self) -> list[str]:
        return [s.ident for s in self.sources]

    @property
    def systems(self) -> np.ndarray:
        return np.array([s.system for s in self.sources])

    def _elements(self):
        f = np.array([[s.a, s.e, s.inc, s.raan, s.argp, s.m0, s.mean_motion] for s in self.sources])
        return f.T

    def states(self, t):
        """ECI positions/velocities for times ``t`` of shape (..., n_sources)."""
        a, e, inc, raan, argp, m0, n = self._elements()
        t = np.asarray(t, dtype=float)
        return elements_to_state(k.GM_EARTH, a, e, inc, raan, argp, m0 + n * t)

    def power(self, sig: Signal) -> np.ndarray:
        return np.array([s.power_dbw.get(sig.value, np.nan) for s in self.sources])

    def has(self, sig: Signal) -> np.ndarray:
        return np.array([s.has(sig) for s in self.sources])

    def tx_gain(self, sig: Signal, theta_deg: np.ndarray) -> np.ndarray:
        """Transmit gain for off-boresight angles of shape (..., n_sources)."""
        out = np.empty_like(np.asarray(theta_deg, dtype=float))
        off = L5_PATTERN_OFFSET_DB if sig is Signal.L5 else 0.0
        for name, pat in self.patterns.items():
            cols = [i for i, s in enumerate(self.sources) if s.pattern == name]
            if cols:
                out[..., cols] = pat.gain(theta_deg[..., cols]) + off
        return out

    def error_stats(self) -> list[BroadcastErrorStats]:
        return [BROADCAST_ERRORS[s.system] for s in self.sources]

    def with_isb(self, system: str, bias: float) -> "Constellation":
        src = tuple(replace(s, isb=bias) if s.system == system else s for s in self.sources)
        return Constellation(src, self.patterns)


__all__ = [
    "AntennaPattern", "BroadcastErrorStats", "Constellation", "ConstellationError", "GnssSource",
    "Signal", "load_almanac", "nominal_constellation", "write_almanac",
]
