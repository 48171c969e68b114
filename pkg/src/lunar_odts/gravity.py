"""Spherical-harmonic gravity (Cunningham recursion) and lunar orientation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from . import constants as k


class GravityFieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GravityField:
    """Fully normalized coefficients ``cbar[n, m]``, ``sbar[n, m]``."""

    mu: float
    radius: float
    cbar: np.ndarray
    sbar: np.ndarray
    degree: int
    order: int

    def truncated(self, degree: int, order: int | None = None) -> "GravityField":
        order = degree if order is None else order
        if degree > self.degree or order > min(self.order, degree):
            raise GravityFieldError(
                f"requested {degree}x{order} exceeds table {self.degree}x{self.order}")
        return GravityField(self.mu, self.radius, self.cbar[: degree + 1, : degree + 1].copy(),
                            self.sbar[: degree + 1, : degree + 1].copy(), degree, order)

    def unnormalized(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.degree
        c = np.zeros((n + 1, n + 1))
        s = np.zeros((n + 1, n + 1))
        for deg in range(n + 1):
            for m in range(min(deg, self.order) + 1):
                lf = 0.5 * (math.log(2.0 - (m == 0)) + math.log(2 * deg + 1)
                            + math.lgamma(deg - m + 1) - math.lgamma(deg + m + 1))
                f = math.exp(lf)
                c[deg, m] = self.cbar[deg, m] * f
                s[deg, m] = self.sbar[deg, m] * f
        return c, s

    def scaled(self, factor: float) -> "GravityField":
        return GravityField(self.mu * factor, self.radius, self.cbar, self.sbar, self.degree, self.order)


def load_gravity_field(path: str | Path, degree: int | None = None, order: int | None = None) -> GravityField:
    """Read ``n m C S`` rows; ``# mu = ...`` and ``# radius = ...`` header lines are required."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"gravity table not found: {path}")
    meta: dict[str, float] = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip()
                if "=" in body:
                    key, val = (p.strip() for p in body.split("=", 1))
                    try:
                        meta[key] = float(val)
                    except ValueError:
                        raise GravityFieldError(f"{path}:{lineno}: bad header value {val!r}") from None
                continue
            parts = text.replace(",", " ").split()
            try:
                n, m = int(parts[0]), int(parts[1])
                c, s = float(parts[2]), float(parts[3])
            except (ValueError, IndexError):
                raise GravityFieldError(f"{path}:{lineno}: cannot parse {text!r}") from None
            if n < 0 or m < 0 or m > n:
                raise GravityFieldError(f"{path}:{lineno}: invalid indices n={n}, m={m}")
            if not (math.isfinite(c) and math.isfinite(s)):
                raise GravityFieldError(f"{path}:{lineno}: non-finite coefficient")
            rows.append((n, m, c, s))
    for key in ("mu", "radius"):
        if key not in meta:
            raise GravityFieldError(f"{path}: missing '# {key} = ...' header")
    if not rows:
        raise GravityFieldError(f"{path}: no coefficients")
    nmax = max(r[0] for r in rows)
    cbar = np.zeros((nmax + 1, nmax + 1))
    sbar = np.zeros((nmax + 1, nmax + 1))
    for n, m, c, s in rows:
        cbar[n, m] = c
        sbar[n, m] = s
    if abs(cbar[0, 0] - 1.0) > 1e-12:
        raise GravityFieldError(f"{path}: C00 must be 1, got {cbar[0, 0]}")
    field = GravityField(meta["mu"], meta["radius"], cbar, sbar, nmax, nmax)
    if degree is not None:
        field = field.truncated(degree, order)
    return field


def default_gravity_path() -> Path:
    return Path(__file__).parent / "data" / "moon_gravity.txt"


@njit(cache=True)
def _vw(x, y, z, radius, nmax, mmax):
    r2 = x * x + y * y + z * z
    rho = radius * radius / r2
    x0 = radius * x / r2
    y0 = radius * y / r2
    z0 = radius * z / r2
    v = np.zeros((nmax + 2, nmax + 2))
    w = np.zeros((nmax + 2, nmax + 2))
    v[0, 0] = radius / math.sqrt(r2)
    v[1, 0] = z0 * v[0, 0]
    for n in range(2, nmax + 2):
        v[n, 0] = ((2 * n - 1) * z0 * v[n - 1, 0] - (n - 1) * rho * v[n - 2, 0]) / n
    for m in range(1, min(mmax + 1, nmax + 1) + 1):
        v[m, m] = (2 * m - 1) * (x0 * v[m - 1, m - 1] - y0 * w[m - 1, m - 1])
        w[m, m] = (2 * m - 1) * (x0 * w[m - 1, m - 1] + y0 * v[m - 1, m - 1])
        if m <= nmax:
            v[m + 1, m] = (2 * m + 1) * z0 * v[m, m]
            w[m + 1, m] = (2 * m + 1) * z0 * w[m, m]
        for n in range(m + 2, nmax + 2):
            v[n, m] = ((2 * n - 1) * z0 * v[n - 1, m] - (n + m - 1) * rho * v[n - 2, m]) / (n - m)
            w[n, m] = ((2 * n - 1) * z0 * w[n - 1, m] - (n + m - 1) * rho * w[n - 2, m]) / (n - m)
    return v, w


@njit(cache=True)
def sh_accel(pos, c, s, nmax, mmax, mu, radius, nmin):
    """Body-fixed acceleration from degrees ``nmin..nmax`` (unnormalized coefficients)."""
    v, w = _vw(pos[0], pos[1], pos[2], radius, nmax, mmax)
    ax = 0.0
    ay = 0.0
    az = 0.0
    for m in range(0, mmax + 1):
        for n in range(max(m, nmin), nmax + 1):
            cnm = c[n, m]
            snm = s[n, m]
            if m == 0:
                ax -= cnm * v[n + 1, 1]
                ay -= cnm * w[n + 1, 1]
                az -= (n + 1) * cnm * v[n + 1, 0]
            else:
                fac = 0.5 * (n - m + 1) * (n - m + 2)
                ax += 0.5 * (-cnm * v[n + 1, m + 1] - snm * w[n + 1, m + 1]) \
                    + fac * (cnm * v[n + 1, m - 1] + snm * w[n + 1, m - 1])
                ay += 0.5 * (-cnm * w[n + 1, m + 1] + snm * v[n + 1, m + 1]) \
                    + fac * (-cnm * w[n + 1, m - 1] + snm * v[n + 1, m - 1])
                az += (n - m + 1) * (-cnm * v[n + 1, m] - snm * w[n + 1, m])
    g = mu / (radius * radius)
    out = np.empty(3)
    out[0] = g * ax
    out[1] = g * ay
    out[2] = g * az
    return out


@njit(cache=True)
def sh_potential(pos, c, s, nmax, mmax, mu, radius):
    v, w = _vw(pos[0], pos[1], pos[2], radius, nmax, mmax)
    u = 0.0
    for m in range(0, mmax + 1):
        for n in range(m, nmax + 1):
            u += c[n, m] * v[n, m] + s[n, m] * w[n, m]
    return mu / radius * u


@njit(cache=True)
def moon_orientation(t_tdb):
    """ICRF -> lunar body-fixed rotation (IAU mean pole and prime meridian, no librations)."""
    d = t_tdb / 86400.0
    tc = d / 36525.0
    alpha = math.radians(269.9949 + 0.0031 * tc)
    delta = math.radians(66.5392 + 0.0130 * tc)
    wang = math.radians((38.3213 + 13.17635815 * d - 1.4e-12 * d * d) % 360.0)
    a1 = math.pi / 2 + alpha
    a2 = math.pi / 2 - delta
    c1, s1 = math.cos(a1), math.sin(a1)
    c2, s2 = math.cos(a2), math.sin(a2)
    c3, s3 = math.cos(wang), math.sin(wang)
    r1 = np.array([[c1, s1, 0.0], [-s1, c1, 0.0], [0.0, 0.0, 1.0]])
    r2 = np.array([[1.0, 0.0, 0.0], [0.0, c2, s2], [0.0, -s2, c2]])
    r3 = np.array([[c3, s3, 0.0], [-s3, c3, 0.0], [0.0, 0.0, 1.0]])
    return r3 @ (r2 @ r1)


def gravity_accel(r, field: GravityField, body_fixed_rotation: np.ndarray) -> np.ndarray:
    """Inertial acceleration of the full field at inertial position ``r``."""
    c, s = field.unnormalized()
    rot = np.asarray(body_fixed_rotation, dtype=float)
    a_bf = sh_accel(rot @ np.asarray(r, dtype=float), c, s, field.degree, field.order,
                    field.mu, field.radius, 0)
    return rot.T @ a_bf


def point_mass_field(mu: float = k.GM_MOON, radius: float = k.R_MOON_GRAVITY) -> GravityField:
    z = np.zeros((1, 1))
    return GravityField(mu, radius, np.ones((1, 1)), z, 0, 0)
