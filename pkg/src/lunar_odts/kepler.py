"""Two-body orbital elements <-> Cartesian state (angles in radians)."""

from __future__ import annotations

import numpy as np


def solve_kepler(m, e, tol: float = 1e-15, max_iter: int = 30):
    """Eccentric anomaly from mean anomaly (elliptic, vectorized Newton)."""
    m = np.asarray(m, dtype=float)
    e = np.asarray(e, dtype=float)
    m = np.mod(m + np.pi, 2 * np.pi) - np.pi
    ecc = np.where(e < 0.8, m, np.pi * np.sign(m))
    for _ in range(max_iter):
        f = ecc - e * np.sin(ecc) - m
        step = f / (1.0 - e * np.cos(ecc))
        ecc = ecc - step
        if np.all(np.abs(step) < tol):
            break
    return ecc


def _perifocal_rotation(inc, raan, argp):
    ci, si = np.cos(inc), np.sin(inc)
    co, so = np.cos(raan), np.sin(raan)
    cw, sw = np.cos(argp), np.sin(argp)
    p = np.stack([co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si], axis=-1)
    q = np.stack([-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si], axis=-1)
    return p, q


def elements_to_state(mu, a, e, inc, raan, argp, mean_anomaly):
    """Position and velocity (broadcast over element arrays)."""
    ecc = solve_kepler(mean_anomaly, e)
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    cos_e, sin_e = np.cos(ecc), np.sin(ecc)
    b = np.sqrt(1.0 - e * e)
    xp = a * (cos_e - e)
    yp = a * b * sin_e
    edot = np.sqrt(mu / a**3) / (1.0 - e * cos_e)
    vxp = -a * sin_e * edot
    vyp = a * b * cos_e * edot
    p, q = _perifocal_rotation(inc, raan, argp)
    pos = xp[..., None] * p + yp[..., None] * q
    vel = vxp[..., None] * p + vyp[..., None] * q
    return pos, vel


def true_to_mean(nu, e):
    ecc = 2.0 * np.arctan2(np.sqrt(1.0 - e) * np.sin(nu / 2), np.sqrt(1.0 + e) * np.cos(nu / 2))
    return ecc - e * np.sin(ecc)


def state_to_elements(mu, r, v):
    """(a, e, i, raan, argp, mean anomaly) of a bound orbit."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    h = np.cross(r, v)
    rn = np.linalg.norm(r)
    evec = np.cross(v, h) / mu - r / rn
    e = np.linalg.norm(evec)
    a = 1.0 / (2.0 / rn - v @ v / mu)
    inc = np.arccos(np.clip(h[2] / np.linalg.norm(h), -1, 1))
    node = np.array([-h[1], h[0], 0.0])
    nn = np.linalg.norm(node)
    raan = np.arctan2(node[1], node[0]) if nn > 0 else 0.0
    if nn > 0:
        argp = np.arctan2(np.dot(np.cross(node, evec), h) / np.linalg.norm(h), node @ evec)
    else:
        argp = np.arctan2(evec[1], evec[0])
    nu = np.arctan2(np.dot(np.cross(evec, r), h) / np.linalg.norm(h), evec @ r)
    return a, e, inc, np.mod(raan, 2 * np.pi), np.mod(argp, 2 * np.pi), true_to_mean(nu, e)


def propagate_kepler(mu, r, v, dt):
    a, e, inc, raan, argp, m0 = state_to_elements(mu, r, v)
    n = np.sqrt(mu / a**3)
    return elements_to_state(mu, a, e, inc, raan, argp, m0 + n * dt)
