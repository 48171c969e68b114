"""UD covariance factors and the rank-one updates that act on them.

A covariance is carried as ``P = U diag(d) U^T`` with ``U`` unit upper
triangular and ``d >= 0``.  The scalar measurement update is Carlson's
(Bierman's) recursion; a truncated variant skips the trailing block of an
augmented factor when only the leading block is needed afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

PIVOT_FLOOR = 1e-300
SYMMETRY_TOL = 1e-9


class UDError(ArithmeticError):
    """Base class for factorization and update failures."""


class NonSymmetricError(UDError, ValueError):
    pass


class IndefiniteMatrixError(UDError):
    pass


class NonPositiveNoiseError(UDError, ValueError):
    pass


class NegativeInnovationVarianceError(UDError):
    pass


class InvalidSplitError(UDError, ValueError):
    pass


class NonZeroTailError(UDError, ValueError):
    pass


class NegativeScaleError(UDError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UDFactors:
    """Unit upper-triangular ``u`` and diagonal ``d`` with ``P = u diag(d) u^T``."""

    u: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        u = np.array(self.u, dtype=float)
        d = np.array(self.d, dtype=float)
        n = d.shape[0]
        if d.ndim != 1 or u.shape != (n, n):
            raise ValueError(f"shape mismatch: u {u.shape}, d {d.shape}")
        if not np.allclose(np.diag(u), 1.0, rtol=0, atol=1e-12) or np.any(np.tril(u, -1) != 0.0):
            raise ValueError("u must be unit upper triangular")
        if np.any(d < 0.0) or not np.all(np.isfinite(d)):
            raise ValueError("d must be finite and non-negative")
        np.fill_diagonal(u, 1.0)
        u.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "d", d)

    @classmethod
    def _wrap(cls, u: np.ndarray, d: np.ndarray) -> "UDFactors":
        # trusted constructor for arrays produced by this module
        obj = object.__new__(cls)
        u.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(obj, "u", u)
        object.__setattr__(obj, "d", d)
        return obj

    @classmethod
    def from_variances(cls, var) -> "UDFactors":
        var = np.asarray(var, dtype=float)
        return cls(np.eye(var.size), var.copy())

    @property
    def dim(self) -> int:
        return self.d.shape[0]

    def covariance(self) -> np.ndarray:
        return reconstruct(self)


def _check_symmetric(p: np.ndarray, tol: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.max(np.abs(p)), np.finfo(float).tiny) if p.size else 1.0
    asym = np.max(np.abs(p - p.T)) if p.size else 0.0
    if asym > tol * scale:
        raise NonSymmetricError(f"asymmetry {asym:.3e} exceeds {tol:g} relative")
    return 0.5 * (p + p.T)


def ud_factorize(p, allow_degenerate: bool = False, tol: float = SYMMETRY_TOL,
                 floor: float = PIVOT_FLOOR) -> UDFactors:
    """Factor a symmetric positive (semi)definite matrix as ``U diag(d) U^T``.

    Columns are processed from the last to the first.  With
    ``allow_degenerate`` a vanishing pivot is stored as ``d[j] = 0`` and the
    column of ``U`` above it is zeroed, which is what process-noise matrices
    with unforced states need.
    """
    p = _check_symmetric(p, tol)
    u, d, status, col, value = _factor_kernel(p, tol, floor, allow_degenerate)
    if status == 1:
        raise IndefiniteMatrixError(f"negative pivot {value:.3e} at column {col}")
    if status == 2:
        raise IndefiniteMatrixError(f"zero pivot at column {col} with nonzero coupling {value:.3e}")
    if status == 3:
        raise IndefiniteMatrixError(
            f"pivot {value:.3e} at column {col} is not positive (pass allow_degenerate for PSD input)")
    return UDFactors._wrap(u, d)


@njit(cache=True)
def _factor_kernel(p, tol, floor, allow_degenerate):
    # status: 0 ok, 1 negative pivot, 2 zero pivot with coupling, 3 zero pivot not allowed
    n = p.shape[0]
    u = np.eye(n)
    d = np.zeros(n)
    for j in range(n - 1, -1, -1):
        dj = p[j, j]
        for k in range(j + 1, n):
            dj -= u[j, k] * u[j, k] * d[k]
        num = np.empty(j)
        for i in range(j):
            s = p[i, j]
            for k in range(j + 1, n):
                s -= u[i, k] * u[j, k] * d[k]
            num[i] = s
        col_tol = tol * abs(p[j, j])
        if dj < -col_tol or (dj < 0.0 and not allow_degenerate):
            return u, d, 1, j, dj
        if dj <= floor or (allow_degenerate and dj <= col_tol):
            worst = 0.0
            big = 0.0
            for i in range(j):
                c = abs(num[i]) - tol * np.sqrt(abs(p[i, i]) * abs(p[j, j])) - floor
                worst = max(worst, c)
                big = max(big, abs(num[i]))
            if worst > 0.0:
                return u, d, 2, j, big
            if not allow_degenerate:
                return u, d, 3, j, dj
            d[j] = 0.0
            continue
        d[j] = dj
        for i in range(j):
            u[i, j] = num[i] / dj
    return u, d, 0, -1, 0.0


def reconstruct(f: UDFactors) -> np.ndarray:
    """Dense ``U diag(d) U^T``; the upper triangle is mirrored so the result is exactly symmetric."""
    m = (f.u * f.d) @ f.u.T
    return np.triu(m) + np.triu(m, 1).T


@njit(cache=True)
def _carlson_kernel(u, d, h, r, stop, floor):
    # In-place transcription of the scalar update; ``stop`` bounds the inner
    # loop for i >= stop (stop == N gives the full update).
    # Returns (status, gain, innovation variance): status 1 flags a
    # non-positive intermediate innovation variance.
    n_aug = d.shape[0]
    f = np.zeros(n_aug)
    for i in range(n_aug):
        s = 0.0
        for j in range(i + 1):
            s += u[j, i] * h[j]
        f[i] = s
    v = d * f
    b = np.zeros(n_aug)
    a_prev = r
    for i in range(n_aug):
        a_i = a_prev + f[i] * v[i]
        if a_i <= floor:
            return 1, b, a_i
        d[i] = a_prev / a_i * d[i]
        b[i] = v[i]
        p_i = -f[i] / a_prev
        jmax = i if i < stop else stop
        for j in range(jmax):
            u_old = u[j, i]
            u[j, i] = u_old + p_i * b[j]
            b[j] = b[j] + v[i] * u_old
        a_prev = a_i
    for i in range(n_aug):
        b[i] = b[i] / a_prev
    return 0, b, a_prev


def _carlson_checked(f: UDFactors, h, r: float, stop: int, floor: float):
    h = np.asarray(h, dtype=float)
    if h.shape != (f.dim,):
        raise ValueError(f"h has shape {h.shape}, expected ({f.dim},)")
    if not (r > 0.0) or not np.isfinite(r):
        raise NonPositiveNoiseError(f"measurement variance must be positive, got {r!r}")
    u = np.array(f.u)
    d = np.array(f.d)
    status, k, alpha = _carlson_kernel(u, d, h, float(r), stop, floor)
    if status:
        raise NegativeInnovationVarianceError(f"innovation variance collapsed to {alpha:.3e}")
    return UDFactors._wrap(u, d), k, alpha


def carlson_scalar_update(f: UDFactors, h, r: float, floor: float = PIVOT_FLOOR):
    """Scalar measurement update of UD factors.

    Returns ``(updated factors, gain K)``; the mean update is the caller's
    ``x += K * innovation``.
    """
    post, k, _ = _carlson_checked(f, h, r, f.dim, floor)
    return post, k


def carlson_scalar_update_truncated(f: UDFactors, h, r: float, n: int, floor: float = PIVOT_FLOOR):
    """Carlson update that only maintains the leading ``n`` block.

    ``h`` must vanish beyond index ``n``.  The returned factors carry
    correct ``u[:n, :]`` and ``d`` (so the leading marginal can still be
    formed); the trailing ``u[n:, n:]`` block is left as it was and is stale.
    Only ``K[:n]`` is meaningful.
    """
    big_n = f.dim
    if not (0 < n <= big_n):
        raise InvalidSplitError(f"split {n} outside 1..{big_n}")
    h = np.asarray(h, dtype=float)
    if h.shape == (big_n,) and np.any(h[n:] != 0.0):
        raise NonZeroTailError("measurement row touches the trailing block")
    post, k, _ = _carlson_checked(f, h, r, n, floor)
    return post, k


def agee_turner_rank_one(f: UDFactors, c: float, v) -> UDFactors:
    """UD factors of ``U D U^T + c v v^T`` for ``c >= 0``."""
    if c < 0.0:
        raise NegativeScaleError(f"scale must be non-negative, got {c}")
    v = np.array(v, dtype=float)
    if v.shape != (f.dim,):
        raise ValueError(f"v has shape {v.shape}, expected ({f.dim},)")
    u = np.array(f.u)
    d = np.array(f.d)
    cj = float(c)
    for j in range(f.dim - 1, 0, -1):
        vj = v[j]
        dj = d[j] + cj * vj * vj
        v[:j] -= vj * u[:j, j]
        if dj > 0.0:
            u[:j, j] += (cj * vj / dj) * v[:j]
            cj = cj * d[j] / dj
        d[j] = dj
    d[0] = d[0] + cj * v[0] * v[0]
    return UDFactors._wrap(u, d)
