"""Stochastic-cloning UD filter with a delayed-state fixed-interval smoother.

The augmented state stacks the current state on top of a clone of the
previous epoch, ``[x_k, x_{k-1}]``, so that measurements depending on both
(time-differenced carrier phase) can be processed by ordinary scalar
updates.  Covariances stay in UD form throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .udlinalg import (
    PIVOT_FLOOR,
    NegativeInnovationVarianceError,
    NonPositiveNoiseError,
    UDFactors,
    _carlson_kernel,
    agee_turner_rank_one,
    reconstruct,
    ud_factorize,
)


class FilterError(ArithmeticError):
    pass


class OrderingViolation(FilterError, ValueError):
    """A delayed-state measurement follows a current-only one in a batch."""


class ShapeMismatch(FilterError, ValueError):
    pass


class SingularAnchor(FilterError):
    """Smoother anchor covariance has a vanishing pivot."""


class StaleFactors(FilterError, ValueError):
    """Factors were produced by a truncated update and lack a valid clone block."""


class MeasurementKind(enum.Enum):
    CURRENT_ONLY = "current_only"
    DELAYED_STATE = "delayed_state"


class UpdateStatus(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    SKIPPED = "skipped"


@dataclass(frozen=True, eq=False)
class Belief:
    epoch: float
    x: np.ndarray
    cov: UDFactors

    def covariance(self) -> np.ndarray:
        return reconstruct(self.cov)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance()))


@dataclass(frozen=True, eq=False)
class AugmentedBelief:
    epoch_current: float
    epoch_clone: float
    x_aug: np.ndarray
    cov_aug: UDFactors
    split: int
    # set after a truncated update: the clone block of cov_aug and x_aug is no longer valid
    clone_stale: bool = False

    @property
    def x_current(self) -> np.ndarray:
        return self.x_aug[: self.split]

    @property
    def x_clone(self) -> np.ndarray:
        return self.x_aug[self.split:]


@dataclass(eq=False)
class ScalarMeasurement:
    """One scalar observation.

    ``model(x_current, x_clone)`` (optional) re-evaluates the prediction
    from the running mean; without it the prediction is carried to the
    running mean with the linearization ``predicted + h . dx``.
    """

    value: float
    predicted: float
    h_current: np.ndarray
    h_clone: Optional[np.ndarray]
    variance: float
    ident: str = ""
    model: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    @property
    def kind(self) -> MeasurementKind:
        if self.h_clone is None or not np.any(self.h_clone):
            return MeasurementKind.CURRENT_ONLY
        return MeasurementKind.DELAYED_STATE


@dataclass(frozen=True)
class UpdateRecord:
    ident: str
    status: UpdateStatus
    innovation: float
    innovation_variance: float
    reason: str = ""


@dataclass(frozen=True, eq=False)
class SmootherRecord:
    """What the smoother needs from one filter epoch."""

    epoch: float
    clone_epoch: float
    x_aug: np.ndarray
    u_aug: np.ndarray
    d_aug: np.ndarray
    posterior: Belief
    split: int


def _stack_qphi(b: Belief, phi: np.ndarray, q_factors: UDFactors) -> tuple[np.ndarray, np.ndarray]:
    n = b.x.size
    u = np.zeros((2 * n, 2 * n))
    u[:n, :n] = q_factors.u
    u[:n, n:] = phi @ b.cov.u
    u[n:, n:] = b.cov.u
    d = np.concatenate([q_factors.d, b.cov.d])
    return u, d


def sc_time_update(b: Belief, phi: np.ndarray, q: Optional[np.ndarray] = None, *,
                   x_pred: Optional[np.ndarray] = None, epoch: Optional[float] = None,
                   q_factors: Optional[UDFactors] = None) -> AugmentedBelief:
    """Propagate and clone: prior of ``[x_{k+1}, x_k]`` in UD form.

    ``x_pred`` is the nonlinear propagation of the mean; the linear
    ``phi @ x`` is used when omitted.  ``q_factors`` may carry a cached UD
    factorization of ``q``.
    """
    n = b.x.size
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (n, n):
        raise ShapeMismatch(f"phi is {phi.shape}, state has {n} components")
    if q_factors is None:
        if q is None:
            raise ValueError("need q or q_factors")
        q = np.asarray(q, dtype=float)
        if q.shape != (n, n):
            raise ShapeMismatch(f"q is {q.shape}, state has {n} components")
        q_factors = ud_factorize(q, allow_degenerate=True)
    elif q_factors.dim != n:
        raise ShapeMismatch(f"q factors have dimension {q_factors.dim}, state has {n}")
    u, d = _stack_qphi(b, phi, q_factors)
    xp = phi @ b.x if x_pred is None else np.asarray(x_pred, dtype=float)
    x_aug = np.concatenate([xp, b.x])
    t_new = b.epoch if epoch is None else epoch
    return AugmentedBelief(t_new, b.epoch, x_aug, UDFactors._wrap(u, d), n)


def _check_order(batch: Sequence[ScalarMeasurement]) -> None:
    seen_current = False
    for m in batch:
        if m.kind is MeasurementKind.CURRENT_ONLY:
            seen_current = True
        elif seen_current:
            raise OrderingViolation(
                f"delayed-state measurement {m.ident!r} follows a current-only measurement")


def sc_measurement_update(a: AugmentedBelief, batch: Sequence[ScalarMeasurement],
                          allow_truncation: bool = False,
                          floor: float = PIVOT_FLOOR) -> tuple[AugmentedBelief, list[UpdateRecord]]:
    """Sequential scalar updates of the augmented belief.

    Delayed-state measurements must come first.  With ``allow_truncation``
    the trailing current-only measurements use the truncated recursion; the
    result is then flagged ``clone_stale`` and cannot feed the smoother.
    """
    if a.clone_stale and any(m.kind is MeasurementKind.DELAYED_STATE for m in batch):
        raise StaleFactors("delayed-state update requested on stale clone factors")
    _check_order(batch)
    n = a.split
    big_n = a.x_aug.size
    u = np.array(a.cov_aug.u)
    d = np.array(a.cov_aug.d)
    x = a.x_aug.copy()
    x0 = a.x_aug
    report: list[UpdateRecord] = []
    truncated = a.clone_stale
    h = np.zeros(big_n)
    for m in batch:
        hc = np.asarray(m.h_current, dtype=float)
        if hc.shape != (n,):
            raise ShapeMismatch(f"h_current of {m.ident!r} has shape {hc.shape}")
        h[:n] = hc
        if m.h_clone is None:
            h[n:] = 0.0
        else:
            hk = np.asarray(m.h_clone, dtype=float)
            if hk.shape != (n,):
                raise ShapeMismatch(f"h_clone of {m.ident!r} has shape {hk.shape}")
            h[n:] = hk
        if not (m.variance > 0.0) or not np.isfinite(m.variance):
            raise NonPositiveNoiseError(f"variance of {m.ident!r} is {m.variance!r}")
        if m.model is not None:
            pred = m.model(x[:n], x[n:])
        else:
            pred = m.predicted + h @ (x - x0)
        innov = m.value - pred
        stop = big_n
        if allow_truncation and m.kind is MeasurementKind.CURRENT_ONLY:
            stop = n
            truncated = True
        status, k, alpha = _carlson_kernel(u, d, h, float(m.variance), stop, floor)
        if status:
            raise NegativeInnovationVarianceError(
                f"innovation variance of {m.ident!r} collapsed to {alpha:.3e}")
        if stop < big_n:
            x[:n] += k[:n] * innov
        else:
            x += k * innov
        report.append(UpdateRecord(m.ident, UpdateStatus.ACCEPTED, innov, alpha))
    post = AugmentedBelief(a.epoch_current, a.epoch_clone, x, UDFactors._wrap(u, d), n,
                           clone_stale=truncated)
    return post, report


@njit(cache=True)
def _rows_kernel(u, d, x, rows, predicted, values, variances, floor):
    m = rows.shape[0]
    x0 = x.copy()
    innov = np.zeros(m)
    alpha = np.zeros(m)
    for i in range(m):
        h = rows[i]
        nu = values[i] - (predicted[i] + h @ (x - x0))
        status, k, a = _carlson_kernel(u, d, h, variances[i], d.shape[0], floor)
        if status:
            alpha[i] = a
            return i, innov, alpha
        x += k * nu
        innov[i] = nu
        alpha[i] = a
    return -1, innov, alpha


def sc_update_rows(a: AugmentedBelief, values, predicted, rows, variances,
                   floor: float = PIVOT_FLOOR) -> tuple[AugmentedBelief, np.ndarray, np.ndarray]:
    """Array form of :func:`sc_measurement_update` without truncation.

    ``rows`` has shape (m, 2n) holding ``[h_current, h_clone]``; rows with a
    nonzero clone block must come first.  Returns the posterior, the
    innovations and the innovation variances.
    """
    if a.clone_stale:
        raise StaleFactors("row update requested on stale clone factors")
    rows = np.ascontiguousarray(rows, dtype=float)
    m = rows.shape[0]
    big_n = a.x_aug.size
    if rows.ndim != 2 or rows.shape[1] != big_n:
        raise ShapeMismatch(f"rows have shape {rows.shape}, augmented state has {big_n} components")
    variances = np.asarray(variances, dtype=float)
    if np.any(~(variances > 0.0)) or not np.all(np.isfinite(variances)):
        raise NonPositiveNoiseError("measurement variances must be positive and finite")
    delayed = np.any(rows[:, a.split:] != 0.0, axis=1)
    if m and np.any(np.diff(delayed.astype(np.int8)) > 0):
        raise OrderingViolation("a delayed-state row follows a current-only row")
    u = np.array(a.cov_aug.u)
    d = np.array(a.cov_aug.d)
    x = a.x_aug.copy()
    bad, innov, alpha = _rows_kernel(u, d, x, rows, np.asarray(predicted, dtype=float),
                                     np.asarray(values, dtype=float), variances, floor)
    if bad >= 0:
        raise NegativeInnovationVarianceError(f"innovation variance of row {bad} collapsed to {alpha[bad]:.3e}")
    post = AugmentedBelief(a.epoch_current, a.epoch_clone, x, UDFactors._wrap(u, d), a.split)
    return post, innov, alpha


def extract_marginal(a: AugmentedBelief, method: str = "factorize") -> Belief:
    """Current-state marginal ``P11 = U11 D11 U11^T + U12 D22 U12^T`` in UD form.

    ``method="factorize"`` re-factors the dense sum; ``"agee-turner"``
    folds the columns of ``U12`` into ``(U11, D11)`` as rank-one updates.
    """
    n = a.split
    u = a.cov_aug.u
    d = a.cov_aug.d
    u11 = u[:n, :n]
    u12 = u[:n, n:]
    d11 = d[:n]
    d22 = d[n:]
    if method == "factorize":
        p = (u11 * d11) @ u11.T + (u12 * d22) @ u12.T
        f = ud_factorize(p, allow_degenerate=True)
    elif method == "agee-turner":
        f = UDFactors._wrap(np.array(u11), np.array(d11))
        for j in range(u12.shape[1]):
            if d22[j] > 0.0:
                f = agee_turner_rank_one(f, d22[j], u12[:, j])
    else:
        raise ValueError(f"unknown method {method!r}")
    return Belief(a.epoch_current, a.x_aug[:n].copy(), f)


def make_record(a: AugmentedBelief, posterior: Belief) -> SmootherRecord:
    if a.clone_stale:
        raise StaleFactors("truncated updates are incompatible with smoothing")
    return SmootherRecord(a.epoch_current, a.epoch_clone, a.x_aug.copy(), np.array(a.cov_aug.u),
                          np.array(a.cov_aug.d), posterior, a.split)


def smoother_gain(rec: SmootherRecord, floor: float = PIVOT_FLOOR) -> np.ndarray:
    """``J = P_{k+1,k}^T P_{k+1}^{-1}`` from triangular solves on the UD factors."""
    n = rec.split
    um = rec.posterior.cov.u
    dm = rec.posterior.cov.d
    if np.any(dm < floor):
        raise SingularAnchor(f"anchor pivot {dm.min():.3e} at epoch {rec.epoch}")
    u12 = rec.u_aug[:n, n:]
    u22 = rec.u_aug[n:, n:]
    d22 = rec.d_aug[n:]
    y = solve_triangular(um, u12, lower=False, unit_diagonal=True, check_finite=False)
    z = (y * d22[None, :]) / dm[:, None]
    jt = solve_triangular(um.T, z @ u22.T, lower=True, unit_diagonal=True, check_finite=False)
    return jt.T


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def smooth_arrays(records: Sequence[SmootherRecord],
                  floor: float = PIVOT_FLOOR) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward pass of :func:`delayed_state_smooth` returning dense arrays
    ``(epochs, means, covariances)``."""
    if not records:
        return np.empty(0), np.empty((0, 0)), np.empty((0, 0, 0))
    n_out = len(records) + 1
    last = records[-1].posterior
    n = last.x.size
    xs_all = np.empty((n_out, n))
    ps_all = np.empty((n_out, n, n))
    epochs = np.empty(n_out)
    xs = last.x.copy()
    ps = reconstruct(last.cov)
    xs_all[-1], ps_all[-1], epochs[-1] = xs, ps, last.epoch
    for i in range(len(records) - 1, -1, -1):
        rec = records[i]
        jk = smoother_gain(rec, floor)
        u22 = rec.u_aug[n:, n:]
        p_clone = _sym((u22 * rec.d_aug[n:]) @ u22.T)
        p_post = reconstruct(rec.posterior.cov)
        xs = rec.x_aug[n:] + jk @ (xs - rec.posterior.x)
        ps = _sym(p_clone + jk @ (ps - p_post) @ jk.T)
        xs_all[i], ps_all[i], epochs[i] = xs, ps, rec.clone_epoch
    return epochs, xs_all, ps_all


def delayed_state_smooth(records: Sequence[SmootherRecord],
                         floor: float = PIVOT_FLOOR) -> list[Belief]:
    """Fixed-interval smoothing over a filter run.

    ``records[i]`` is the augmented posterior at epoch ``t_{i+1}`` with the
    clone at ``t_i``.  Returns ``len(records) + 1`` smoothed beliefs, from
    ``t_0`` (the first clone epoch) to the last epoch.
    """
    epochs, xs, ps = smooth_arrays(records, floor)
    return [Belief(float(t), x, ud_factorize(p, allow_degenerate=True, tol=1e-6))
            for t, x, p in zip(epochs, xs, ps)]


@dataclass(frozen=True, eq=False)
class RtsStep:
    prior: Belief
    posterior: Belief
    phi: np.ndarray


def rts_smooth(history: Sequence[RtsStep]) -> list[Belief]:
    """Rauch-Tung-Striebel smoothing; ``history[k].prior`` is ``x_{k|k-1}`` and
    ``history[k].phi`` maps epoch ``k-1`` to ``k`` (unused for ``k = 0``)."""
    if not history:
        return []
    xs = history[-1].posterior.x.copy()
    ps = history[-1].posterior.covariance()
    out = [Belief(history[-1].posterior.epoch, xs, history[-1].posterior.cov)]
    for k in range(len(history) - 2, -1, -1):
        post = history[k].posterior
        nxt = history[k + 1]
        pf = post.covariance()
        pp = nxt.prior.covariance()
        c = np.linalg.solve(pp, nxt.phi @ pf).T
        xs = post.x + c @ (xs - nxt.prior.x)
        ps = _sym(pf + c @ (ps - pp) @ c.T)
        out.append(Belief(post.epoch, xs, ud_factorize(ps, allow_degenerate=True, tol=1e-6)))
    out.reverse()
    return out
