"""Dense reference implementations used to check the factored filter.

Everything here works on full covariance matrices with textbook formulas
and shares no code with the UD machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def random_spd(rng: np.random.Generator, n: int, cond: float = 1e4) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    return (q * eig) @ q.T


def joseph_update(p: np.ndarray, x: np.ndarray, h: np.ndarray, r: float, innov: float):
    """Scalar Kalman update in Joseph form."""
    s = h @ p @ h + r
    k = p @ h / s
    ikh = np.eye(p.shape[0]) - np.outer(k, h)
    return x + k * innov, ikh @ p @ ikh.T + r * np.outer(k, k), k


@dataclass
class DenseAugmentedKF:
    """Augmented-state Kalman filter on dense covariances."""

    x: np.ndarray
    p: np.ndarray

    def predict(self, phi: np.ndarray, q: np.ndarray) -> None:
        n = self.x.size
        xa = np.concatenate([phi @ self.x, self.x])
        pa = np.zeros((2 * n, 2 * n))
        pa[:n, :n] = phi @ self.p @ phi.T + q
        pa[:n, n:] = phi @ self.p
        pa[n:, :n] = pa[:n, n:].T
        pa[n:, n:] = self.p
        self.xa, self.pa = xa, pa

    def update(self, h_aug: np.ndarray, r: float, z: float) -> None:
        self.xa, self.pa, _ = joseph_update(self.pa, self.xa, h_aug, r, z - h_aug @ self.xa)

    def marginalize(self) -> None:
        n = self.x.size
        self.x = self.xa[:n].copy()
        self.p = self.pa[:n, :n].copy()


def batch_map(x0: np.ndarray, p0: np.ndarray, phis, qs, obs):
    """Information-form MAP estimate of a linear-Gaussian trajectory.

    ``obs[k]`` lists ``(h_current, h_clone, r, z)`` tuples at epoch ``k``
    (``h_clone`` acts on epoch ``k-1`` and is ``None`` at ``k = 0``).
    Returns the stacked means and the marginal covariances.
    """
    n = x0.size
    steps = len(obs)
    dim = n * steps
    info = np.zeros((dim, dim))
    vec = np.zeros(dim)
    w0 = np.linalg.inv(p0)
    info[:n, :n] += w0
    vec[:n] += w0 @ x0
    for k in range(1, steps):
        wq = np.linalg.inv(qs[k])
        a = np.zeros((n, dim))
        a[:, (k - 1) * n:k * n] = -phis[k]
        a[:, k * n:(k + 1) * n] = np.eye(n)
        info += a.T @ wq @ a
    for k, rows in enumerate(obs):
        for hc, hk, r, z in rows:
            row = np.zeros(dim)
            row[k * n:(k + 1) * n] = hc
            if hk is not None:
                row[(k - 1) * n:k * n] = hk
            info += np.outer(row, row) / r
            vec += row * z / r
    cov = np.linalg.inv(info)
    mean = cov @ vec
    means = mean.reshape(steps, n)
    covs = [cov[k * n:(k + 1) * n, k * n:(k + 1) * n] for k in range(steps)]
    return means, covs


@dataclass
class LinearScenario:
    x0: np.ndarray
    p0: np.ndarray
    phis: list
    qs: list
    obs: list  # per epoch: list of (h_current, h_clone or None, r, z)


def random_linear_scenario(rng: np.random.Generator, n: int, steps: int,
                           n_current: int = 2, n_delayed: int = 1) -> LinearScenario:
    """Stable random linear-Gaussian system with current and delayed-state rows."""
    x0 = rng.standard_normal(n)
    p0 = random_spd(rng, n, cond=1e3)
    phis = [np.eye(n)]
    qs = [np.eye(n)]
    obs = [[]]
    truth = x0 + np.linalg.cholesky(p0) @ rng.standard_normal(n)
    prev = truth
    for k in range(1, steps):
        a = rng.standard_normal((n, n))
        phi = np.eye(n) + 0.1 * a / np.sqrt(n)
        q = random_spd(rng, n, cond=1e2) * 0.01
        truth = phi @ prev + np.linalg.cholesky(q) @ rng.standard_normal(n)
        rows = []
        for _ in range(n_delayed):
            hc = rng.standard_normal(n)
            hk = -rng.standard_normal(n)
            r = float(rng.uniform(0.05, 1.0))
            rows.append((hc, hk, r, hc @ truth + hk @ prev + np.sqrt(r) * rng.standard_normal()))
        for _ in range(n_current):
            hc = rng.standard_normal(n)
            r = float(rng.uniform(0.05, 1.0))
            rows.append((hc, None, r, hc @ truth + np.sqrt(r) * rng.standard_normal()))
        phis.append(phi)
        qs.append(q)
        obs.append(rows)
        prev = truth
    return LinearScenario(x0, p0, phis, qs, obs)


def dense_filter(sc: LinearScenario):
    """Filtered means/covariances of the dense augmented filter at every epoch."""
    kf = DenseAugmentedKF(sc.x0.copy(), sc.p0.copy())
    means = [kf.x.copy()]
    covs = [kf.p.copy()]
    n = sc.x0.size
    for k in range(1, len(sc.obs)):
        kf.predict(sc.phis[k], sc.qs[k])
        for hc, hk, r, z in sc.obs[k]:
            h = np.concatenate([hc, np.zeros(n) if hk is None else hk])
            kf.update(h, r, z)
        kf.marginalize()
        means.append(kf.x.copy())
        covs.append(kf.p.copy())
    return means, covs
