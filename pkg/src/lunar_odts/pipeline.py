"""Scenario assembly, filter/smoother runs, SISE metrics and Monte-Carlo reports."""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import constants as k
from .config import FilterConfig, Mode, ScenarioConfig
from .constellation import Constellation, Signal, load_almanac, nominal_constellation
from .dynamics import ForceModel, process_noise, propagate_with_stm, trajectory
from .gravity import default_gravity_path, load_gravity_field
from .kepler import elements_to_state, true_to_mean
from .observables import (
    ALPHA_L1,
    ALPHA_L5,
    Realization,
    TruthGeometry,
    compute_truth_geometry,
    realize,
    run_generators,
)
from .scfilter import (
    AugmentedBelief,
    Belief,
    ScalarMeasurement,
    extract_marginal,
    make_record,
    sc_time_update,
    smooth_arrays,
)
from .timeframes import Body, Epoch, TabulatedEphemeris, TimeFrames, default_ephemeris_path, tt_to_tdb_j2000
from .udlinalg import PIVOT_FLOOR, UDFactors, _carlson_kernel, ud_factorize

STATE_LABELS = ["x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps", "bias_m", "drift_mps", "accel_mps2",
                "srp_m2pkg"]
LAMBDA_L1 = Signal.L1.wavelength


class PipelineError(ArithmeticError):
    pass


# --- scenario -------------------------------------------------------------------

def orbit_plane_frame(ephemeris, tdb: float) -> np.ndarray:
    """Columns: x towards the Earth, z along the Moon's orbital angular momentum."""
    pe, ve = ephemeris.relative(Body.EARTH, Body.MOON, tdb)
    x = pe / np.linalg.norm(pe)
    z = np.cross(-pe, -ve)
    z /= np.linalg.norm(z)
    return np.column_stack([x, np.cross(z, x), z])


def initial_state(cfg: ScenarioConfig, ephemeris, tdb: float) -> np.ndarray:
    o = cfg.orbit
    m0 = true_to_mean(math.radians(o.true_anomaly_deg), o.e)
    r, v = elements_to_state(k.GM_MOON, o.a_km * 1e3, o.e, math.radians(o.inc_deg), math.radians(o.raan_deg),
                             math.radians(o.argp_deg), m0)
    rot = orbit_plane_frame(ephemeris, tdb)
    return np.concatenate([rot @ r, rot @ v, np.zeros(3), [o.srp_gamma]])


@dataclass(eq=False)
class Scenario:
    config: ScenarioConfig
    times: np.ndarray
    tdb_reference: float
    filter_model: ForceModel
    constellation: Constellation
    geometry: TruthGeometry
    x0: np.ndarray

    @property
    def dt(self) -> float:
        return self.config.step_s

    @property
    def n_epochs(self) -> int:
        return self.times.size

    @property
    def eval_start(self) -> int:
        return int(math.floor(self.n_epochs * (1.0 - self.config.eval_fraction)))


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Truth trajectory and per-source geometry for a configuration."""
    eph_path = cfg.resolve("ephemeris_file") or default_ephemeris_path()
    ephemeris = TabulatedEphemeris.from_csv(eph_path)
    start = Epoch.from_iso(cfg.start)
    tdb0 = tt_to_tdb_j2000(TimeFrames().convert(start, "TT"))
    n = cfg.n_steps
    span = (0.0, n * cfg.step_s)
    grav_path = cfg.resolve("gravity_file") or default_gravity_path()
    truth_model = ForceModel(load_gravity_field(grav_path, cfg.truth_degree), ephemeris, tdb0, span)
    filter_model = ForceModel(load_gravity_field(grav_path, cfg.filter.gravity_degree), ephemeris, tdb0, span)
    x0 = initial_state(cfg, ephemeris, tdb0)
    rx = trajectory(x0, 0.0, cfg.step_s, n, truth_model)
    sources = load_almanac(cfg.resolve("almanac_file")) if cfg.almanac_file else nominal_constellation()
    constellation = Constellation.build(sources)
    if cfg.isb_galileo:
        constellation = constellation.with_isb("GAL", cfg.isb_galileo)
    margin = 3600.0
    earth = ephemeris.table(Body.EARTH, Body.MOON, tdb0 - margin, tdb0 + span[1] + margin, 600.0)
    sun = ephemeris.table(Body.SUN, Body.MOON, tdb0 - margin, tdb0 + span[1] + margin, 600.0)
    times = cfg.step_s * np.arange(n + 1)
    geo = compute_truth_geometry(times, rx, constellation, earth, sun, tdb0, cfg.receiver, cfg.ionosphere)
    return Scenario(cfg, times, tdb0, filter_model, constellation, geo, x0)


# --- measurement models ------------------------------------------------------------

def predicted_range(r_hat: np.ndarray, geo: TruthGeometry, i: int, idx: np.ndarray):
    """Ranges and unit line-of-sight vectors from an estimated position.

    Broadcast orbits equal the truth orbits, so the light-time solution is
    expanded to first order about the truth transmit epoch.
    """
    p = geo.tx_pos[i, idx]
    v = geo.tx_vel[i, idx]
    rho_t = geo.range[i, idx]
    d = p - r_hat
    rho = np.linalg.norm(d, axis=-1)
    for _ in range(2):
        d = p - v * ((rho - rho_t) / k.C_LIGHT)[:, None] - r_hat
        rho = np.linalg.norm(d, axis=-1)
    return rho, d / rho[:, None]


def pr_rows(u: np.ndarray) -> np.ndarray:
    h = np.zeros((u.shape[0], 10))
    h[:, :3] = -u
    h[:, 6] = 1.0
    return h


def tdcp_rows(u_now: np.ndarray, u_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Current and clone Jacobian rows; the clone block enters with opposite sign."""
    return pr_rows(u_now), -pr_rows(u_prev)


def pr_variance(mode: Mode, sigma_l1, sigma_l5, sigma_ure: float):
    if mode.dual_frequency:
        return ALPHA_L1**2 * sigma_l1**2 + ALPHA_L5**2 * sigma_l5**2 + sigma_ure**2
    return sigma_l1**2 + sigma_ure**2


@dataclass
class ScreenLog:
    """Outcome of every candidate TDCP measurement in a run."""

    epoch: list = field(default_factory=list)
    source: list = field(default_factory=list)
    slip: list = field(default_factory=list)
    bound: list = field(default_factory=list)      # 3 sigma of the predicted innovation
    innovation: list = field(default_factory=list)
    accepted: list = field(default_factory=list)

    def extend(self, i, src, slip, bound, innov, ok) -> None:
        self.epoch.extend([i] * len(src))
        self.source.extend(src.tolist())
        self.slip.extend(slip.tolist())
        self.bound.extend(bound.tolist())
        self.innovation.extend(innov.tolist())
        self.accepted.extend(ok.tolist())

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: np.asarray(getattr(self, name)) for name in
                ("epoch", "source", "slip", "bound", "innovation", "accepted")}


@dataclass(eq=False)
class Batch:
    """Screened measurements of one epoch as arrays; TDCP rows come first."""

    values: np.ndarray
    predicted: np.ndarray
    rows: np.ndarray          # (m, 2n): [h_current, h_clone]
    variances: np.ndarray
    idents: list

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def n_tdcp(self) -> int:
        return sum(1 for i in self.idents if i.startswith("tdcp"))

    def measurements(self) -> list[ScalarMeasurement]:
        n = self.rows.shape[1] // 2
        out = []
        for v, p, h, r, ident in zip(self.values, self.predicted, self.rows, self.variances, self.idents):
            clone = h[n:] if np.any(h[n:]) else None
            out.append(ScalarMeasurement(float(v), float(p), h[:n].copy(), clone, float(r), ident=ident))
        return out


@dataclass(eq=False)
class Candidates:
    """State-independent part of preprocessing for a whole run, shape (N, M).

    Masks select the sources passing tracking and altitude masks; values
    have the Shapiro delay removed; variances exclude the state term.
    """

    pr_mask: np.ndarray
    pr_value: np.ndarray
    pr_var: np.ndarray
    td_mask: np.ndarray
    td_value: np.ndarray
    td_var: np.ndarray


def measurement_candidates(scn: Scenario, real: Realization, cfg: FilterConfig) -> Candidates:
    geo = scn.geometry
    n_ep, m = geo.range.shape
    l1 = Signal.L1
    pr_mask = real.tracked[l1] & (geo.h_tan >= cfg.pr_mask)
    s1 = np.nan_to_num(real.sigma_code[l1])
    if cfg.mode.dual_frequency:
        pr_mask &= real.tracked[Signal.L5]
        value = ALPHA_L1 * real.pseudorange[l1] - ALPHA_L5 * real.pseudorange[Signal.L5]
        s5 = np.nan_to_num(real.sigma_code[Signal.L5])
    else:
        value = real.pseudorange[l1]
        s5 = np.zeros_like(s1)
    pr_value = np.where(pr_mask, value - geo.shapiro, 0.0)
    pr_var = pr_variance(cfg.mode, s1, s5, cfg.sigma_ure)

    td_mask = np.zeros((n_ep, m), dtype=bool)
    td_value = np.zeros((n_ep, m))
    td_var = np.ones((n_ep, m))
    if cfg.mode.tdcp and n_ep > 1:
        ep = np.arange(1, n_ep)
        due = (ep % cfg.tdcp_every) == (1 % cfg.tdcp_every)
        tr = real.tracked[l1]
        high = geo.h_tan >= cfg.tdcp_mask
        td_mask[1:] = due[:, None] & tr[1:] & tr[:-1] & high[1:] & high[:-1]
        ph = np.nan_to_num(real.phase[l1]) - geo.shapiro
        td_value[1:] = np.where(td_mask[1:], ph[1:] - ph[:-1], 0.0)
        sp = np.nan_to_num(real.sigma_phase[l1])
        td_var[1:] = sp[1:] ** 2 + sp[:-1] ** 2 + cfg.sigma_dure**2
    return Candidates(pr_mask, pr_value, pr_var, td_mask, td_value, td_var)


def _innovation_variance(rows: np.ndarray, prior: AugmentedBelief, var: np.ndarray) -> np.ndarray:
    w = rows @ prior.cov_aug.u
    return (w * w) @ prior.cov_aug.d + var


def preprocess_epoch(scn: Scenario, real: Realization, cfg: FilterConfig, i: int,
                     prior: AugmentedBelief, log: Optional[ScreenLog] = None,
                     cand: Optional[Candidates] = None) -> Batch:
    """Masked, combined and screened measurements at epoch ``i``.

    Screening uses the prior augmented covariance: a measurement is dropped
    when its innovation exceeds ``screen_sigma`` standard deviations, and a
    TDCP also when that bound or the innovation exceeds the L1 wavelength.
    """
    geo = scn.geometry
    cand = cand or measurement_candidates(scn, real, cfg)
    xc, xl = prior.x_current, prior.x_clone
    n = prior.split
    gate = cfg.screen_sigma
    parts = []

    sel = np.flatnonzero(cand.td_mask[i])
    if sel.size:
        z = cand.td_value[i, sel]
        var = cand.td_var[i, sel]
        rho_k, u_k = predicted_range(xc[:3], geo, i, sel)
        rho_l, u_l = predicted_range(xl[:3], geo, i - 1, sel)
        pred = (rho_k + xc[6]) - (rho_l + xl[6])
        rows = np.hstack(tdcp_rows(u_k, u_l))
        bound = gate * np.sqrt(_innovation_variance(rows, prior, var))
        innov = z - pred
        ok = (np.abs(innov) <= bound) & (bound <= LAMBDA_L1) & (np.abs(innov) <= LAMBDA_L1)
        if log is not None:
            log.extend(i, sel, real.slip[Signal.L1][i, sel], bound, innov, ok)
        parts.append((z[ok], pred[ok], rows[ok], var[ok], [f"tdcp:{j}" for j in sel[ok]]))

    sel = np.flatnonzero(cand.pr_mask[i])
    if sel.size:
        z = cand.pr_value[i, sel]
        var = cand.pr_var[i, sel]
        rho, u = predicted_range(xc[:3], geo, i, sel)
        pred = rho + xc[6]
        rows = np.zeros((sel.size, 2 * n))
        rows[:, :n] = pr_rows(u)
        ok = np.abs(z - pred) <= gate * np.sqrt(_innovation_variance(rows, prior, var))
        parts.append((z[ok], pred[ok], rows[ok], var[ok], [f"pr:{j}" for j in sel[ok]]))

    if not parts:
        return Batch(np.empty(0), np.empty(0), np.empty((0, 2 * n)), np.empty(0), [])
    return Batch(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                 np.vstack([p[2] for p in parts]), np.concatenate([p[3] for p in parts]),
                 [ident for p in parts for ident in p[4]])


@njit(cache=True)
def _los(r_hat, p, v, rho_t, c):
    d = p - r_hat
    rho = np.sqrt(d @ d)
    for _ in range(2):
        d = p - v * ((rho - rho_t) / c) - r_hat
        rho = np.sqrt(d @ d)
    return rho, d / rho


@njit(cache=True)
def _epoch_kernel(u, d, x, n, td_mask, td_value, td_var, pr_mask, pr_value, pr_var,
                  p_k, v_k, r_k, p_l, v_l, r_l, gate, lam, c, floor):
    # Compiled equivalent of preprocess_epoch followed by sc_update_rows.
    m_src = pr_mask.shape[0]
    cap = 2 * m_src
    rows = np.zeros((cap, 2 * n))
    pred = np.zeros(cap)
    z = np.zeros(cap)
    var = np.zeros(cap)
    src = np.zeros(cap, dtype=np.int64)
    is_td = np.zeros(cap, dtype=np.bool_)
    m = 0
    for j in range(m_src):
        if td_mask[j]:
            rk, uk = _los(x[0:3], p_k[j], v_k[j], r_k[j], c)
            rl, ul = _los(x[n:n + 3], p_l[j], v_l[j], r_l[j], c)
            rows[m, 0:3] = -uk
            rows[m, 6] = 1.0
            rows[m, n:n + 3] = ul
            rows[m, n + 6] = -1.0
            pred[m] = (rk + x[6]) - (rl + x[n + 6])
            z[m] = td_value[j]
            var[m] = td_var[j]
            src[m] = j
            is_td[m] = True
            m += 1
    for j in range(m_src):
        if pr_mask[j]:
            rk, uk = _los(x[0:3], p_k[j], v_k[j], r_k[j], c)
            rows[m, 0:3] = -uk
            rows[m, 6] = 1.0
            pred[m] = rk + x[6]
            z[m] = pr_value[j]
            var[m] = pr_var[j]
            src[m] = j
            m += 1
    bound = np.zeros(m)
    innov = np.zeros(m)
    ok = np.zeros(m, dtype=np.bool_)
    for r in range(m):
        w = rows[r] @ u
        s = var[r]
        for q in range(w.shape[0]):
            s += w[q] * w[q] * d[q]
        bound[r] = gate * np.sqrt(s)
        innov[r] = z[r] - pred[r]
        good = abs(innov[r]) <= bound[r]
        if is_td[r]:
            good = good and bound[r] <= lam and abs(innov[r]) <= lam
        ok[r] = good
    x0 = x.copy()
    for r in range(m):
        if not ok[r]:
            continue
        h = rows[r]
        nu = z[r] - (pred[r] + h @ (x - x0))
        status, gain, alpha = _carlson_kernel(u, d, h, var[r], d.shape[0], floor)
        if status:
            return 1, src[:m], is_td[:m], bound, innov, ok
        x += gain * nu
    return 0, src[:m], is_td[:m], bound, innov, ok


# --- filter ------------------------------------------------------------------------

def initial_sigmas(cfg: FilterConfig, srp_gamma: float) -> np.ndarray:
    return np.array([cfg.sigma_pos] * 3 + [cfg.sigma_vel] * 3
                    + [cfg.sigma_bias, cfg.sigma_drift, cfg.sigma_accel, cfg.sigma_srp_rel * srp_gamma])


@dataclass(eq=False)
class FilterPass:
    x: np.ndarray               # (N, 10) posterior means
    sigma: np.ndarray           # (N, 10)
    n_pr: np.ndarray            # accepted pseudoranges per epoch
    n_tdcp: np.ndarray
    records: list
    screen: Optional[ScreenLog]


def filter_pass(scn: Scenario, real: Realization, cfg: FilterConfig, b0: Belief,
                keep_records: bool = False, log: bool = False) -> FilterPass:
    n_ep = scn.n_epochs
    dt = scn.dt
    qf = ud_factorize(process_noise(cfg.q_a, scn.config.clock, dt), allow_degenerate=True)
    xs = np.empty((n_ep, 10))
    sig = np.empty((n_ep, 10))
    n_pr = np.zeros(n_ep, dtype=np.int64)
    n_td = np.zeros(n_ep, dtype=np.int64)
    records = []
    screen = ScreenLog() if log else None
    geo = scn.geometry
    cand = measurement_candidates(scn, real, cfg)
    slip_l1 = real.slip[Signal.L1]
    b = b0
    xs[0], sig[0] = b.x, b.sigma
    for i in range(1, n_ep):
        t0, t1 = scn.times[i - 1], scn.times[i]
        x_pred, phi = propagate_with_stm(b.x, t0, t1, scn.filter_model, max_step=dt)
        a = sc_time_update(b, phi, x_pred=x_pred, epoch=float(t1), q_factors=qf)
        u = np.array(a.cov_aug.u)
        d = np.array(a.cov_aug.d)
        x = a.x_aug.copy()
        status, src, is_td, bound, innov, ok = _epoch_kernel(
            u, d, x, 10, cand.td_mask[i], cand.td_value[i], cand.td_var[i], cand.pr_mask[i],
            cand.pr_value[i], cand.pr_var[i], geo.tx_pos[i], geo.tx_vel[i], geo.range[i],
            geo.tx_pos[i - 1], geo.tx_vel[i - 1], geo.range[i - 1], cfg.screen_sigma, LAMBDA_L1,
            k.C_LIGHT, PIVOT_FLOOR)
        if status:
            raise PipelineError(f"innovation variance collapsed at epoch {i}")
        a = AugmentedBelief(a.epoch_current, a.epoch_clone, x, UDFactors._wrap(u, d), a.split)
        if screen is not None and is_td.any():
            screen.extend(i, src[is_td], slip_l1[i, src[is_td]], bound[is_td], innov[is_td], ok[is_td])
        b = extract_marginal(a)
        if not np.all(np.isfinite(b.x)):
            raise PipelineError(f"non-finite state at epoch {i}")
        if keep_records:
            records.append(make_record(a, b))
        xs[i] = b.x
        sig[i] = np.sqrt(np.maximum(np.einsum("ij,j,ij->i", b.cov.u, b.cov.d, b.cov.u), 0.0))
        n_td[i] = np.count_nonzero(ok & is_td)
        n_pr[i] = np.count_nonzero(ok & ~is_td)
    return FilterPass(xs, sig, n_pr, n_td, records, screen)


# --- metrics --------------------------------------------------------------------------

def sise(err: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Position (m) and velocity (m/s) SISE from (..., 10) state errors."""
    pos = np.sqrt(np.sum(err[..., :3] ** 2, axis=-1) + err[..., 6] ** 2)
    vel = np.sqrt(np.sum(err[..., 3:6] ** 2, axis=-1) + err[..., 7] ** 2)
    return pos, vel


def nearest_rank(values, pct: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("no samples")
    rank = max(1, int(math.ceil(pct / 100.0 * v.size - 1e-9)))
    return float(v[rank - 1])


def rms(values) -> float:
    v = np.asarray(values, dtype=float).ravel()
    return float(np.sqrt(np.mean(v * v)))


@dataclass(eq=False)
class Estimate:
    x: np.ndarray
    sigma: np.ndarray
    err: np.ndarray

    @property
    def sise(self) -> tuple[np.ndarray, np.ndarray]:
        return sise(self.err)

    def within_3sigma(self, start: int = 0) -> np.ndarray:
        """Per-component fraction of epochs with |error| <= 3 sigma."""
        e = np.abs(self.err[start:])
        return np.mean(e <= 3.0 * self.sigma[start:], axis=0)


@dataclass(eq=False)
class RunResult:
    run: int
    mode: Mode
    times: np.ndarray
    filter: Estimate
    smoother: Optional[Estimate]
    n_pr: np.ndarray
    n_tdcp: np.ndarray
    screen: dict
    smoother_changes: list = field(default_factory=list)


def _belief_from(x: np.ndarray, p: np.ndarray, epoch: float) -> Belief:
    return Belief(epoch, x.copy(), ud_factorize(0.5 * (p + p.T), allow_degenerate=True, tol=1e-6))


def run_single(scn: Scenario, cfg: FilterConfig, seed: int, run: int,
               smoother_iterations: Optional[int] = None) -> RunResult:
    """One Monte-Carlo realization: filter, then iterated filter/smoother passes."""
    iters = cfg.smoother_iterations if smoother_iterations is None else smoother_iterations
    gens = run_generators(seed, run)
    sc = scn.config
    real = realize(scn.geometry, scn.constellation, sc.receiver, sc.clock, seed, run, streams=gens)
    truth = real.truth_state(scn.geometry, slice(None))
    sig0 = initial_sigmas(cfg, sc.orbit.srp_gamma)
    x0 = truth[0] + sig0 * gens["initial"].standard_normal(10)
    b0 = Belief(0.0, x0, ud_factorize(np.diag(sig0**2)))
    fp = filter_pass(scn, real, cfg, b0, keep_records=iters > 0, log=True)
    filt = Estimate(fp.x, fp.sigma, fp.x - truth)
    smooth = None
    changes = []
    prev_rms = None
    records = fp.records
    for it in range(iters):
        _, xs, ps = smooth_arrays(records)
        sig = np.sqrt(np.maximum(np.diagonal(ps, axis1=1, axis2=2), 0.0))
        smooth = Estimate(xs, sig, xs - truth)
        cur = rms(smooth.sise[0][scn.eval_start:])
        if prev_rms is not None:
            changes.append(abs(cur - prev_rms))
        prev_rms = cur
        if it < iters - 1:
            records = filter_pass(scn, real, cfg, _belief_from(xs[0], ps[0], 0.0), keep_records=True).records
    return RunResult(run, cfg.mode, scn.times, filt, smooth, fp.n_pr, fp.n_tdcp, fp.screen.arrays(), changes)


# --- Monte Carlo --------------------------------------------------------------------------

_WORKER_SCENARIO: Optional[Scenario] = None


def _run_with_context(scn: Scenario, cfg: FilterConfig, seed: int, run: int, iters: Optional[int]) -> RunResult:
    try:
        return run_single(scn, cfg, seed, run, iters)
    except ArithmeticError as exc:
        raise PipelineError(f"run {run} ({cfg.mode.value}): {exc}") from exc


def _worker(args):
    cfg, seed, run, iters = args
    return _run_with_context(_WORKER_SCENARIO, cfg, seed, run, iters)


def run_monte_carlo(scn: Scenario, cfg: FilterConfig, n_runs: int, seed: int,
                    workers: Optional[int] = None, smoother_iterations: Optional[int] = None) -> list[RunResult]:
    """Independent runs ``0..n_runs-1``; results are ordered by run index."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    jobs = [(cfg, seed, r, smoother_iterations) for r in range(n_runs)]
    workers = min(n_runs, workers or os.cpu_count() or 1)
    if workers <= 1 or "fork" not in mp.get_all_start_methods():
        return [_run_with_context(scn, cfg, seed, r, smoother_iterations) for r in range(n_runs)]
    global _WORKER_SCENARIO
    _WORKER_SCENARIO = scn
    try:
        with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as pool:
            return list(pool.map(_worker, jobs))
    finally:
        _WORKER_SCENARIO = None


@dataclass(frozen=True)
class StageStats:
    mode: str
    stage: str
    runs: int
    samples: int
    window_start_s: float
    rms_pos: float
    p95_pos: float
    p997_pos: float
    rms_vel: float
    p95_vel: float
    p997_vel: float


def stage_stats(results: Sequence[RunResult], stage: str, start: int) -> Optional[StageStats]:
    ests = [getattr(r, stage) for r in results]
    if any(e is None for e in ests):
        return None
    pos = np.concatenate([e.sise[0][start:] for e in ests])
    vel = np.concatenate([e.sise[1][start:] for e in ests])
    return StageStats(results[0].mode.value, stage, len(results), pos.size, float(results[0].times[start]), rms(pos), nearest_rank(pos, 95),
                      nearest_rank(pos, 99.7), rms(vel), nearest_rank(vel, 95), nearest_rank(vel, 99.7))


def aggregate(results: Sequence[RunResult], start: int) -> list[StageStats]:
    return [s for s in (stage_stats(results, st, start) for st in ("filter", "smoother")) if s is not None]


# --- output ----------------------------------------------------------------------------

def _f(x: float) -> str:
    # shortest round-trip repr: exact on reload, stable across runs
    return repr(float(x))


def run_columns(smoothed: bool) -> list[str]:
    cols = ["epoch_s"]
    stages = ("filter", "smoother") if smoothed else ("filter",)
    for st in stages:
        cols += [f"{st}_err_{s}" for s in STATE_LABELS]
        cols += [f"{st}_sig3_{s}" for s in STATE_LABELS]
        cols += [f"{st}_sise_pos_m", f"{st}_sise_vel_mps"]
    cols += ["n_pr", "n_tdcp"]
    return cols


def write_run_csv(path: str | Path, res: RunResult) -> None:
    stages = [res.filter] + ([res.smoother] if res.smoother is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(run_columns(res.smoother is not None))
        sis = [e.sise for e in stages]
        for i, t in enumerate(res.times):
            row = [_f(t)]
            for e, (sp, sv) in zip(stages, sis):
                row += [_f(v) for v in e.err[i]] + [_f(3 * v) for v in e.sigma[i]] + [_f(sp[i]), _f(sv[i])]
            row += [int(res.n_pr[i]), int(res.n_tdcp[i])]
            w.writerow(row)


AGG_COLUMNS = ["mode", "stage", "runs", "samples", "window_start_s", "rms_pos_m", "p95_pos_m", "p997_pos_m", "rms_vel_mps",
               "p95_vel_mps", "p997_vel_mps"]


def write_aggregate_csv(path: str | Path, stats: Sequence[StageStats], append: bool = False) -> None:
    exists = Path(path).exists() and append
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not exists:
            w.writerow(AGG_COLUMNS)
        for s in stats:
            w.writerow([s.mode, s.stage, s.runs, s.samples, _f(s.window_start_s)] + [_f(v) for v in (
                s.rms_pos, s.p95_pos, s.p997_pos, s.rms_vel, s.p95_vel, s.p997_vel)])


def summary_table(stats: Sequence[StageStats]) -> str:
    head = (f"{'mode':<10} {'stage':<9} {'pos RMS':>10} {'pos 95%':>10} {'pos 99.7%':>10} "
            f"{'vel RMS':>10} {'vel 95%':>10} {'vel 99.7%':>10}")
    lines = ["SISE position [m] / velocity [mm/s]", head, "-" * len(head)]
    for s in stats:
        lines.append(f"{s.mode:<10} {s.stage:<9} {s.rms_pos:10.3f} {s.p95_pos:10.3f} {s.p997_pos:10.3f} "
                     f"{1e3 * s.rms_vel:10.3f} {1e3 * s.p95_vel:10.3f} {1e3 * s.p997_vel:10.3f}")
    return "\n".join(lines) + "\n"


def write_truth_csv(path: str | Path, scn: Scenario) -> None:
    cols = ["epoch_s", "x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps", "rel_clock_m", "srp_m2pkg"]
    rx = scn.geometry.rx
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, t in enumerate(scn.times):
            w.writerow([_f(t)] + [_f(v) for v in rx[i, :6]] + [_f(rx[i, 6]), _f(rx[i, 9])])
