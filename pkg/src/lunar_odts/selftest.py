"""Drivers that run the factored filter on linear oracle scenarios.

Used by the ``selftest`` command and by the test-suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .gravity import GravityFieldError, default_gravity_path, load_gravity_field
from .oracles import LinearScenario, batch_map, dense_filter, joseph_update, random_linear_scenario, random_spd
from .scfilter import (
    Belief,
    RtsStep,
    ScalarMeasurement,
    delayed_state_smooth,
    extract_marginal,
    make_record,
    rts_smooth,
    sc_measurement_update,
    sc_time_update,
)
from .udlinalg import carlson_scalar_update, reconstruct, ud_factorize


def run_sc_filter(sc: LinearScenario, smoothing: bool = False, allow_truncation: bool = False):
    b = Belief(0.0, sc.x0.copy(), ud_factorize(sc.p0))
    beliefs = [b]
    records = []
    for k in range(1, len(sc.obs)):
        a = sc_time_update(b, sc.phis[k], sc.qs[k], epoch=float(k))
        batch = [ScalarMeasurement(z, float(np.dot(hc, a.x_current) + (0.0 if hk is None else np.dot(hk, a.x_clone))),
                                   hc, hk, r, ident=f"{k}:{i}")
                 for i, (hc, hk, r, z) in enumerate(sc.obs[k])]
        a, _ = sc_measurement_update(a, batch, allow_truncation=allow_truncation and not smoothing)
        b = extract_marginal(a)
        beliefs.append(b)
        if smoothing:
            records.append(make_record(a, b))
    return beliefs, records


def filter_equivalence(rng: np.random.Generator, n_systems: int = 50, max_n: int = 8,
                       steps: int = 100) -> float:
    """Worst relative mean/covariance gap between the factored and dense filters."""
    worst = 0.0
    for _ in range(n_systems):
        n = int(rng.integers(1, max_n + 1))
        sc = random_linear_scenario(rng, n, steps)
        beliefs, _ = run_sc_filter(sc)
        means, covs = dense_filter(sc)
        for b, m, p in zip(beliefs, means, covs):
            scale = max(1.0, np.max(np.abs(m)))
            worst = max(worst, np.max(np.abs(b.x - m)) / scale)
            worst = max(worst, np.max(np.abs(b.covariance() - p)) / np.max(np.abs(p)))
    return worst


def smoother_equivalence(rng: np.random.Generator, n_systems: int = 20, max_n: int = 6,
                         steps: int = 40) -> tuple[float, float]:
    """Worst gaps of the delayed-state smoother against batch MAP and against RTS.

    The RTS comparison uses systems without delayed-state rows, where both
    smoothers apply.
    """
    worst_map = 0.0
    worst_rts = 0.0
    for _ in range(n_systems):
        n = int(rng.integers(1, max_n + 1))
        sc = random_linear_scenario(rng, n, steps)
        _, records = run_sc_filter(sc, smoothing=True)
        smoothed = delayed_state_smooth(records)
        means, covs = batch_map(sc.x0, sc.p0, sc.phis, sc.qs, sc.obs)
        for s, m, p in zip(smoothed, means, covs):
            worst_map = max(worst_map, np.max(np.abs(s.x - m)) / max(1.0, np.max(np.abs(m))))
            worst_map = max(worst_map, np.max(np.abs(s.covariance() - p)) / np.max(np.abs(p)))

        sc2 = random_linear_scenario(rng, n, steps, n_current=2, n_delayed=0)
        beliefs, records = run_sc_filter(sc2, smoothing=True)
        smoothed = delayed_state_smooth(records)
        hist = [RtsStep(beliefs[0], beliefs[0], np.eye(n))]
        for k in range(1, len(beliefs)):
            prev = beliefs[k - 1]
            phi = sc2.phis[k]
            pp = phi @ prev.covariance() @ phi.T + sc2.qs[k]
            prior = Belief(float(k), phi @ prev.x, ud_factorize(pp))
            hist.append(RtsStep(prior, beliefs[k], phi))
        rts = rts_smooth(hist)
        for s, r in zip(smoothed, rts):
            worst_rts = max(worst_rts, np.max(np.abs(s.x - r.x)) / max(1.0, np.max(np.abs(r.x))))
            pr = r.covariance()
            worst_rts = max(worst_rts, np.max(np.abs(s.covariance() - pr)) / np.max(np.abs(pr)))
    return worst_map, worst_rts


def truncation_equivalence(rng: np.random.Generator, n_cases: int = 100, max_n: int = 8) -> float:
    """Worst gap in the current-state marginal between truncated and full updates."""
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(1, max_n + 1))
        sc = random_linear_scenario(rng, n, 6, n_current=3, n_delayed=1)
        full, _ = run_sc_filter(sc)
        trunc, _ = run_sc_filter(sc, allow_truncation=True)
        for a, b in zip(full, trunc):
            worst = max(worst, np.max(np.abs(a.x - b.x)) / max(1.0, np.max(np.abs(a.x))))
            pa = a.covariance()
            worst = max(worst, np.max(np.abs(pa - b.covariance())) / np.max(np.abs(pa)))
    return worst


def factor_roundtrip(rng: np.random.Generator, n_cases: int = 1000, max_n: int = 12,
                     cond: float = 1e8) -> float:
    """Worst relative reconstruction error of ``ud_factorize`` on random SPD matrices."""
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(1, max_n + 1))
        p = random_spd(rng, n, cond=cond)
        worst = max(worst, np.max(np.abs(reconstruct(ud_factorize(p)) - p)) / np.max(np.abs(p)))
    return worst


def carlson_vs_joseph(rng: np.random.Generator, n_cases: int = 1000, max_n: int = 12,
                      cond: float = 1e8) -> float:
    """Worst Carlson-vs-Joseph covariance gap, scaled by the prior's largest entry."""
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(1, max_n + 1))
        p = random_spd(rng, n, cond=cond)
        h = rng.standard_normal(n)
        r = float(np.exp(rng.uniform(-3.0, 3.0)))
        f, _ = carlson_scalar_update(ud_factorize(p), h, r)
        _, pj, _ = joseph_update(p, np.zeros(n), h, r, 0.0)
        worst = max(worst, np.max(np.abs(reconstruct(f) - pj)) / np.max(np.abs(p)))
    return worst


def gravity_table_check(path) -> float:
    """Load the gravity table and return |C20| (normalized; about 9e-5 for the Moon).

    A corrupted file raises GravityFieldError.
    """
    f = load_gravity_field(path)
    if f.degree < 2:
        raise GravityFieldError(f"{path}: degree {f.degree} table has no C20")
    return abs(float(f.cbar[2, 0]))


@dataclass
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool
    seconds: float
    error: str = ""


def run_checks(seed: int = 2024, gravity_path=None) -> list[CheckResult]:
    """The fixed self-test table; every check uses its own seeded generator."""
    gravity_path = gravity_path or default_gravity_path()
    checks = [
        ("ud factorize round-trip", lambda r: factor_roundtrip(r), 1e-10),
        ("carlson vs joseph", lambda r: carlson_vs_joseph(r), 1e-9),
        ("sc filter vs dense augmented kf", lambda r: filter_equivalence(r), 1e-8),
        ("delayed-state smoother vs batch map", lambda r: smoother_equivalence(r)[0], 1e-6),
        ("delayed-state smoother vs rts", lambda r: smoother_equivalence(r)[1], 1e-8),
        ("truncated vs full update", lambda r: truncation_equivalence(r), 1e-12),
        # decades between |C20| and the lunar 1e-4
        ("gravity table", lambda r: abs(math.log10(gravity_table_check(gravity_path) / 1e-4)), 2.0),
    ]
    out = []
    for i, (name, fn, limit) in enumerate(checks):
        t0 = time.perf_counter()
        try:
            value = float(fn(np.random.default_rng([seed, i])))
            out.append(CheckResult(name, value, limit, value <= limit, time.perf_counter() - t0))
        except (ArithmeticError, ValueError, OSError) as exc:
            out.append(CheckResult(name, float("nan"), limit, False, time.perf_counter() - t0, str(exc)))
    return out


def format_checks(results: list[CheckResult], timings: bool = False) -> str:
    """Pass/fail table; timings are left out by default so the output is reproducible."""
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = r.error if r.error else f"{r.value:.3e} <= {r.limit:.0e}"
        line = f"{status}  {r.name:<38} {detail}"
        if timings:
            line += f"  ({r.seconds:.1f} s)"
        lines.append(line)
    return "\n".join(lines) + "\n"
