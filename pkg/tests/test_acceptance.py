"""Acceptance criteria 1-10 at their stated tolerances.

Each test records a line in ``conftest.ACCEPTANCE``; the terminal summary
prints one pass/fail line per criterion.  Criterion 7 runs the desk
Monte Carlo once (about three minutes on one core) and criteria 8 and 9
reuse it.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE, REFERENCE, random_orbit_states
from lunar_odts import cli
from lunar_odts.config import Mode, bundled_config, load_config
from lunar_odts.dynamics import propagate, state_derivative, state_jacobian
from lunar_odts.kepler import elements_to_state, propagate_kepler
from lunar_odts.pipeline import LAMBDA_L1, aggregate, build_scenario, run_monte_carlo
from lunar_odts.selftest import (
    carlson_vs_joseph,
    factor_roundtrip,
    filter_equivalence,
    smoother_equivalence,
    truncation_equivalence,
)
from lunar_odts.timeframes import Epoch, TclTcgModel, TimeFrames, TimeScale


def record(crit: int, label: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(str(crit), []).append((label, bool(ok), detail))
    print(f"criterion {crit} {label}: {'PASS' if ok else 'FAIL'} {detail}")
    return bool(ok)


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


# --- 1-4: factored filter algebra ---------------------------------------------

def test_criterion_1_factor_algebra():
    rt, t1 = timed(factor_roundtrip, np.random.default_rng(101))
    cj, t2 = timed(carlson_vs_joseph, np.random.default_rng(102))
    ok = record(1, "round-trip", rt <= 1e-10, f"{rt:.2e} <= 1e-10")
    ok &= record(1, "carlson/joseph", cj <= 1e-9, f"{cj:.2e} <= 1e-9")
    ok &= record(1, "runtime", t1 + t2 < 10, f"{t1 + t2:.1f} s < 10 s")
    assert ok


def test_criterion_2_filter_equivalence():
    gap, t = timed(filter_equivalence, np.random.default_rng(201))
    ok = record(2, "dense kf", gap <= 1e-8, f"{gap:.2e} <= 1e-8")
    ok &= record(2, "runtime", t < 30, f"{t:.1f} s < 30 s")
    assert ok


def test_criterion_3_smoother_equivalence():
    (gap_map, gap_rts), t = timed(smoother_equivalence, np.random.default_rng(301))
    ok = record(3, "batch map", gap_map <= 1e-6, f"{gap_map:.2e} <= 1e-6")
    ok &= record(3, "rts", gap_rts <= 1e-8, f"{gap_rts:.2e} <= 1e-8")
    ok &= record(3, "runtime", t < 30, f"{t:.1f} s < 30 s")
    assert ok


def test_criterion_4_truncated_update():
    gap = truncation_equivalence(np.random.default_rng(401))
    assert record(4, "marginals", gap <= 1e-12, f"{gap:.2e} <= 1e-12")


# --- 5-6: time scales and dynamics ------------------------------------------------

def test_criterion_5_tcl_tcg_rate(ephemeris):
    t0 = time.perf_counter()
    ref = TimeFrames().convert(Epoch.from_iso(REFERENCE), TimeScale.TCG)
    model = TclTcgModel(ephemeris, ref, 0.0, 31 * 86400.0)
    rate = model.secular_rate() * 86400 * 1e6
    t = time.perf_counter() - t0
    ok = record(5, "rate", abs(rate / -1.4769 - 1) <= 0.02, f"{rate:.4f} us/day vs -1.4769 +-2% over 31 d")
    ok &= record(5, "runtime", t < 5, f"{t:.1f} s < 5 s")
    assert ok


def _central_jacobian(x, t, model):
    steps = np.array([10.0] * 3 + [0.1] * 3 + [1.0, 1e-3, 1e-6, 1e-4])
    jac = np.zeros((10, 10))
    for j in range(10):
        e = np.zeros(10)
        e[j] = steps[j]
        jac[:, j] = (state_derivative(x + e, t, model) - state_derivative(x - e, t, model)) / (2 * steps[j])
    return jac


def test_criterion_6_dynamics(full_model, point_mass_model):
    rng = np.random.default_rng(601)
    worst = 0.0
    for x in random_orbit_states(rng, 100):
        t = rng.uniform(0, 100 * 3600)
        jac = state_jacobian(x, t, full_model)
        ref = _central_jacobian(x, t, full_model)
        # entries below 1e-9 of their row maximum are difference round-off
        floor = 1e-9 * np.abs(ref).max(axis=1, keepdims=True)
        sig = np.abs(ref) > floor
        worst = max(worst, float(np.max(np.abs(jac - ref)[sig] / np.abs(ref)[sig])))
        assert np.all(np.abs(jac[~sig]) <= floor.repeat(10, axis=1)[~sig])

    mu = point_mass_model.mu
    a = 11_315.93e3
    r0, v0 = elements_to_state(mu, a, 0.69198, 1.07, 2.04, 1.487, 0.0)
    period = 2 * math.pi * math.sqrt(a**3 / mu)
    x1 = propagate(np.concatenate([r0, v0, np.zeros(4)]), 0.0, period, point_mass_model, max_step=10.0)
    r1, _ = propagate_kepler(mu, r0, v0, period)
    miss = float(np.linalg.norm(x1[:3] - r1))
    ok = record(6, "jacobian", worst <= 1e-6, f"{worst:.2e} <= 1e-6 at 100 states")
    ok &= record(6, "kepler", miss <= 1e-3, f"{miss * 1e3:.3f} mm <= 1 mm over one period")
    assert ok


# --- 7-9: desk Monte Carlo ------------------------------------------------------------

@pytest.fixture(scope="module")
def desk():
    cfg = load_config(bundled_config("desk"))
    t0 = time.perf_counter()
    scn = build_scenario(cfg)
    out = {"scenario": scn}
    for mode in Mode:
        # only the combined mode needs the smoother
        iters = cfg.filter.smoother_iterations if mode is Mode.IFPR_TDCP else 0
        res = run_monte_carlo(scn, replace(cfg.filter, mode=mode), cfg.runs, cfg.seed, None, iters)
        out[mode] = (res, {s.stage: s for s in aggregate(res, scn.eval_start)})
    out["seconds"] = time.perf_counter() - t0
    return out


def test_criterion_7a_mode_ordering(desk):
    l1, ifpr, td = (desk[m][1]["filter"].rms_pos for m in Mode)
    assert record(7, "(a) ordering", l1 > ifpr > td, f"RMS pos {l1:.2f} > {ifpr:.2f} > {td:.2f} m")


def test_criterion_7b_tdcp_gain(desk):
    ifpr = desk[Mode.IFPR][1]["filter"].rms_pos
    td = desk[Mode.IFPR_TDCP][1]["filter"].rms_pos
    gain = 1 - td / ifpr
    assert record(7, "(b) tdcp gain", gain >= 0.10, f"{100 * gain:.1f}% >= 10%")


def test_criterion_7c_smoother_velocity(desk):
    scn = desk["scenario"]
    res, stats = desk[Mode.IFPR_TDCP]
    red = 1 - stats["smoother"].p997_vel / stats["filter"].p997_vel
    # context only: the same statistic over the final orbit revolution (30 h)
    start = int(np.searchsorted(scn.times, scn.times[-1] - 30 * 3600.0))
    alt = {s.stage: s.p997_vel for s in aggregate(res, start)}
    alt_red = 1 - alt["smoother"] / alt["filter"]
    assert record(7, "(c) smoother vel", red >= 0.25,
                  f"99.7% vel reduction {100 * red:.1f}% >= 25% over the last 20% "
                  f"(final revolution: {100 * alt_red:.1f}%)")


def test_criterion_7d_smoothed_position(desk):
    rms = desk[Mode.IFPR_TDCP][1]["smoother"].rms_pos
    ok = record(7, "(d) smoothed pos", rms < 10.0, f"RMS {rms:.2f} m < 10 m")
    record(7, "runtime", desk["seconds"] < 600, f"{desk['seconds']:.0f} s < 600 s")
    assert ok


def test_criterion_8_consistency(desk):
    res, _ = desk[Mode.IFPR_TDCP]
    err = np.concatenate([r.filter.err for r in res])
    sig = np.concatenate([r.filter.sigma for r in res])
    frac = np.mean(np.abs(err) <= 3 * sig, axis=0)
    assert record(8, "3-sigma", frac.min() >= 0.90,
                  f"worst component {frac.min():.3f} >= 0.90 ({', '.join(f'{f:.2f}' for f in frac)})")


def test_criterion_9_slip_screening(desk):
    res, _ = desk[Mode.IFPR_TDCP]
    slip = np.concatenate([r.screen["slip"] for r in res])
    bound = np.concatenate([r.screen["bound"] for r in res])
    accepted = np.concatenate([r.screen["accepted"] for r in res])
    # every injected slip is a whole number of cycles, so at least one wavelength
    sel = slip & (bound < LAMBDA_L1 / 4)
    n = int(sel.sum())
    frac = float(np.mean(~accepted[sel])) if n else float("nan")
    ok = n > 0 and frac >= 0.95
    assert record(9, "slips", ok, f"{n} slips under a tight bound, rejected {100 * frac:.1f}% >= 95%")


# --- 10: determinism ---------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    outs = []
    for name, workers in (("a", "1"), ("b", "2")):
        d = tmp_path / name
        assert cli.main(["simulate", "--config", "minimal", "--out", str(d / "sim")]) == 0
        assert cli.main(["estimate", "--config", "minimal", "--mode", "ifpr+tdcp", "--mode", "l1pr",
                         "--runs", "2", "--smoother-iters", "2", "--workers", workers,
                         "--out", str(d / "est")]) == 0
        outs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*.csv"))})
    same = outs[0].keys() == outs[1].keys() and all(outs[0][k] == outs[1][k] for k in outs[0])
    assert record(10, "csv bytes", same and len(outs[0]) == 8,
                  f"{len(outs[0])} CSV files identical across repeats (1 vs 2 workers)")
