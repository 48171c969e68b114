import math

import numpy as np
import pytest

from lunar_odts import constants as k
from lunar_odts.constellation import Constellation, Signal, load_almanac, nominal_constellation, write_almanac
from lunar_odts.observables import (
    ALPHA_L1,
    ALPHA_L5,
    AngleOutOfTable,
    DegenerateTriangle,
    IonoModel,
    LightTimeError,
    MissingPair,
    ReceiverParams,
    SourceMismatch,
    cn0_db,
    form_tdcp,
    iono_free_combination,
    iono_plasma_delay,
    link_budget_cn0,
    realize,
    shapiro_delay,
    simulate_epoch,
    solve_light_time,
    tangential_altitude,
    thermal_noise_sigmas,
    visibility_counts,
    write_observables_csv,
)

RX = ReceiverParams()


@pytest.fixture(scope="module")
def real(minimal_scenario):
    cfg = minimal_scenario.config
    return realize(minimal_scenario.geometry, minimal_scenario.constellation, cfg.receiver, cfg.clock, 3, 0)


# --- light time ---------------------------------------------------------------

def test_light_time_stationary():
    t_tx, pos = solve_light_time(np.zeros(3), 100.0, lambda t: np.array([3.84e8, 0.0, 0.0]))
    assert 100.0 - t_tx == pytest.approx(1.28089, abs=5e-6)
    np.testing.assert_array_equal(pos, [3.84e8, 0.0, 0.0])


def test_light_time_colocated():
    t_tx, _ = solve_light_time(np.ones(3), 5.0, lambda t: np.ones(3))
    assert t_tx == 5.0


def test_light_time_constant_velocity_quadratic():
    rx = np.array([1.0e7, -2.0e6, 3.0e5])
    p0 = np.array([2.0e7, 1.5e7, -4.0e6])
    v = np.array([3000.0, -1500.0, 800.0])
    t_rx = 40.0
    t_tx, _ = solve_light_time(rx, t_rx, lambda t: p0 + v * t)
    # |q + v tau| = c tau with q = p0 + v t_rx - rx, solved as a quadratic in tau
    q = p0 + v * t_rx - rx
    a = v @ v - k.C_LIGHT**2
    b = -2.0 * (q @ v)
    c = q @ q
    tau = (-b - math.sqrt(b * b - 4 * a * c)) / (2 * a)
    assert t_rx - t_tx == pytest.approx(tau, abs=1e-12)


def test_light_time_no_convergence():
    # transmitter receding faster than light never converges
    with pytest.raises(LightTimeError):
        solve_light_time(np.zeros(3), 0.0, lambda t: np.array([1e8 - 2 * k.C_LIGHT * t, 0, 0]), max_iter=3)


# --- Shapiro and tangential altitude --------------------------------------------

def test_shapiro_one_au():
    au = 1.495978707e11
    assert shapiro_delay(au, au, 3.84e8) == pytest.approx(2.53e-8, rel=5e-3)
    assert shapiro_delay(au, au, 3.84e8) * k.C_LIGHT == pytest.approx(7.6, abs=0.05)


def test_shapiro_limits_and_symmetry():
    assert shapiro_delay(1.5e11, 1.49e11, 0.0) == 0.0
    assert shapiro_delay(1.5e11, 1.49e11, 4e8) == shapiro_delay(1.49e11, 1.5e11, 4e8)
    with pytest.raises(DegenerateTriangle):
        shapiro_delay(1.0, 1.0, 3.0)


def test_tangential_altitude_oracle():
    rx = np.array([3.84e8, 0.0, 0.0])
    tx = np.array([0.0, 2.6559e7, 0.0])
    miss = np.linalg.norm(np.cross(rx, tx)) / np.linalg.norm(tx - rx)
    h = tangential_altitude(rx, tx)
    assert h == pytest.approx(miss - k.R_EARTH, rel=1e-12)
    assert h == pytest.approx(20.1e6, rel=2e-3)
    assert tangential_altitude(tx, rx) == pytest.approx(h, rel=1e-12)


def test_tangential_altitude_through_centre_and_offset_earth():
    assert tangential_altitude([1e8, 0, 0], [-2e7, 0, 0]) == pytest.approx(-k.R_EARTH)
    earth = np.array([5e6, -3e6, 1e6])
    rx, tx = np.array([3.84e8, 1e6, 0.0]), np.array([0.0, 2.6559e7, 1e5])
    assert tangential_altitude(rx + earth, tx + earth, earth) == pytest.approx(tangential_altitude(rx, tx))


# --- link budget and thermal noise ---------------------------------------------

def test_link_budget_hand_case():
    assert cn0_db(16.2, 13.0, 14.0, 3.84e8, k.F_L1, RX) == pytest.approx(39.7, abs=0.05)


def test_link_budget_inverse_square():
    a = cn0_db(16.2, 13.0, 14.0, 3.84e8, k.F_L1, RX)
    b = cn0_db(16.2, 13.0, 14.0, 7.68e8, k.F_L1, RX)
    assert a - b == pytest.approx(20 * math.log10(2), abs=1e-12)


def test_receive_gain_half_power_edge():
    assert RX.rx_gain(RX.hpbw / 2) == pytest.approx(RX.g_peak - 3.0)
    assert RX.rx_gain(0.0) == RX.g_peak


def test_link_budget_source_and_angle_errors():
    con = Constellation.build(nominal_constellation())
    idx = next(i for i, s in enumerate(con.sources) if not s.has(Signal.L5))
    with pytest.raises(AngleOutOfTable):
        link_budget_cn0(con, 0, Signal.L1, 190.0, 0.0, 3.84e8, RX)
    with pytest.raises(ValueError):
        link_budget_cn0(con, idx, Signal.L5, 10.0, 0.0, 3.84e8, RX)
    on = link_budget_cn0(con, 0, Signal.L1, 0.0, 0.0, 3.84e8, RX)
    off = link_budget_cn0(con, 0, Signal.L1, 0.0, 3.0, 3.84e8, RX)
    assert on > off


def test_thermal_noise_matches_printed_formula():
    cn0 = 10 ** 3.0
    tc = 1.0 / 1.023e6
    code = (k.C_LIGHT * tc) ** 2 * (0.7 / (2 * cn0)) * (1 / (2e6 * tc)) * (1 + 1 / (0.02 * cn0))
    lam = k.C_LIGHT / k.F_L1
    phase = (lam / (2 * math.pi)) ** 2 * (1.0 / (2 * cn0)) * (1 + 1 / (2 * 0.02 * cn0))
    sc, sp = thermal_noise_sigmas(30.0, Signal.L1, RX)
    assert sc == pytest.approx(math.sqrt(code), rel=1e-12)
    assert sp == pytest.approx(math.sqrt(phase), rel=1e-12)


def test_thermal_noise_monotone_and_chip_ratio():
    s30 = thermal_noise_sigmas(30.0, Signal.L1, RX)
    s40 = thermal_noise_sigmas(40.0, Signal.L1, RX)
    assert s40[0] < s30[0] and s40[1] < s30[1]
    # variance scales with the chip width, so sigma with its square root
    l5 = thermal_noise_sigmas(30.0, Signal.L5, RX)[0]
    assert l5 / s30[0] == pytest.approx(1 / math.sqrt(10), rel=1e-12)


# --- ionosphere -----------------------------------------------------------------

def test_iono_magnitude_and_dispersion_limit():
    code, phase, _ = iono_plasma_delay(500e3, k.F_L1)
    assert code > 10.0
    assert phase == -code
    z = iono_plasma_delay(np.array([0.0, 5e5]), math.inf)
    np.testing.assert_array_equal(z[0], 0.0)


def test_iono_profile_monotone():
    h = np.linspace(0, 3e7, 200)
    d = IonoModel().delays(h, k.F_L1)[0]
    assert np.all(np.diff(d) < 0)


def test_iono_free_leaves_only_residual():
    model = IonoModel()
    h = np.array([2e5, 8e5, 2e6, 1e7])
    c1, _, res = model.delays(h, k.F_L1)
    c5, _, _ = model.delays(h, k.F_L5)
    np.testing.assert_allclose(ALPHA_L1 * c1 - ALPHA_L5 * c5, res, rtol=1e-9, atol=1e-15)
    first = 40.3e16 * model.tec(h)
    assert ALPHA_L1 * first / k.F_L1**2 - ALPHA_L5 * first / k.F_L5**2 == pytest.approx(0.0, abs=1e-9)
    # 2% of the L1 first-order delay below the knee
    assert res[0] == pytest.approx(0.02 * first[0] / k.F_L1**2, rel=1e-12)


def test_alpha_coefficients():
    assert ALPHA_L1 - ALPHA_L5 == pytest.approx(1.0, abs=1e-15)
    assert ALPHA_L1 == pytest.approx(2.2606, abs=1e-4)
    assert ALPHA_L5 == pytest.approx(1.2606, abs=1e-4)


# --- constellation --------------------------------------------------------------

def test_nominal_constellation_counts():
    systems = Constellation.build(nominal_constellation()).systems
    assert (systems == "GPS").sum() == 31
    assert (systems == "GAL").sum() == 26
    assert (systems == "QZS").sum() == 4


def test_almanac_round_trip(tmp_path):
    src = nominal_constellation()
    path = tmp_path / "alm.csv"
    write_almanac(path, src)
    back = load_almanac(path)
    assert [s.ident for s in back] == [s.ident for s in src]
    a = Constellation.build(src).states(np.array([0.0, 3600.0])[:, None])
    b = Constellation.build(back).states(np.array([0.0, 3600.0])[:, None])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)


def test_gnss_orbit_period():
    con = Constellation.build(nominal_constellation())
    i = con.idents.index(next(s.ident for s in con.sources if s.system == "GPS"))
    period = 2 * math.pi / con.sources[i].mean_motion
    p0 = con.states(np.array([0.0]))[0][..., i, :]
    p1 = con.states(np.array([period]))[0][..., i, :]
    np.testing.assert_allclose(p1, p0, atol=1e-3)


# --- assembled observables ----------------------------------------------------------

def test_visibility_ordering(minimal_scenario):
    counts = visibility_counts(minimal_scenario.geometry, minimal_scenario.constellation, RX.threshold)
    assert np.all(counts["L1"] >= counts["L5"])
    assert np.all(counts["L5"] >= counts["dual"])
    assert counts["L1"].min() > 0


def test_ledger_closure(minimal_scenario, real):
    geo = minimal_scenario.geometry
    n = 0
    for i in range(0, geo.n_epochs, 7):
        for o in simulate_epoch(geo, real, minimal_scenario.constellation, i):
            # two ulps of a lunar range; the observables themselves are doubles
            tol = 4 * np.spacing(o.range)
            assert abs(o.pseudorange - (o.range + o.rx_clock) - o.code_ledger()) <= tol
            assert abs(o.phase - (o.range + o.rx_clock) - o.phase_ledger()) <= tol
            assert o.iono_phase == -o.iono_code
            n += 1
    assert n > 100


def test_untracked_are_nan(minimal_scenario, real):
    for sig in Signal:
        tr = real.tracked[sig]
        assert np.all(np.isnan(real.pseudorange[sig][~tr]))
        assert np.all(np.isfinite(real.pseudorange[sig][tr]))


def test_noise_realism(minimal_scenario):
    cfg = minimal_scenario.config
    geo = minimal_scenario.geometry
    code, phase = [], []
    for run in range(3):
        r = realize(geo, minimal_scenario.constellation, cfg.receiver, cfg.clock, 11, run)
        for sig in Signal:
            tr = r.tracked[sig]
            code.append(r.code_noise[sig][tr] / r.sigma_code[sig][tr])
            phase.append(r.phase_noise[sig][tr] / r.sigma_phase[sig][tr])
    code, phase = np.concatenate(code), np.concatenate(phase)
    assert code.size >= 10_000
    assert np.std(code) == pytest.approx(1.0, rel=0.05)
    assert np.std(phase) == pytest.approx(1.0, rel=0.05)


def test_ambiguity_constant_within_arc_and_slips_only_at_low_cn0(minimal_scenario, real):
    geo = minimal_scenario.geometry
    amb = real.ambiguity[Signal.L1]
    tr = real.tracked[Signal.L1]
    slip = real.slip[Signal.L1]
    both = tr[1:] & tr[:-1]
    jumps = both & (amb[1:] != amb[:-1])
    np.testing.assert_array_equal(jumps, slip[1:] & both)
    assert np.all(geo.cn0[Signal.L1][slip] < RX.slip_cn0)
    assert np.all(np.abs(amb[1:][jumps] - amb[:-1][jumps]) <= RX.slip_max_cycles)


def test_combinations(minimal_scenario, real):
    geo = minimal_scenario.geometry
    obs = simulate_epoch(geo, real, minimal_scenario.constellation, 10)
    prev = simulate_epoch(geo, real, minimal_scenario.constellation, 9)
    by = {(o.source, o.signal): o for o in obs}
    src = next(s for (s, sig) in by if sig is Signal.L5)
    l1, l5 = by[(src, Signal.L1)], by[(src, Signal.L5)]
    value, var = iono_free_combination(l1, l5)
    assert value == pytest.approx(ALPHA_L1 * l1.pseudorange - ALPHA_L5 * l5.pseudorange, rel=1e-15)
    assert var == pytest.approx(ALPHA_L1**2 * l1.sigma_code**2 + ALPHA_L5**2 * l5.sigma_code**2)
    with pytest.raises(MissingPair):
        iono_free_combination(l5, l1)
    with pytest.raises(MissingPair):
        iono_free_combination(l1, None)
    other = next(o for o in obs if o.signal is Signal.L5 and o.source != src)
    with pytest.raises(SourceMismatch):
        iono_free_combination(l1, other)

    p1 = next(o for o in prev if o.source == src and o.signal is Signal.L1)
    d, dvar = form_tdcp(l1, p1)
    assert d == l1.phase - p1.phase
    assert dvar == pytest.approx(l1.sigma_phase**2 + p1.sigma_phase**2)
    assert form_tdcp(l1, l1)[0] == 0.0
    with pytest.raises(SourceMismatch):
        form_tdcp(p1, l1)
    with pytest.raises(SourceMismatch):
        form_tdcp(l1, l5)


def test_tdcp_ambiguity_cancels():
    from dataclasses import replace
    o = dict(source="G01", signal=Signal.L1, pseudorange=0.0, cn0=30.0, h_tan=1e7, sigma_code=1.0,
             sigma_phase=1e-3, range=0.0, rx_clock=0.0, shapiro=0.0, iono_code=0.0, iono_phase=0.0,
             eph_error=0.0, isb=0.0, code_noise=0.0, phase_noise=0.0, ambiguity=0.0, slip=False)
    from lunar_odts.observables import RawObservable
    a = RawObservable(epoch=0.0, phase=1.25, **o)
    b = RawObservable(epoch=10.0, phase=1.75, **o)
    shift = 0.19 * 12345
    a2, b2 = replace(a, phase=a.phase + shift), replace(b, phase=b.phase + shift)
    assert form_tdcp(b2, a2)[0] == pytest.approx(form_tdcp(b, a)[0], abs=1e-9)


def test_observables_csv_deterministic(minimal_scenario, tmp_path):
    cfg = minimal_scenario.config
    geo = minimal_scenario.geometry
    paths = []
    for name in ("a.csv", "b.csv"):
        r = realize(geo, minimal_scenario.constellation, cfg.receiver, cfg.clock, 5, 2)
        write_observables_csv(tmp_path / name, geo, r, minimal_scenario.constellation, every=5)
        paths.append(tmp_path / name)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    r3 = realize(geo, minimal_scenario.constellation, cfg.receiver, cfg.clock, 5, 3)
    write_observables_csv(tmp_path / "c.csv", geo, r3, minimal_scenario.constellation, every=5)
    assert (tmp_path / "c.csv").read_bytes() != paths[0].read_bytes()
