import numpy as np
import pytest

from lunar_odts.oracles import random_linear_scenario, random_spd
from lunar_odts.scfilter import (
    AugmentedBelief,
    Belief,
    MeasurementKind,
    OrderingViolation,
    ScalarMeasurement,
    ShapeMismatch,
    SingularAnchor,
    StaleFactors,
    delayed_state_smooth,
    extract_marginal,
    make_record,
    sc_measurement_update,
    sc_time_update,
    smoother_gain,
)
from lunar_odts.selftest import (
    filter_equivalence,
    run_sc_filter,
    smoother_equivalence,
    truncation_equivalence,
)
from lunar_odts.udlinalg import UDFactors, reconstruct, ud_factorize


def _belief(x, p, t=0.0):
    return Belief(t, np.asarray(x, float), ud_factorize(np.atleast_2d(p)))


def test_scalar_random_walk_hand_case():
    # x ~ N(0, 1), phi = 1, q = 1, z = 2 with R = 2 -> prior var 2, K = 1/2
    b = _belief([0.0], [[1.0]])
    a = sc_time_update(b, np.eye(1), np.eye(1), epoch=1.0)
    np.testing.assert_allclose(a.cov_aug.covariance(), [[2.0, 1.0], [1.0, 1.0]])
    m = ScalarMeasurement(2.0, 0.0, np.ones(1), None, 2.0)
    post, rep = sc_measurement_update(a, [m])
    marg = extract_marginal(post)
    np.testing.assert_allclose(marg.x, [1.0])
    np.testing.assert_allclose(marg.covariance(), [[1.0]])
    # clone x_0 | z: cov 1/2 coupling -> mean 0.5, var 0.75
    np.testing.assert_allclose(post.x_clone, [0.5])
    np.testing.assert_allclose(post.cov_aug.covariance()[1, 1], 0.75)
    assert rep[0].innovation == pytest.approx(2.0)
    assert rep[0].innovation_variance == pytest.approx(4.0)


def test_time_update_block_structure():
    rng = np.random.default_rng(0)
    n = 4
    p = random_spd(rng, n)
    q = random_spd(rng, n) * 0.1
    phi = rng.standard_normal((n, n))
    a = sc_time_update(_belief(rng.standard_normal(n), p), phi, q)
    pa = a.cov_aug.covariance()
    np.testing.assert_allclose(pa[:n, :n], phi @ p @ phi.T + q, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pa[:n, n:], phi @ p, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pa[n:, n:], p, rtol=1e-12, atol=1e-12)


def test_time_update_shape_errors():
    b = _belief(np.zeros(3), np.eye(3))
    with pytest.raises(ShapeMismatch):
        sc_time_update(b, np.eye(2), np.eye(3))
    with pytest.raises(ShapeMismatch):
        sc_time_update(b, np.eye(3), np.eye(2))


def test_ordering_violation():
    a = sc_time_update(_belief(np.zeros(2), np.eye(2)), np.eye(2), np.eye(2))
    cur = ScalarMeasurement(0.0, 0.0, np.array([1.0, 0.0]), None, 1.0)
    dly = ScalarMeasurement(0.0, 0.0, np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 1.0)
    assert dly.kind is MeasurementKind.DELAYED_STATE
    assert cur.kind is MeasurementKind.CURRENT_ONLY
    with pytest.raises(OrderingViolation):
        sc_measurement_update(a, [cur, dly])
    sc_measurement_update(a, [dly, cur])


def test_truncated_batch_marks_stale_and_blocks_smoothing():
    a = sc_time_update(_belief(np.zeros(2), np.eye(2)), np.eye(2), np.eye(2))
    cur = ScalarMeasurement(1.0, 0.0, np.array([1.0, 0.0]), None, 1.0)
    post, _ = sc_measurement_update(a, [cur], allow_truncation=True)
    assert post.clone_stale
    with pytest.raises(StaleFactors):
        make_record(post, extract_marginal(post))
    dly = ScalarMeasurement(0.0, 0.0, np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 1.0)
    with pytest.raises(StaleFactors):
        sc_measurement_update(post, [dly])


def test_extraction_methods_agree():
    rng = np.random.default_rng(4)
    for _ in range(30):
        n = int(rng.integers(1, 11))
        f = ud_factorize(random_spd(rng, 2 * n, cond=1e6))
        a = AugmentedBelief(1.0, 0.0, rng.standard_normal(2 * n), f, n)
        p1 = extract_marginal(a, "factorize").covariance()
        p2 = extract_marginal(a, "agee-turner").covariance()
        ref = reconstruct(f)[:n, :n]
        assert np.max(np.abs(p1 - p2)) <= 1e-10 * np.max(np.abs(ref))
        assert np.max(np.abs(p1 - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_relinearizing_model_is_used():
    a = sc_time_update(_belief([0.0], [[1.0]]), np.eye(1), np.eye(1))
    calls = []

    def model(xc, xk):
        calls.append(float(xc[0]))
        return float(xc[0])

    m1 = ScalarMeasurement(1.0, 0.0, np.ones(1), None, 1.0, model=model)
    m2 = ScalarMeasurement(1.0, 0.0, np.ones(1), None, 1.0, model=model)
    sc_measurement_update(a, [m1, m2])
    assert calls[0] == 0.0 and calls[1] > 0.0


def test_filter_matches_dense_small():
    assert filter_equivalence(np.random.default_rng(10), n_systems=8, steps=40) < 1e-9


def test_smoother_matches_batch_and_rts_small():
    w_map, w_rts = smoother_equivalence(np.random.default_rng(12), n_systems=5, steps=25)
    assert w_map < 1e-7
    assert w_rts < 1e-9


def test_truncation_matches_full_small():
    assert truncation_equivalence(np.random.default_rng(13), n_cases=20) <= 1e-12


def test_smoother_without_measurements_returns_prediction():
    rng = np.random.default_rng(6)
    sc = random_linear_scenario(rng, 3, 10, n_current=0, n_delayed=0)
    beliefs, records = run_sc_filter(sc, smoothing=True)
    smoothed = delayed_state_smooth(records)
    assert len(smoothed) == len(beliefs)
    for s, b in zip(smoothed, beliefs):
        np.testing.assert_allclose(s.x, b.x, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(s.covariance(), b.covariance(), rtol=1e-9, atol=1e-12)
        assert s.epoch == b.epoch


def test_last_smoothed_equals_last_filtered():
    sc = random_linear_scenario(np.random.default_rng(7), 4, 15)
    beliefs, records = run_sc_filter(sc, smoothing=True)
    smoothed = delayed_state_smooth(records)
    np.testing.assert_array_equal(smoothed[-1].x, beliefs[-1].x)


def test_singular_anchor():
    b = Belief(0.0, np.zeros(2), UDFactors(np.eye(2), np.array([1.0, 0.0])))
    a = sc_time_update(b, np.eye(2), np.zeros((2, 2)))
    rec = make_record(a, extract_marginal(a))
    with pytest.raises(SingularAnchor):
        smoother_gain(rec)
