import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speccep.prediction import FixedPredictor, MarkovPredictor


def brute_power(t, n):
    out = np.eye(len(t))
    for _ in range(n):
        out = t @ out
    return out


def two_state(p, **kw):
    m = MarkovPredictor(1, **kw)
    m.T1 = np.array([[1.0, p], [0.0, 1.0 - p]])
    m.version += 1
    return m


def test_initial_matrix():
    m = MarkovPredictor(3, horizon=100)
    assert m.T1[0, 0] == 1.0
    assert m.T1[3, 3] == pytest.approx(0.99) and m.T1[2, 3] == pytest.approx(0.01)
    assert np.allclose(m.T1.sum(axis=0), 1.0)


def test_full_replacement_fold():
    m = MarkovPredictor(2, alpha=1.0, rho=1)
    m.record_transition(2, 1)
    assert m.T1[:, 2].tolist() == [0.0, 1.0, 0.0]
    assert m.folds == 1


def test_exponential_smoothing():
    m = MarkovPredictor(1, alpha=0.7, rho=1)
    m.T1 = np.array([[1.0, 0.5], [0.0, 0.5]])
    m.record_transition(1, 0)
    assert m.T1[:, 1] == pytest.approx([0.85, 0.15])


def test_self_loops_move_toward_identity():
    m = MarkovPredictor(1, alpha=0.7, rho=10, horizon=10)
    before = m.T1[1, 1]
    m.record_transition(1, 1, 10)
    assert before < m.T1[1, 1] < 1.0
    for _ in range(30):
        m.record_transition(1, 1, 10)
    assert m.T1[1, 1] == pytest.approx(1.0)


def test_unseen_columns_keep_values_and_zero_absorbs():
    m = MarkovPredictor(3, alpha=1.0, rho=2)
    col3 = m.T1[:, 3].copy()
    m.record_transition(1, 0)
    m.record_transition(2, 1)
    assert np.array_equal(m.T1[:, 3], col3)
    assert m.T1[:, 0].tolist() == [1.0, 0.0, 0.0, 0.0]


def test_record_counts_batches_across_folds():
    m = MarkovPredictor(2, alpha=1.0, rho=3)
    c = np.zeros((3, 3), dtype=np.int64)
    c[1, 2] = 4
    c[2, 2] = 3
    m.record_counts(c)
    assert m.folds == 2 and m.measurements == 1


def test_record_validation():
    m = MarkovPredictor(2)
    with pytest.raises(ValueError):
        m.record_transition(3, 1)
    with pytest.raises(ValueError):
        m.record_transition(1, 1, -1)
    with pytest.raises(ValueError):
        MarkovPredictor(0)
    with pytest.raises(ValueError):
        MarkovPredictor(2, alpha=0.0)


def test_interpolation_rule():
    m = two_state(0.1, ell=10, horizon=100)
    t10, t20 = brute_power(m.T1, 10), brute_power(m.T1, 20)
    assert np.allclose(m.matrix_power_and_interpolate(10), t10, atol=1e-12)
    assert np.allclose(m.matrix_power_and_interpolate(14), 0.6 * t10 + 0.4 * t20, atol=1e-12)
    assert np.allclose(m.matrix_power_and_interpolate(0), np.eye(2))


def test_interpolation_error_against_exact_power():
    m = two_state(0.1, ell=10, horizon=100)
    exact = brute_power(m.T1, 7)
    approx = m.matrix_power_and_interpolate(7)
    # 1 - 0.9^n is concave in n, so the chord between T_0 and T_10 lies below it
    err = exact[0, 1] - approx[0, 1]
    assert err == pytest.approx((1 - 0.9 ** 7) - 0.7 * (1 - 0.9 ** 10), abs=1e-12)
    assert 0 < err < 0.066


def test_completion_examples():
    m = MarkovPredictor(3)
    m.T1 = np.eye(4)
    m.version += 1
    assert m.completion_probability(2, 50) == 0.0
    det = MarkovPredictor(2, ell=1, horizon=10)
    det.T1 = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    det.version += 1
    assert det.completion_probability(2, 3) == 1.0
    half = two_state(0.5, ell=1, horizon=10)
    assert half.completion_probability(1, 2) == pytest.approx(0.75)
    assert half.completion_probability(0, 2) == 1.0


def test_predict_uses_remaining_events():
    m = two_state(0.5, ell=1, horizon=10)
    assert m.predict(1, 8, 10.0) == pytest.approx(0.75)
    # past the average window size at least one more event is assumed
    assert m.predict(1, 30, 10.0) == pytest.approx(0.5)


def test_clamped_beyond_horizon():
    m = two_state(0.01, ell=10, horizon=100)
    assert m.completion_probability(1, 10_000) == m.completion_probability(1, 100)


def test_lazy_refresh_is_explicit_when_disabled():
    m = MarkovPredictor(1, alpha=1.0, rho=1, horizon=10, ell=1, auto_refresh=False)
    m.refresh()
    before = m.completion_probability(1, 5)
    m.record_transition(1, 0)
    assert m.completion_probability(1, 5) == before
    m.refresh()
    assert m.completion_probability(1, 5) == 1.0


def test_large_state_space_uses_same_recurrence():
    rng = np.random.default_rng(0)
    d = 300
    m = MarkovPredictor(d - 1, ell=5, horizon=50)
    t = np.zeros((d, d))
    t[0, 0] = 1.0
    for j in range(1, d):
        p = rng.uniform(0.05, 0.5)
        t[j, j], t[j - 1, j] = 1 - p, p
    m.T1 = t
    m.version += 1
    exact = brute_power(t, 50)
    for delta in (1, 3, 10):
        assert m.completion_probability(delta, 50) == pytest.approx(exact[0, delta], abs=1e-12)


def stochastic(draw_vals, d):
    t = np.zeros((d, d))
    t[0, 0] = 1.0
    k = 0
    for j in range(1, d):
        col = np.array(draw_vals[k:k + j + 1]) + 1e-3
        k += j + 1
        t[:j + 1, j] = col / col.sum()
    return t


@settings(max_examples=60, deadline=None)
@given(d=st.integers(2, 6), ell=st.integers(1, 6), data=st.data())
def test_properties(d, ell, data):
    vals = data.draw(st.lists(st.floats(0, 1), min_size=d * d, max_size=d * d))
    m = MarkovPredictor(d - 1, ell=ell, horizon=8 * ell)
    m.T1 = stochastic(vals, d)
    m.version += 1
    for n in range(0, 8 * ell + 1):
        assert np.allclose(m.matrix_power_and_interpolate(n).sum(axis=0), 1.0, atol=1e-9)
    for delta in range(1, d):
        prev = 0.0
        for n in range(0, 8 * ell + 1):
            p = m.completion_probability(delta, n)
            assert -1e-12 <= p <= 1.0 + 1e-12
            assert p >= prev - 1e-12
            prev = p
        for mult in range(0, 9):
            exact = brute_power(m.T1, mult * ell)[0, delta]
            assert m.completion_probability(delta, mult * ell) == pytest.approx(exact, abs=1e-12)


def test_fixed_predictor():
    f = FixedPredictor(0.2)
    assert f.predict(3, 0, 100) == 0.2 and f.predict(0, 0, 100) == 1.0
    f.record_transition(1, 0)
    with pytest.raises(ValueError):
        FixedPredictor(1.5)
