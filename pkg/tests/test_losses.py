import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bivlab.linear_oracle import finite_diff_gradient
from bivlab.losses import (BIV, IV, L2, Cutoff, batch_loss, biv_batch_loss, biv_weights, cutoff_batch_loss,
                           effective_batch_size, iv_batch_loss, iv_sample_loss, l2_batch_loss, scheme_from_dict,
                           scheme_to_dict)

PRED = np.array([1.0, 2.0, 3.0])
Y = np.zeros(3)


def test_l2_example():
    r = l2_batch_loss(PRED, Y)
    assert r.loss == pytest.approx(14 / 3)
    assert r.effective_batch_size == pytest.approx(3.0)
    np.testing.assert_allclose(r.grad_wrt_predictions, 2 * PRED / 3)


def test_biv_example():
    # raw weights 1, 1/2, 1/4 -> normalized 4/7, 2/7, 1/7
    r = biv_batch_loss(PRED, Y, [0.0, 1.0, 3.0], epsilon=1.0)
    np.testing.assert_allclose(r.per_sample_weights, [4 / 7, 2 / 7, 1 / 7])
    assert r.loss == pytest.approx(3.0)
    assert r.effective_batch_size == pytest.approx(7 / 3)
    np.testing.assert_allclose(r.grad_wrt_predictions, 2 * np.array([4, 4, 3]) / 7)


def test_iv_example():
    r = iv_batch_loss(PRED, Y, [1.0, 2.0, 4.0])
    assert r.loss == pytest.approx((1 + 2 + 2.25) / 3)
    np.testing.assert_allclose(r.per_sample_weights, [1.0, 0.5, 0.25])
    assert iv_sample_loss(3.0, 1.0, 2.0) == 2.0


def test_iv_zero_variance_raises():
    with pytest.raises(ZeroDivisionError):
        iv_batch_loss(PRED, Y, [0.0, 1.0, 1.0])
    with pytest.raises(ZeroDivisionError):
        iv_sample_loss(1.0, 0.0, 0.0)


def test_biv_zero_epsilon_zero_variance_raises():
    with pytest.raises(ZeroDivisionError):
        biv_weights([0.0, 1.0], 0.0)
    np.testing.assert_allclose(biv_weights([1.0, 3.0], 0.0), [0.75, 0.25])


def test_cutoff_example_and_empty_batch():
    r = cutoff_batch_loss(PRED, Y, [0.0, 1.0, 3.0], C=2.0)
    assert r.loss == pytest.approx(2.5)
    np.testing.assert_allclose(r.per_sample_weights, [0.5, 0.5, 0.0])
    assert r.effective_batch_size == pytest.approx(2.0)
    e = cutoff_batch_loss(PRED, Y, [5.0, 6.0, 7.0], C=2.0)
    assert e.empty and e.loss == 0.0 and not e.grad_wrt_predictions.any()
    # strict inequality
    assert cutoff_batch_loss(PRED, Y, [2.0, 2.0, 2.0], C=2.0).empty


def test_input_validation():
    with pytest.raises(ValueError):
        biv_batch_loss(PRED, Y, [1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        l2_batch_loss(PRED, Y[:2])
    with pytest.raises(ValueError):
        BIV(-0.1)
    with pytest.raises(ValueError):
        Cutoff(0.0)
    with pytest.raises(ValueError):
        effective_batch_size([0.0, 0.0])


def test_ebs_huge_iv_weights_do_not_overflow():
    assert effective_batch_size([1e200, 1e200]) == pytest.approx(2.0)


batches = st.integers(1, 40).flatmap(lambda k: st.tuples(
    st.lists(st.floats(-10, 10), min_size=k, max_size=k),
    st.lists(st.floats(-10, 10), min_size=k, max_size=k),
    st.lists(st.floats(0, 50), min_size=k, max_size=k),
))


@settings(max_examples=100, deadline=None)
@given(batches, st.floats(1e-3, 10))
def test_biv_weights_normalized_and_bounds(batch, eps):
    pred, y, s2 = map(np.array, batch)
    r = biv_batch_loss(pred, y, s2, eps)
    assert r.per_sample_weights.sum() == pytest.approx(1.0, rel=1e-12)
    assert 1.0 - 1e-9 <= r.effective_batch_size <= len(pred) + 1e-9
    assert r.loss >= 0


@settings(max_examples=100, deadline=None)
@given(batches, st.floats(0, 100))
def test_biv_with_equal_variances_is_l2(batch, s):
    pred, y, _ = map(np.array, batch)
    a = biv_batch_loss(pred, y, np.full(pred.size, s), 0.05)
    b = l2_batch_loss(pred, y)
    assert a.loss == pytest.approx(b.loss, rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(a.grad_wrt_predictions, b.grad_wrt_predictions, rtol=1e-12, atol=1e-300)


def test_biv_large_epsilon_limit_is_l2():
    rng = np.random.default_rng(0)
    pred, y, s2 = rng.normal(size=30), rng.normal(size=30), rng.gamma(0.5, 2.0, 30)
    gaps = [abs(biv_batch_loss(pred, y, s2, e).loss - l2_batch_loss(pred, y).loss) for e in (1.0, 10.0, 1e3, 1e6)]
    assert gaps == sorted(gaps, reverse=True)
    assert gaps[-1] < 1e-5


def test_cutoff_with_huge_threshold_is_l2():
    rng = np.random.default_rng(1)
    pred, y, s2 = rng.normal(size=20), rng.normal(size=20), rng.gamma(1.0, 1.0, 20)
    assert cutoff_batch_loss(pred, y, s2, 1e9).loss == pytest.approx(l2_batch_loss(pred, y).loss, rel=1e-12)


@pytest.mark.parametrize("scheme", [L2(), IV(), BIV(0.3), Cutoff(1.5)])
def test_prediction_gradients_match_finite_differences(scheme):
    rng = np.random.default_rng(2)
    pred, y, s2 = rng.normal(size=12), rng.normal(size=12), rng.uniform(0.1, 3.0, 12)
    g = batch_loss(scheme, pred, y, s2).grad_wrt_predictions
    fd = finite_diff_gradient(lambda p: batch_loss(scheme, p, y, s2).loss, pred)
    np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-10)


@pytest.mark.parametrize("scheme", [L2(), IV(), BIV(0.01), Cutoff(3.0)])
def test_scheme_dict_roundtrip(scheme):
    assert scheme_from_dict(scheme_to_dict(scheme)) == scheme


def test_scheme_from_dict_unknown():
    with pytest.raises(ValueError):
        scheme_from_dict({"scheme": "huber"})
    with pytest.raises(ValueError):
        scheme_from_dict({"scheme": "l2", "epsilon": 0.1})
