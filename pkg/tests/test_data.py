import numpy as np
import pytest

from glaves.data import (DataError, ExperimentalSample, TargetSample, normalize_weights,
                         standardize, target_omega, unstandardize, validate_pair, weighted_mean)


def _exp(n=4, p=2, seed=0):
    rng = np.random.default_rng(seed)
    a = np.tile([0.0, 1.0], n // 2)
    return ExperimentalSample(rng.standard_normal(n), a, rng.standard_normal((n, p)))


def test_matching_pair_is_accepted():
    exp = _exp()
    tgt = TargetSample(np.ones((3, 2)))
    assert validate_pair(exp, tgt) == (exp, tgt)
    assert (exp.n, exp.p, tgt.m, tgt.p) == (4, 2, 3, 2)


def test_dimension_mismatch():
    with pytest.raises(DataError, match="dimension mismatch"):
        validate_pair(_exp(), TargetSample(np.ones((3, 3))))


def test_empty_arm():
    with pytest.raises(DataError, match="empty treatment arm"):
        ExperimentalSample([1.0, 2.0, 3.0], [1, 1, 1], np.ones((3, 1)))


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_reports_location(bad):
    x = np.ones((4, 2))
    x[2, 1] = bad
    with pytest.raises(DataError, match="row 2, column 1"):
        ExperimentalSample(np.arange(4.0), [0, 1, 0, 1], x)


def test_treatment_must_be_binary():
    with pytest.raises(DataError, match="0/1"):
        ExperimentalSample(np.arange(4.0), [0, 1, 2, 1], np.ones((4, 1)))


def test_constant_column_rejected():
    x = np.column_stack([np.arange(4.0), np.ones(4)])
    exp = ExperimentalSample(np.arange(4.0), [0, 1, 0, 1], x)
    with pytest.raises(DataError, match="constant covariate column x2"):
        validate_pair(exp, TargetSample(np.zeros((2, 2))))


def test_samples_copy_and_freeze_inputs():
    y = np.arange(4.0)
    exp = ExperimentalSample(y, [0, 1, 0, 1], np.ones((4, 1)) * np.arange(4.0)[:, None])
    y[0] = 99.0
    assert exp.y[0] == 0.0
    with pytest.raises(ValueError):
        exp.y[0] = 1.0


def test_standardize_outcome_uses_sample_sd():
    x = np.array([[0.0], [1.0], [3.0], [7.0]])
    exp = ExperimentalSample([2.0, 4.0, 6.0, 8.0], [0, 1, 0, 1], x)
    s_exp, _, info = standardize(exp, TargetSample(x))
    assert info.sd_y == pytest.approx(2.581988897471611, abs=1e-12)
    np.testing.assert_allclose(s_exp.y, np.array([2, 4, 6, 8]) / 2.581988897471611, rtol=1e-12)


def test_unit_sd_column_is_unchanged():
    col = np.array([-1.0, 0.0, 1.0, 0.0])
    col = col / col.std(ddof=1)
    exp = ExperimentalSample(np.arange(4.0), [0, 1, 0, 1], col[:, None])
    s_exp, _, _ = standardize(exp, TargetSample(col[:, None]))
    np.testing.assert_allclose(s_exp.x[:, 0], col, atol=1e-12)


def test_experimental_sd_policy_keeps_target_spread():
    base = np.array([-1.5, -0.5, 0.0, 0.0, 0.5, 1.5])
    x = base / base.std(ddof=1)
    exp = ExperimentalSample(np.arange(6.0), [0, 1] * 3, x[:, None])
    tgt = TargetSample(2 * x[:, None])
    s_exp, s_tgt, info = standardize(exp, tgt, "experimental-sd")
    assert info.sd_x[0] == pytest.approx(1.0)
    ratio = s_tgt.x_star[:, 0].std(ddof=1) / s_exp.x[:, 0].std(ddof=1)
    assert ratio == pytest.approx(2.0, rel=1e-12)


def test_pooled_policy_and_roundtrip():
    exp, tgt = _exp(6, 2, 3), TargetSample(np.random.default_rng(4).standard_normal((5, 2)))
    s_exp, s_tgt, info = standardize(exp, tgt, "pooled-sd")
    pooled = np.vstack([exp.x, tgt.x_star]).std(axis=0, ddof=1)
    np.testing.assert_allclose(info.sd_x, pooled)
    back_exp, back_tgt = unstandardize(s_exp, s_tgt, info)
    np.testing.assert_allclose(back_exp.x, exp.x, rtol=1e-13)
    np.testing.assert_allclose(back_tgt.x_star, tgt.x_star, rtol=1e-13)
    np.testing.assert_allclose(back_exp.y, exp.y, rtol=1e-13)


def test_unknown_policy():
    with pytest.raises(DataError, match="unknown scaling policy"):
        standardize(_exp(), TargetSample(np.ones((2, 2))), "robust")


def test_normalize_weights_examples():
    np.testing.assert_array_equal(normalize_weights([1, 1, 1, 1]).omega, [1, 1, 1, 1])
    np.testing.assert_allclose(normalize_weights([1, 3]).omega, [0.5, 1.5])
    with pytest.raises(DataError):
        normalize_weights([1.0, 0.0])
    with pytest.raises(DataError):
        TargetSample(np.ones((2, 1)), [1.0, 0.0])


def test_target_omega_and_weighted_mean():
    assert target_omega(TargetSample(np.ones((2, 1)))) is None
    omega = target_omega(TargetSample(np.ones((2, 1)), [1.0, 3.0]))
    assert weighted_mean([2.0, 4.0], omega) == pytest.approx((0.5 * 2 + 1.5 * 4) / 2)
    assert weighted_mean([2.0, 4.0]) == 3.0
    assert weighted_mean([2.0, 4.0], np.ones(2)) == weighted_mean([2.0, 4.0])


def test_take_keeps_weights_aligned():
    tgt = TargetSample(np.arange(3.0)[:, None], [1.0, 2.0, 3.0])
    sub = tgt.take([2, 2, 0])
    np.testing.assert_array_equal(sub.raw_weights, [3.0, 3.0, 1.0])
    np.testing.assert_array_equal(sub.x_star[:, 0], [2.0, 2.0, 0.0])
