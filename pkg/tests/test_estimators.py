import numpy as np
import pytest

from glaves.data import ExperimentalSample, TargetSample
from glaves.estimators import (METHODS, CVConfig, int_lasso_tate, ols_tate, run_methods, s_diff,
                               twoarm_lasso_tate)


def test_sdiff_arithmetic():
    exp = ExperimentalSample([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0], np.arange(4.0)[:, None])
    assert s_diff(exp).point == -2.0
    const = ExperimentalSample([5.0] * 4, [1, 0, 1, 0], np.arange(4.0)[:, None])
    assert s_diff(const).point == 0.0


def test_ols_noiseless_interaction():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 1))
    a = np.tile([0.0, 1.0], 25)
    y = a + x[:, 0] + a * x[:, 0]
    tgt = TargetSample(np.array([[0.0], [2.0]]))
    assert ols_tate(ExperimentalSample(y, a, x), tgt).point == pytest.approx(2.0, abs=1e-12)


def test_ols_same_population_is_adjusted_sate():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((60, 2))
    a = np.tile([0.0, 1.0], 30)
    y = a + x @ [1.0, 0.5] + 0.3 * a * x[:, 0] + rng.standard_normal(60)
    exp = ExperimentalSample(y, a, x)
    res = ols_tate(exp, TargetSample(x))
    one = np.ones((30, 1))
    b1 = np.linalg.lstsq(np.hstack([one, x[a == 1]]), y[a == 1], rcond=None)[0]
    b0 = np.linalg.lstsq(np.hstack([one, x[a == 0]]), y[a == 0], rcond=None)[0]
    full = np.hstack([np.ones((60, 1)), x])
    assert res.point == pytest.approx(np.mean(full @ b1 - full @ b0), abs=1e-12)
    assert res.selected_interactions == (0, 1)


def _noise_pair(seed, n=200, p=5, effect=0.0, inter=0.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    a = (rng.permutation(n) < n // 2).astype(float)
    y = effect * a + inter * a * x[:, 0] + rng.standard_normal(n)
    return ExperimentalSample(y, a, x), TargetSample(rng.standard_normal((50, p)))


@pytest.mark.xfail(strict=True, reason="minimum-CV lasso keeps noise interactions in about a "
                   "third of pure-noise runs; see the decisions ledger")
def test_intlasso_pure_noise_empty_selection():
    empty = sum(len(int_lasso_tate(*_noise_pair([5, s]), seed=s).selected_interactions) == 0
                for s in range(200))
    assert empty >= 180


def test_intlasso_huge_interaction_selected():
    hits = sum(0 in int_lasso_tate(*_noise_pair([6, s], inter=5.0), seed=s).selected_interactions
               for s in range(100))
    assert hits >= 99


def test_intlasso_keeps_treatment_unpenalized():
    exp, tgt = _noise_pair(7, effect=0.3)
    res = int_lasso_tate(exp, tgt, cv=CVConfig(n_lambdas=10, lambda_min_ratio=0.5))
    assert res.point != 0.0


def test_twoarm_lasso_null_effect_unbiased():
    pts = []
    for s in range(40):
        rng = np.random.default_rng([8, s])
        x = rng.standard_normal((2000, 3))
        a = np.tile([0.0, 1.0], 1000)
        y = x @ [1.0, -1.0, 0.5] + rng.standard_normal(2000)
        pts.append(twoarm_lasso_tate(ExperimentalSample(y, a, x), TargetSample(x[:100]),
                                     seed=s).point)
    assert abs(np.mean(pts)) <= 0.02


def test_twoarm_either_arm_rule():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((200, 3))
    a = np.tile([0.0, 1.0], 100)
    res = twoarm_lasso_tate(ExperimentalSample(a + x[:, 0], a, x), TargetSample(x))
    assert 0 in res.selected_interactions


def test_run_methods_order_and_unknown(small_pair):
    exp, tgt = small_pair
    out = run_methods(exp, tgt, ("OLSGLAVeS", "S.Diff"))
    assert list(out) == ["OLSGLAVeS", "S.Diff"]
    with pytest.raises(ValueError, match="unknown methods"):
        run_methods(exp, tgt, ("Ridge",))


def test_sensitivity_conventions(small_pair):
    exp, tgt = small_pair
    out = run_methods(exp, tgt, METHODS)
    assert out["S.Diff"].selected_interactions == ()
    assert out["OLS"].selected_interactions == tuple(range(exp.p))
    assert out["GLAVeS"].selected_interactions == out["OLSGLAVeS"].selected_interactions


def test_weight_invariance_all_estimators(weighted_pair):
    exp, tgt = weighted_pair
    base = run_methods(exp, TargetSample(tgt.x_star), seed=2)
    uniform = run_methods(exp, TargetSample(tgt.x_star, np.full(tgt.m, 3.0)), seed=2)
    ref = run_methods(exp, tgt, seed=2)
    scaled = run_methods(exp, TargetSample(tgt.x_star, 0.01 * tgt.raw_weights), seed=2)
    for m in METHODS:
        assert uniform[m].point == base[m].point
        assert scaled[m].point == pytest.approx(ref[m].point, abs=1e-6)
