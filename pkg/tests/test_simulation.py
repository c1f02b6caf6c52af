import math

import numpy as np
import pytest

from glaves.scenarios import get_scenario
from glaves.simulation import (ReplicateMetrics, SimulationError, run_motivating_study,
                               run_scenario, summarize)


def _records(estimates, selected, truth_set=frozenset({0})):
    return [ReplicateMetrics(i, 1.2, truth_set, {"M": e}, {"M": s})
            for i, (e, s) in enumerate(zip(estimates, selected))]


def test_summary_metrics_by_hand():
    spec = get_scenario(1)
    est = [1.0, 1.5, 1.3, 1.1]
    sel = [(0,), (0, 1), (), (0, 1, 2)]
    s = summarize(_records(est, sel, spec.true_interactions), spec, ["M"]).methods["M"]
    err = np.array(est) - 1.2
    assert s.bias == pytest.approx(err.mean())
    assert s.mse == pytest.approx(np.mean(err ** 2))
    assert s.sd == pytest.approx(np.std(est, ddof=1))
    assert s.mse == pytest.approx(s.bias ** 2 + s.sd ** 2 * 3 / 4)
    # truth {0, 2}; null set has 6 covariates
    assert s.sensitivity == pytest.approx(np.mean([0.5, 0.5, 0.0, 1.0]))
    assert s.specificity == pytest.approx(np.mean([1, 5 / 6, 1, 5 / 6]))
    assert s.mcse_bias == pytest.approx(np.std(err, ddof=1) / 2)


def test_failure_cap():
    spec = get_scenario(1)
    recs = _records([1.0] * 98 + [math.nan] * 2, [()] * 100)
    with pytest.raises(SimulationError):
        summarize(recs, spec, ["M"])
    ok = summarize(_records([1.0] * 99 + [math.nan], [()] * 100), spec, ["M"])
    assert ok.methods["M"].n_failed == 1


def test_worker_count_does_not_change_results():
    spec = get_scenario(2)
    kw = dict(methods=("S.Diff", "IntLASSO", "GLAVeS"), replicates=4, base_seed=9)
    a = run_scenario(spec, workers=1, **kw)
    b = run_scenario(spec, workers=3, **kw)
    for m in kw["methods"]:
        np.testing.assert_array_equal(a.estimates[m], b.estimates[m])
    assert a.methods == b.methods


def test_sdiff_and_ols_selection_conventions():
    s = run_scenario(get_scenario(5), methods=("S.Diff", "OLS"), replicates=3)
    assert (s.methods["S.Diff"].sensitivity, s.methods["S.Diff"].specificity) == (0.0, 1.0)
    assert (s.methods["OLS"].sensitivity, s.methods["OLS"].specificity) == (1.0, 0.0)


def test_motivating_study_shape_and_truths():
    res = run_motivating_study(replicates=20, seed=1)
    assert len(res.rows) == 6
    truths = {(r["distribution"], r["truth"]): r["true_tate"] for r in res.rows}
    assert truths[("different", "interaction")] == 2.0
    assert truths[("same", "interaction")] == 1.0
    for r in res.rows:
        for model in ("A", "A+X", "A+X+AX"):
            assert r[f"mse_{model}"] >= 0


def test_motivating_study_matching_model_wins_same_distribution():
    res = run_motivating_study(replicates=1000, seed=3)
    match = {"unrelated": "A", "related": "A+X", "interaction": "A+X+AX"}
    for r in res.rows:
        if r["distribution"] != "same":
            continue
        mses = {m: r[f"mse_{m}"] for m in match.values()}
        assert min(mses, key=mses.get) == match[r["truth"]]
