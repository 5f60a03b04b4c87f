import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metasurf import metrics
from metasurf.errors import ContractError


def _designs_with_ratio(ratio, m, rng):
    """m designs whose MSE/Var equals ``ratio`` exactly (up to rounding)."""
    targets = rng.normal(size=(m, 100))
    evals = []
    for t in targets:
        var = t.var()
        achieved = t + np.sqrt(ratio * var)  # constant offset: MSE = ratio * var
        evals.append(metrics.evaluate_design(t, achieved))
    return evals


def test_mae_ave_examples():
    t = np.linspace(-1, 1, 100)
    assert metrics.mae_ave(metrics.evaluate_designs([t], [t])) == 0.0
    assert metrics.mae_ave(metrics.evaluate_designs([np.ones(100)], [np.zeros(100)])) == 1.0
    assert metrics.mae_ave([0.02, 0.08]) == pytest.approx(0.05)
    with pytest.raises(ContractError):
        metrics.mae_ave([])


def test_acc_values_from_the_comparison_table():
    assert metrics.acc_ave(0.0533) == pytest.approx(0.97335, abs=1e-12)
    assert round(metrics.acc_ave(0.0533), 4) == 0.9734
    assert round(metrics.acc_ave(0.0154), 4) == 0.9923
    assert metrics.acc_ave(0.0) == 1.0
    assert round(metrics.acc_min([0.1, 0.5736]), 4) == 0.7132
    with pytest.raises(ContractError):
        metrics.acc_ave(2.5)
    with pytest.raises(ContractError):
        metrics.acc_min([])


@given(st.lists(st.floats(0, 2), min_size=1, max_size=20))
def test_acc_min_never_exceeds_acc_ave(maes):
    assert metrics.acc_min(maes) <= metrics.acc_ave(metrics.mae_ave(maes)) + 1e-12
    if len(set(maes)) == 1:
        assert metrics.acc_min(maes) == pytest.approx(metrics.acc_ave(maes[0]))


def test_r2_modes(rng):
    perfect = metrics.evaluate_designs(rng.normal(size=(4, 100)), np.zeros((4, 100)))
    perfect = [metrics.evaluate_design(e.target, e.target) for e in perfect]
    assert metrics.r2(perfect, "mean")[0] == 1.0
    assert metrics.r2(perfect, "paper_literal")[0] == 1.0
    three = _designs_with_ratio(0.1, 3, rng)
    assert metrics.r2(three, "mean")[0] == pytest.approx(0.9)
    assert metrics.r2(three, "paper_literal")[0] == pytest.approx(0.7)
    one = three[:1]
    assert metrics.r2(one, "mean")[0] == pytest.approx(metrics.r2(one, "paper_literal")[0])
    with pytest.raises(ContractError):
        metrics.r2(three, "median")


def test_r2_skips_constant_targets(rng):
    evals = _designs_with_ratio(0.2, 2, rng)
    evals.append(metrics.evaluate_design(np.ones(100), np.zeros(100)))
    value, skipped = metrics.r2(evals)
    assert skipped == 1
    assert value == pytest.approx(0.8)


def test_report_json_keys(rng):
    evals = _designs_with_ratio(0.1, 5, rng)
    rep = metrics.report(evals)
    data = json.loads(rep.to_json())
    assert set(data) == {"mae_ave", "acc_ave", "acc_min", "r2_ave", "r2_paper_literal", "m",
                         "skipped_zero_var"}
    assert data["m"] == 5 and data["skipped_zero_var"] == 0


def test_count_mismatch():
    with pytest.raises(ContractError):
        metrics.evaluate_designs(np.zeros((2, 100)), np.zeros((3, 100)))
