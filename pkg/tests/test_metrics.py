import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from depthcoeff.errors import EmptyMaskError, InvalidGTError, InvalidInputError
from depthcoeff.metrics import DEFAULT_DELTA_THRESHOLDS, evaluate, tmae_saturation_rate

from oracles import brute_force_metrics


def _random_pair(rng, shape=(8, 8)):
    gt = rng.uniform(0.5, 80.0, shape)
    pred = gt + rng.normal(0, rng.uniform(0.1, 5.0), shape)
    pred = np.abs(pred) + 0.01
    gt[rng.random(shape) < 0.3] = 0
    pred[rng.random(shape) < 0.1] = 0
    gt.flat[0] = pred.flat[0] = 10.0  # guarantee a shared pixel
    return pred, gt


def test_perfect_prediction():
    gt = np.array([[1.0, 5.0], [0.0, 20.0]])
    rep = evaluate(gt, gt)
    assert rep.rmse == rep.mae == rep.tmae == rep.trmse == rep.imae == 0.0
    assert rep.delta == (1.0,) * 5
    assert rep.n_pixels == 3


def test_two_error_example():
    gt = np.array([10.0, 10.0])
    rep = evaluate(gt + [0.3, 2.0], gt, t=1.0)
    assert rep.tmae == pytest.approx(0.65, abs=1e-12)
    assert rep.trmse == pytest.approx(math.sqrt(1.09 / 2), abs=1e-12)
    assert rep.trmse == pytest.approx(0.7382, abs=1e-4)
    assert rep.mae == pytest.approx(1.15, abs=1e-12)
    assert rep.rmse == pytest.approx(math.sqrt(4.09 / 2), abs=1e-12)
    assert tmae_saturation_rate(gt + [0.3, 2.0], gt, t=1.0) == 0.5


def test_delta_example():
    rep = evaluate(np.array([1.2, 2.0]), np.array([1.0, 1.0]), delta_thresholds=[1.25])
    assert rep.delta == (0.5,)


def test_inverse_metrics_in_per_km():
    rep = evaluate(np.array([4.0]), np.array([5.0]))
    assert rep.imae == pytest.approx(50.0)
    assert rep.irmse == pytest.approx(50.0)
    assert rep.mre == pytest.approx(0.2)


def test_saturation_identity():
    gt = np.full(4, 10.0)
    pred = gt + [3.0, -2.0, 1.0, 7.5]
    assert tmae_saturation_rate(pred, gt, t=1.0) == 1.0
    assert evaluate(pred, gt, t=1.0).tmae == 1.0
    assert tmae_saturation_rate(gt, gt) == 0.0


def test_errors():
    with pytest.raises(EmptyMaskError):
        evaluate(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    with pytest.raises(InvalidGTError):
        evaluate(np.array([1.0, 1.0]), np.array([1.0, -2.0]))
    with pytest.raises(InvalidInputError):
        evaluate(np.ones(2), np.ones(2), t=0.0)
    with pytest.raises(InvalidInputError):
        evaluate(np.ones(2), np.ones(2), delta_thresholds=[1.25, 1.05])
    with pytest.raises(InvalidInputError):
        evaluate(np.ones(2), np.ones(3))


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pred, gt = _random_pair(rng)
        t = float(rng.uniform(0.1, 3.0))
        rep = evaluate(pred, gt, t=t)
        ref = brute_force_metrics(pred, gt, t, DEFAULT_DELTA_THRESHOLDS)
        for name in ("rmse", "mae", "mre", "imae", "irmse", "tmae", "trmse"):
            assert getattr(rep, name) == pytest.approx(ref[name], rel=1e-12, abs=1e-12), name
        assert list(rep.delta) == ref["delta"]
        assert rep.n_pixels == ref["n_pixels"]


def test_large_threshold_recovers_plain_errors():
    rng = np.random.default_rng(1)
    pred, gt = _random_pair(rng, (16, 16))
    rep = evaluate(pred, gt, t=1e9)
    assert rep.tmae == pytest.approx(rep.mae, abs=1e-9)
    assert rep.trmse == pytest.approx(rep.rmse, abs=1e-9)


def test_csv_and_table():
    rep = evaluate(np.array([10.3, 12.0]), np.array([10.0, 10.0]))
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",")[:7] == ["rmse", "mae", "mre", "imae", "irmse", "tmae", "trmse"]
    assert len(lines[1].split(",")) == len(lines[0].split(","))
    assert "delta_1.25" in rep.to_table()


depths = arrays(np.float64, 12, elements=st.floats(0.1, 100.0))


@settings(max_examples=200, deadline=None)
@given(depths, depths, st.floats(0.01, 10.0))
def test_report_invariants(pred, gt, t):
    rep = evaluate(pred, gt, t=t)
    assert rep.tmae <= min(rep.mae, t) + 1e-12
    assert rep.trmse <= min(rep.rmse, t) + 1e-12
    assert all(0 <= d <= 1 for d in rep.delta)
    assert list(rep.delta) == sorted(rep.delta)
