import itertools

import numpy as np
import pytest

from shiftcal.calibrators import TemperatureScaling
from shiftcal.data import CalibSet
from shiftcal.ensemble import (
    CalibratedEnsemble,
    Member,
    MemberSet,
    calibrate_then_ensemble,
    ensemble_then_calibrate,
    mean_probs,
    pseudo_logits,
    sample_member_combinations,
)
from shiftcal.metrics import brier, nll, softmax


def members(seed=0, k=3, n=400, c=4):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, n)
    out = []
    for _ in range(k):
        z_cal = 6 * np.eye(c)[y] + rng.normal(size=(n, c)) * 2
        out.append(Member(rng.normal(size=(100, c)) * 4, CalibSet(z_cal, y)))
    return MemberSet(out)


def test_mean_probs():
    a, b = np.array([[0.2, 0.8]]), np.array([[0.6, 0.4]])
    np.testing.assert_allclose(mean_probs([a, b]), [[0.4, 0.6]])
    with pytest.raises(ValueError, match="shape mismatch"):
        mean_probs([a, np.ones((2, 2)) / 2])
    with pytest.raises(ValueError):
        mean_probs([])


def test_pseudo_logits_round_trip():
    p = softmax(np.random.default_rng(0).normal(size=(20, 5)))
    np.testing.assert_allclose(softmax(pseudo_logits(p)), p, atol=1e-12)


def test_convex_metrics_obey_jensen():
    rng = np.random.default_rng(1)
    for _ in range(100):
        y = rng.integers(0, 3, 30)
        ps = [softmax(rng.normal(size=(30, 3)) * 3) for _ in range(3)]
        avg = mean_probs(ps)
        assert brier(avg, y) <= np.mean([brier(p, y) for p in ps]) + 1e-12
        assert nll(avg, y) <= np.mean([nll(p, y) for p in ps]) + 1e-12


def test_member_set_validation():
    ms = members()
    with pytest.raises(ValueError, match="at least 2"):
        MemberSet(ms.members[:1])
    other = Member(ms.members[0].eval_logits, CalibSet(ms.members[0].calib.logits, np.zeros(400, dtype=int)))
    with pytest.raises(ValueError, match="targets differ"):
        MemberSet((ms.members[0], other))


def test_orderings_produce_distributions():
    ms = members()
    for f in (calibrate_then_ensemble, ensemble_then_calibrate):
        p = f(ms, "TS")
        assert p.shape == (100, 4)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_pre_equals_manual_average():
    ms = members(2)
    manual = mean_probs([TemperatureScaling().fit(m.calib.logits, m.calib.targets).predict_proba(m.eval_logits)
                         for m in ms.members])
    np.testing.assert_allclose(calibrate_then_ensemble(ms, "TS"), manual, atol=1e-15)


def test_callable_fitter_and_member_errors():
    ms = members(3)
    fitted = []

    def fitter(calib):
        fitted.append(calib)
        return TemperatureScaling().fit(calib.logits, calib.targets)

    calibrate_then_ensemble(ms, fitter)
    assert len(fitted) == 3

    def broken(calib):
        raise RuntimeError("boom")

    with pytest.raises(ValueError, match="member 0: boom"):
        CalibratedEnsemble(broken).fit([m.calib for m in ms.members])


def test_bad_order():
    with pytest.raises(ValueError):
        CalibratedEnsemble("TS", "middle")


class TestCombinations:
    def test_all_distinct(self):
        combos = sample_member_combinations(6, 3, 20, seed=0)
        assert len(set(combos)) == 20
        assert set(combos) == set(itertools.combinations(range(6), 3))

    def test_deterministic(self):
        assert sample_member_combinations(8, 3, 5, 1) == sample_member_combinations(8, 3, 5, 1)

    @pytest.mark.parametrize("args", [(3, 4, 1), (3, 3, 2), (5, 0, 1)])
    def test_bounds(self, args):
        with pytest.raises(ValueError):
            sample_member_combinations(*args)
