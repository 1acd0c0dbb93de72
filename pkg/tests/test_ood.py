import numpy as np
import pytest

from shiftcal.calibrators import TemperatureScaling
from shiftcal.data import EvalSet, Role
from shiftcal.harness.synth import SynthConfig, synth_generate
from shiftcal.ood import OodPolicy, fit_with_ood, make_ood_calibset, ood_count


def make_sets(n_id=100, n_pool=50, c=3, seed=0, emb=False):
    rng = np.random.default_rng(seed)
    e_id = rng.normal(size=(n_id, 2)) if emb else None
    e_pool = rng.normal(size=(n_pool, 2)) if emb else None
    id_set = EvalSet.from_arrays(rng.normal(size=(n_id, c)) * 3, rng.integers(0, c, n_id), Role.ID_CALIB, "id", e_id)
    pool = EvalSet.from_arrays(rng.normal(size=(n_pool, c)), None, Role.OOD_POOL, "pool", e_pool)
    return id_set, pool


@pytest.mark.parametrize("n_id, ratio, expected", [(100, 0.1, 10), (15, 0.1, 2), (14, 0.1, 1), (4, 0.1, 0), (5, 0.1, 1)])
def test_ood_count_rounds_half_up(n_id, ratio, expected):
    assert ood_count(n_id, ratio) == expected


def test_uniform_targets():
    id_set, pool = make_sets()
    cs = make_ood_calibset(id_set, pool, OodPolicy(0.1, "uniform"))
    assert len(cs.logits) == 110 and cs.is_ood.sum() == 10
    np.testing.assert_array_equal(cs.targets[100:], np.full((10, 3), 1 / 3))
    np.testing.assert_array_equal(cs.targets[:100], np.eye(3)[id_set.labels])


def test_zero_targets():
    cs = make_ood_calibset(*make_sets(), OodPolicy(0.1, "zero"))
    assert not cs.targets[100:].any()


def test_draw_is_deterministic_without_duplicates():
    id_set, pool = make_sets()
    a = make_ood_calibset(id_set, pool, OodPolicy(0.2, seed=3))
    b = make_ood_calibset(id_set, pool, OodPolicy(0.2, seed=3))
    np.testing.assert_array_equal(a.logits, b.logits)
    assert len({tuple(r) for r in a.logits[100:]}) == 20


def test_embeddings_follow_rows():
    id_set, pool = make_sets(emb=True)
    assert make_ood_calibset(id_set, pool).embeddings.shape == (110, 2)
    id_set, pool = make_sets()
    id_emb = EvalSet.from_arrays(id_set.logits, id_set.labels, Role.ID_CALIB, "id", np.ones((100, 2)))
    cs = make_ood_calibset(id_emb, pool)
    assert np.isnan(cs.embeddings[100:]).all()


@pytest.mark.parametrize("kwargs, message", [
    (dict(n_id=4), "OOD count is zero"),
    (dict(n_pool=5), "insufficient pool"),
])
def test_errors(kwargs, message):
    with pytest.raises(ValueError, match=message):
        make_ood_calibset(*make_sets(**kwargs), OodPolicy(0.1))


def test_class_count_mismatch():
    id_set, _ = make_sets()
    _, pool = make_sets(c=4)
    with pytest.raises(ValueError, match="class count mismatch"):
        make_ood_calibset(id_set, pool)


def test_ratio_validated():
    for r in (0.0, 1.5):
        with pytest.raises(ValueError):
            OodPolicy(r)


@pytest.mark.parametrize("method", ["TS", "ETS", "IRM", "IROVaTS", "EBS"])
def test_fit_with_ood_names(method):
    id_set, pool = make_sets(n_id=300, n_pool=100)
    cal = fit_with_ood(method, id_set, pool)
    assert cal.ood_exposed_
    # the energy method's plain name already denotes outlier exposure
    assert cal.name == (method if method == "EBS" else method + "+OOD")


def test_unsupported_method():
    with pytest.raises(ValueError, match="unknown method"):
        fit_with_ood("IROVa", *make_sets())


def test_ebs_requires_zero_targets():
    with pytest.raises(ValueError):
        fit_with_ood("EBS", *make_sets(), OodPolicy(label_mode="uniform"))


def test_single_outlier_barely_moves_temperature():
    id_set, pool = make_sets(n_id=20000, n_pool=10, seed=1)
    plain = TemperatureScaling().fit(id_set.logits, id_set.labels).temperature_
    exposed = fit_with_ood("TS", id_set, pool, OodPolicy(1 / 20000)).temperature_
    assert abs(exposed - plain) <= 1e-3


def test_uniform_exposure_raises_temperature_on_average():
    diffs = []
    for seed in range(20):
        sets = synth_generate(SynthConfig(n_per_split=500, n_ood=200, sigma_ood=4.0, seed=seed))
        id_calib, pool = sets[0], sets[-1]
        plain = TemperatureScaling().fit(id_calib.logits, id_calib.labels).temperature_
        diffs.append(fit_with_ood("TS", id_calib, pool).temperature_ - plain)
    assert np.mean(diffs) >= 0
