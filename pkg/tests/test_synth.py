import numpy as np
import pytest

from shiftcal.data import Role
from shiftcal.harness.synth import SynthConfig, split_names, synth_generate, synth_members, synth_train_set
from shiftcal.metrics import ece, softmax


def small(**kw):
    return SynthConfig(n_per_split=300, n_ood=100, **kw)


def test_split_layout():
    sets = synth_generate(small(sigma_shift=(2.0, 3.0)))
    assert [s.role for s in sets] == [Role.ID_CALIB, Role.ID_TEST, Role.SHIFTED_TEST, Role.SHIFTED_TEST, Role.OOD_POOL]
    assert [s.name for s in sets] == split_names(small(sigma_shift=(2.0, 3.0)))
    assert sets[-1].labels is None
    assert all(s.embeddings is not None for s in sets)


def test_deterministic_and_seed_sensitive():
    a, b, c = synth_generate(small()), synth_generate(small()), synth_generate(small(seed=1))
    for x, y in zip(a, b):
        assert x.records == y.records
    assert a[0].records != c[0].records


def test_feature_dim_and_embeddings():
    s = synth_generate(small(class_count=3, feature_dim=6))[0]
    assert s.logits.shape == (300, 3)
    assert s.embeddings.shape == (300, 6)
    np.testing.assert_allclose(s.embeddings[:, :3], s.logits, atol=1.0)


def test_shift_lowers_accuracy_and_raises_ece():
    cal, test, shifted, _ = synth_generate(SynthConfig(seed=3))
    acc = lambda s: np.mean(s.logits.argmax(axis=1) == s.labels)
    assert acc(shifted) < acc(test)
    assert ece(softmax(shifted.logits), shifted.labels) > ece(softmax(test.logits), test.labels)


def test_prevalence():
    s = synth_generate(SynthConfig(class_count=2, prevalence=(0.9, 0.1), n_per_split=5000, n_ood=10))[0]
    assert np.mean(s.labels == 0) == pytest.approx(0.9, abs=0.02)


@pytest.mark.parametrize("kw", [dict(class_count=1), dict(feature_dim=2), dict(sigma_id=0.0),
                                dict(prevalence=(0.5, 0.6, 0, 0, 0))])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)


def test_train_split_is_disjoint_from_calibration():
    emb, y = synth_train_set(small())
    assert emb.shape == (300, 5)
    assert not np.array_equal(emb, synth_generate(small())[0].embeddings)


def test_members_share_labels_and_correlate():
    ms = synth_members(small(), n_members=3, correlation=0.5)
    assert len(ms) == 3
    np.testing.assert_array_equal(ms[0][0].labels, ms[1][0].labels)
    d0 = ms[0][0].logits - 2.5 * np.eye(5)[ms[0][0].labels]
    d1 = ms[1][0].logits - 2.5 * np.eye(5)[ms[1][0].labels]
    assert np.corrcoef(d0.ravel(), d1.ravel())[0, 1] == pytest.approx(0.5, abs=0.05)


def test_member_correlation_bounds():
    with pytest.raises(ValueError):
        synth_members(small(), correlation=1.5)
