import numpy as np
import pytest
from sklearn.exceptions import NotFittedError
from sklearn.neighbors import NearestNeighbors

from shiftcal.calibrators import EnergyBasedScaling, TemperatureScaling, calibrator_from_dict
from shiftcal.dac import DensityAwareCalibration, knn_mean_distances, softplus


def test_softplus():
    assert softplus(0.0) == pytest.approx(np.log(2.0))
    assert softplus(800.0) == 800.0
    assert softplus(-800.0) >= 0


def test_knn_matches_sklearn():
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(300, 4))
    q = rng.normal(size=(50, 4))
    d, _ = NearestNeighbors(n_neighbors=7).fit(ref).kneighbors(q)
    np.testing.assert_allclose(knn_mean_distances(q, ref, 7, chunk=16), d.mean(axis=1), atol=1e-10)


def test_knn_leave_one_out():
    rng = np.random.default_rng(1)
    ref = rng.normal(size=(100, 3))
    d, _ = NearestNeighbors(n_neighbors=6).fit(ref).kneighbors(ref)
    np.testing.assert_allclose(knn_mean_distances(ref, ref, 5, exclude_self=True), d[:, 1:].mean(axis=1), atol=1e-10)


def shifted_mix(seed=0, n=1500, c=4):
    """ID rows (noise 1) and shifted rows (noise 3) sharing one overconfident model."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, 2 * n)
    noise = np.r_[np.ones(n), np.full(n, 3.0)]
    feats = 3.0 * np.eye(c)[y] + rng.normal(size=(2 * n, c)) * noise[:, None]
    emb = feats + rng.normal(size=feats.shape) * 0.1
    return 2.0 * feats, y, emb, n


@pytest.fixture(scope="module")
def mix():
    return shifted_mix()


def test_distance_weight_learns_to_soften_far_rows(mix):
    z, y, emb, n = mix
    base = TemperatureScaling().fit(z, y)
    dac = DensityAwareCalibration(base).fit(z, y, emb)
    assert dac.params_[0] > 0
    scale = dac.temperature_scale(z, emb)
    assert scale[n:].mean() > scale[:n].mean()


def test_zero_weights_reproduce_base(mix):
    z, y, emb, _ = mix
    base = TemperatureScaling().fit(z, y)
    dac = DensityAwareCalibration(base).fit(z, y, emb)
    dac.params_ = np.zeros_like(dac.params_)
    np.testing.assert_allclose(dac.predict_proba(z, emb), base.predict_proba(z), atol=1e-12)


def test_energy_base_and_argmax(mix):
    z, y, emb, _ = mix
    base = EnergyBasedScaling().fit(z, y)
    dac = DensityAwareCalibration(base).fit(z, y, emb)
    np.testing.assert_array_equal(dac.predict(z, emb), z.argmax(axis=1))
    assert dac.name == "EBS+DAC"


def test_multiple_layers(mix):
    z, y, emb, _ = mix
    dac = DensityAwareCalibration(TemperatureScaling().fit(z, y)).fit(z, y, [emb, emb[:, :2]])
    assert dac.params_.shape == (3,)
    with pytest.raises(ValueError, match="embedding layers"):
        dac.predict_proba(z, emb)


def test_round_trip(mix):
    z, y, emb, _ = mix
    dac = DensityAwareCalibration(TemperatureScaling().fit(z, y), k=5).fit(z[:500], y[:500], emb[:500])
    back = calibrator_from_dict(dac.to_dict())
    np.testing.assert_array_equal(back.predict_proba(z[500:700], emb[500:700]), dac.predict_proba(z[500:700], emb[500:700]))


def test_errors(mix):
    z, y, emb, _ = mix
    base = TemperatureScaling().fit(z, y)
    with pytest.raises(NotFittedError):
        DensityAwareCalibration(base).predict_proba(z, emb)
    with pytest.raises(ValueError, match="needs embeddings"):
        DensityAwareCalibration(base).fit(z, y)
    bad = emb.copy()
    bad[0] = np.nan
    with pytest.raises(ValueError, match="missing embeddings"):
        DensityAwareCalibration(base).fit(z, y, bad)
