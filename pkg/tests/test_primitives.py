import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.isotonic import isotonic_regression

from oracles import brute_force_isotonic
from shiftcal.calibrators._primitives import (
    IsotonicMap,
    coordinate_search,
    energy,
    fit_gaussian,
    gaussian_pdf,
    minimize_scalar_nll,
    pava,
)


class TestGoldenSection:
    @pytest.mark.parametrize("target", [0.07, 1.0, 3.3, 19.9])
    def test_quadratic(self, target):
        x = minimize_scalar_nll(lambda t: (t - target) ** 2, 0.05, 20.0, 1e-6)
        assert x == pytest.approx(target, abs=1e-5)

    def test_boundary_minimum(self):
        assert minimize_scalar_nll(lambda t: t, 0.05, 20.0, 1e-6) == pytest.approx(0.05, abs=1e-5)

    def test_non_finite_objective_raises(self):
        with pytest.raises(FloatingPointError):
            minimize_scalar_nll(lambda t: math.nan, 0.0, 1.0)


def test_coordinate_search_never_worsens():
    f = lambda v: (v[0] - 1) ** 2 + 3 * (v[1] + 2) ** 2 + v[0] * v[1]
    x, val = coordinate_search(f, [0.0, 0.0], [(-5, 5), (-5, 5)], 1e-6, 200)
    assert val <= f([0.0, 0.0])
    # analytic minimum: 2(x-1)+y=0, 6(y+2)+x=0
    sol = np.linalg.solve([[2, 1], [1, 6]], [2, -12])
    np.testing.assert_allclose(x, sol, atol=1e-3)


class TestPava:
    def test_single(self):
        np.testing.assert_array_equal(pava([0.3]), [0.3])

    def test_already_monotone(self):
        np.testing.assert_array_equal(pava([0.0, 0.5, 1.0]), [0.0, 0.5, 1.0])

    def test_pooled(self):
        np.testing.assert_allclose(pava([3.0, 1.0, 2.0]), [2.0, 2.0, 2.0], atol=1e-12)

    def test_weighted(self):
        np.testing.assert_allclose(pava([1.0, 0.0], [3.0, 1.0]), [0.75, 0.75], atol=1e-12)

    def test_against_exact_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            y = rng.integers(0, 4, n) / 3.0 if rng.random() < 0.5 else rng.random(n)
            w = rng.uniform(0.1, 3.0, n)
            np.testing.assert_allclose(pava(y, w), brute_force_isotonic(y, w), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=60))
    def test_properties(self, y):
        fit = pava(y)
        assert np.all(np.diff(fit) >= -1e-12)
        np.testing.assert_allclose(fit, isotonic_regression(y), atol=1e-9)
        assert math.fsum(fit) == pytest.approx(math.fsum(y), abs=1e-8)
        np.testing.assert_allclose(pava(fit), fit, atol=1e-12)


class TestIsotonicMap:
    def test_clamps_outside_range(self):
        m = IsotonicMap.fit([0.2, 0.4, 0.6], [0.0, 1.0, 1.0])
        assert m([0.0])[0] == 0.0 and m([1.0])[0] == 1.0

    def test_tied_inputs_pooled(self):
        m = IsotonicMap.fit([0.5, 0.5, 0.5, 0.9], [0.0, 1.0, 1.0, 1.0])
        assert m([0.5])[0] == pytest.approx(2 / 3)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        m = IsotonicMap.fit(rng.random(50), rng.random(50))
        q = rng.random(20)
        np.testing.assert_array_equal(IsotonicMap.from_dict(m.to_dict())(q), m(q))


def test_energy_is_negative_logsumexp():
    z = np.array([[0.0, 0.0], [1000.0, 0.0]])
    np.testing.assert_allclose(energy(z), [-math.log(2.0), -1000.0], atol=1e-12)


def test_gaussian_fit_and_pdf():
    mu, sigma = fit_gaussian(np.array([1.0, 3.0]))
    assert (mu, sigma) == (2.0, 1.0)
    assert gaussian_pdf(np.array([2.0]), mu, sigma)[0] == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert fit_gaussian(np.array([4.0, 4.0]))[1] == 1e-6
