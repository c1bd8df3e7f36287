import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from glvr.field import AnalyticScene, Box, Sphere
from glvr.scene import Ray, generate_ray
from glvr.verify import ChebyshevPolyRegressor, FitError, bernstein, color_profile, polyfit

from conftest import slab_field


def test_profile_empty_has_no_support():
    field = AnalyticScene([Sphere(0.0, (1, 0, 0), center=np.zeros(3), radius=1.0)])
    prof = color_profile(Ray([-3, 0, 0], [1, 0, 0]), field)
    assert np.all(prof.x == 0.0)
    assert not prof.support().any()
    assert prof.restricted()[0].size == 0


def test_profile_unit_medium_is_flat():
    field = slab_field(1.0, length=6.0, color=(0.7, 0.7, 0.7))
    prof = color_profile(Ray([0, 0, 0], [1, 0, 0]), field, delta_t=0.01)
    np.testing.assert_allclose(prof.x, prof.t, atol=1e-12)
    np.testing.assert_allclose(prof.color, 0.7)
    assert prof.x[-1] <= 6.0


def test_profile_monotone_and_misses(demo_scenes):
    scene = demo_scenes["blob"]
    prof = color_profile(generate_ray(scene.cameras[0], 20, 40), scene.field)
    assert np.all(np.diff(prof.x) >= 0)
    with pytest.raises(ValueError, match="misses"):
        color_profile(Ray([5, 5, 5], [1, 0, 0]), scene.field)


def test_blob_profile_is_a_bump_in_t(demo_scenes):
    scene = demo_scenes["blob"]
    prof = color_profile(generate_ray(scene.cameras[0], 32, 32), scene.field)
    nonzero = prof.color > 1e-6
    assert nonzero.any() and not nonzero.all()
    assert prof.support().sum() < 0.5 * len(prof.t)


def test_polyfit_constant():
    coef, err = polyfit(np.linspace(0, 3, 20), np.full(20, 0.42), 0)
    assert coef[0] == pytest.approx(0.42)
    assert err <= 1e-12


def test_polyfit_exact_quadratic():
    x = np.linspace(-2, 5, 50)
    coef, err = polyfit(x, 3 * x**2 - x + 2, 2)
    np.testing.assert_allclose(coef, [2, -1, 3], atol=1e-9)
    assert err < 1e-10


def test_polyfit_error_non_increasing():
    rng = np.random.default_rng(4)
    x = np.sort(rng.uniform(0, 10, 200))
    y = np.sin(x) + 0.1 * rng.normal(size=200)
    errs = [polyfit(x, y, d)[1] for d in range(10)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_rank_deficient_reports_condition():
    with pytest.raises(FitError, match="rank"):
        polyfit(np.ones(10), np.arange(10.0), 2)
    with pytest.raises(FitError):
        polyfit(np.arange(3.0), np.arange(3.0), 5)


def test_regressor_sklearn_api():
    x = np.linspace(0, 1, 30).reshape(-1, 1)
    model = ChebyshevPolyRegressor(degree=3).fit(x, x[:, 0] ** 3)
    assert model.score(x, x[:, 0] ** 3) == pytest.approx(1.0)
    np.testing.assert_allclose(model.coef_, [0, 0, 0, 1], atol=1e-10)
    assert clone(model).get_params() == {"degree": 3}
    assert model.condition_ < 1e3


def test_bernstein_identities():
    x = np.linspace(0, 1, 101)
    for n in (1, 5, 40, 300):
        np.testing.assert_allclose(bernstein(lambda s: 2.5, n, x), 2.5, atol=1e-10)
        np.testing.assert_allclose(bernstein(lambda s: s, n, x), x, atol=1e-10)
        np.testing.assert_allclose(bernstein(lambda s: s * s, n, x), x**2 + x * (1 - x) / n, atol=1e-10)


def test_bernstein_scalar_and_domain():
    assert bernstein(math.sqrt, 4, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bernstein(abs, 4, 1.5)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 200), x=st.floats(0, 1), seed=st.integers(0, 2**31))
def test_bernstein_is_convex_combination(n, x, seed):
    samples = np.random.default_rng(seed).normal(size=n + 1)
    f = lambda s: samples[int(round(s * n))]
    value = bernstein(f, n, x)
    assert samples.min() - 1e-9 <= value <= samples.max() + 1e-9
