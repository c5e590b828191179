import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itomap.errors import ValidationError
from itomap.laws import (
    DoubleExponential,
    Gaussian,
    JumpTransform,
    PointMass,
    TwoPoint,
    Uniform,
    law_from_dict,
    transform_from_dict,
)


def test_gaussian_moments_match_double_factorials():
    law = Gaussian(0.0, 1.0)
    assert [law.moment(k) for k in range(7)] == [1, 0, 1, 0, 3, 0, 15]


def test_two_point_moments():
    law = TwoPoint(-1.0, 1.0)
    assert [law.moment(k) for k in range(5)] == [1, 0, 1, 0, 1]


def test_point_mass_moments():
    law = PointMass(1.5)
    assert law.moment(3) == pytest.approx(1.5**3)


@pytest.mark.parametrize(
    "law",
    [Gaussian(0.3, 0.7), TwoPoint(-1.0, 2.0, 0.3), Uniform(-0.5, 2.0), DoubleExponential(0.4, 2.0, 3.0)],
)
def test_sample_moments_agree_with_closed_form(law):
    rng = np.random.default_rng(1)
    x = law.sample(rng, 400_000)
    for k in (1, 2, 3):
        se = np.std(x**k) / np.sqrt(len(x))
        assert abs(np.mean(x**k) - law.moment(k)) < 5 * se


def test_law_round_trips_through_dict():
    law = DoubleExponential(0.4, 2.0, 3.0)
    assert law_from_dict(law.to_dict()) == law


def test_unknown_law_is_rejected():
    with pytest.raises(ValidationError):
        law_from_dict({"kind": "cauchy"})


def test_gaussian_tails_fail_cubic_exponential_moment():
    assert Gaussian().exp_moment_finite(1.0, 1)
    assert not Gaussian().exp_moment_finite(1e-6, 3)
    assert Uniform().exp_moment_finite(10.0, 3)


@settings(max_examples=50, deadline=None)
@given(
    beta=st.floats(-2, 2, allow_nan=False),
    kappa=st.floats(-1, 1, allow_nan=False),
    k=st.integers(1, 4),
)
def test_transform_power_moment_matches_quadrature(beta, kappa, k):
    law = Uniform(-1.0, 2.0)
    gamma = JumpTransform.affine_odd([beta], [kappa])
    x = np.linspace(-1.0, 2.0, 200_001)
    y = gamma.apply(0, x) ** k
    quad = np.sum((y[1:] + y[:-1]) / 2 * np.diff(x)) / 3.0
    assert gamma.power_moment(0, k, law) == pytest.approx(quad, rel=1e-6, abs=1e-8)


def test_transform_from_dict_broadcasts_scalars():
    t = transform_from_dict({"kind": "linear", "beta": 2.0}, 3)
    assert t.n_states == 3
    assert np.allclose(t.apply(2, np.array([1.0])), 2.0)
