import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itomap.chain import ChainSpec, simulate_chain
from itomap.errors import MomentConditionError, ValidationError
from itomap.laws import Gaussian, JumpTransform, PointMass, TwoPoint, Uniform
from itomap.levy import (
    RegimeLevyParams,
    check_moment_condition,
    euler_frozen_at_grid,
    make_grid,
    power_jump_family,
    simulate_levy,
)

from conftest import mc_mean

SYM = ChainSpec.symmetric(2, 1.0)


def params(mu=(0.0, 0.0), sigma=(1.0, 1.0), rate=0.0, law=None, gamma=None):
    return RegimeLevyParams(
        np.array(mu), np.array(sigma), gamma or JumpTransform.identity(len(mu)), rate, law or PointMass(0.0)
    )


def terminal(p, n, spec=SYM, seed=3, step=2.0**-6):
    out = np.empty(n)
    for k in range(n):
        chain = simulate_chain(spec, 1.0, seed, path_id=k)
        out[k] = simulate_levy(p, chain, step, seed, path_id=k).value_at(1.0)[0]
    return out


def test_brownian_variance_is_horizon():
    x = terminal(params(), 20_000)
    var = np.var(x, ddof=1)
    se = np.sqrt(np.var(x**2, ddof=1) / len(x))
    assert abs(var - 1.0) <= 4 * se


def test_pure_modulated_drift_is_exact():
    p = params(mu=(0.0, 1.0), sigma=(0.0, 0.0))
    for k in range(50):
        chain = simulate_chain(SYM, 1.0, 8, path_id=k)
        path = simulate_levy(p, chain, 2.0**-4, 8, path_id=k)
        occ = chain.occupation(1.0, 2)[0]
        assert path.value_at(1.0)[0] == pytest.approx(occ[1], abs=1e-14)


def test_unit_jumps_count_poisson():
    p = params(sigma=(0.0, 0.0), rate=1.0, law=PointMass(1.0))
    x = terminal(p, 20_000)
    assert np.all(x == np.round(x))
    mean, se = mc_mean(x)
    assert abs(mean - 1.0) <= 4 * se


def test_nonpositive_step_is_rejected():
    with pytest.raises(ValidationError):
        make_grid(1.0, 0.0)


def test_cubic_transform_on_gaussian_fails_moment_check():
    p = params(rate=1.0, law=Gaussian(), gamma=JumpTransform.affine_odd([1.0, 1.0], [0.0, 0.5]))
    report = check_moment_condition(p, 1e-3, 1.0)
    assert not report.passed
    assert "state 1" in report.failures[0] and len(report.failures) == 1
    with pytest.raises(MomentConditionError):
        simulate_levy(p, simulate_chain(SYM, 1.0, 1), 0.1, 1)


def test_bounded_and_gaussian_laws_pass_moment_check():
    assert check_moment_condition(params(rate=1.0, law=Uniform(-1, 1)), 50.0, 1.0).passed
    lin = JumpTransform.linear([2.0, 0.5])
    assert check_moment_condition(params(rate=1.0, law=Gaussian(), gamma=lin), 50.0, 1.0).passed


def test_brownian_power_jumps_vanish():
    chain = simulate_chain(SYM, 1.0, 2)
    p = params()
    fam = power_jump_family(simulate_levy(p, chain, 2.0**-6, 2), p, chain, 3)
    assert np.all(fam.raw[1:] == 0.0) and np.all(fam.martingale[1:] == 0.0)


def test_second_teugels_martingale_of_unit_jumps_is_null():
    p = params(sigma=(0.0, 0.0), rate=1.0, law=PointMass(1.0))
    vals = np.empty(20_000)
    for k in range(len(vals)):
        chain = simulate_chain(SYM, 1.0, 4, path_id=k)
        path = simulate_levy(p, chain, 0.25, 4, path_id=k)
        fam = power_jump_family(path, p, chain, 2, np.array([1.0]))
        assert fam.raw[1, 0] == len(path.jump_times)
        vals[k] = fam.martingale[1, 0]
    mean, se = mc_mean(vals)
    assert abs(mean) <= 4 * se


def test_symmetric_unit_jumps_third_power_equals_first_jump_part():
    p = params(rate=2.0, law=TwoPoint(-1.0, 1.0))
    for k in range(30):
        chain = simulate_chain(SYM, 1.0, 6, path_id=k)
        path = simulate_levy(p, chain, 2.0**-5, 6, path_id=k)
        fam = power_jump_family(path, p, chain, 3)
        jump_part_1 = path.jump_sum(fam.times, 1) - fam.compensator[0]
        assert np.array_equal(fam.martingale[2], jump_part_1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), rate=st.floats(0.5, 20.0))
def test_jump_bookkeeping_invariants(seed, rate):
    p = params(mu=(0.3, -0.1), sigma=(1.0, 0.5), rate=rate, law=Gaussian(0.1, 1.0),
               gamma=JumpTransform.linear([1.0, 2.0]))
    chain = simulate_chain(SYM, 1.0, seed)
    path = simulate_levy(p, chain, 2.0**-5, seed)
    fam = power_jump_family(path, p, chain, 4)
    # quadratic variation of jumps equals X^(2)(T) exactly
    assert fam.raw[1, -1] == pytest.approx(np.sum(path.jump_applied**2), rel=1e-12, abs=1e-12)
    # even orders are nondecreasing
    assert np.all(np.diff(fam.raw[1]) >= 0) and np.all(np.diff(fam.raw[3]) >= 0)
    # applied jumps use the state just before each jump
    states = chain.state_before(path.jump_times)
    assert np.allclose(path.jump_applied, p.gamma.apply(states, path.jump_marks))
    # jumps never coincide with chain epochs
    assert not np.intersect1d(path.jump_times, chain.epochs).size
    # the continuous part has no jumps: removing jumps leaves knot_cont
    assert np.allclose(path.value_at(path.knot_times) - path.jump_sum(path.knot_times), path.knot_cont)


def test_jump_part_is_invariant_under_grid_refinement():
    p = params(rate=3.0, law=Gaussian())
    chain = simulate_chain(SYM, 1.0, 12)
    coarse = simulate_levy(p, chain, 2.0**-3, 12)
    fine = simulate_levy(p, chain, 2.0**-9, 12)
    assert np.array_equal(coarse.jump_times, fine.jump_times)
    t = make_grid(1.0, 2.0**-3)
    for k in (1, 2, 3):
        assert np.array_equal(coarse.jump_sum(t, k), fine.jump_sum(t, k))


def test_frozen_grid_scheme_has_strong_order_half():
    p = params(mu=(1.0, -1.0), sigma=(0.5, 2.0))
    spec = ChainSpec.symmetric(2, 4.0)
    steps = [2.0**-4, 2.0**-6, 2.0**-8]
    err = np.zeros((len(steps), 4000))
    for k in range(err.shape[1]):
        chain = simulate_chain(spec, 1.0, 21, path_id=k)
        ref = simulate_levy(p, chain, 2.0**-10, 21, path_id=k)
        for s, step in enumerate(steps):
            err[s, k] = euler_frozen_at_grid(ref, p, chain, step)[-1] - ref.value_at(1.0)[0]
    rms = np.sqrt(np.mean(err**2, axis=1))
    assert rms[0] / rms[1] >= 1.8 and rms[1] / rms[2] >= 1.8


def test_frozen_scheme_is_exact_without_modulation():
    p = params(mu=(0.2, 0.2), sigma=(1.3, 1.3), rate=2.0, law=Gaussian())
    chain = simulate_chain(SYM, 1.0, 5)
    path = simulate_levy(p, chain, 2.0**-7, 5)
    coarse = euler_frozen_at_grid(path, p, chain, 2.0**-3)
    assert np.allclose(coarse, path.value_at(make_grid(1.0, 2.0**-3)), atol=1e-12)
