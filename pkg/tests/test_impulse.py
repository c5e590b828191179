import numpy as np
import pytest

from itomap.chain import ChainSpec, counting_and_compensators, simulate_chain
from itomap.errors import ValidationError
from itomap.impulse import JumpLawSet, assemble_X, simulate_impulse
from itomap.laws import Gaussian, JumpTransform, PointMass, TwoPoint
from itomap.levy import RegimeLevyParams, make_grid, simulate_levy

from conftest import mc_mean

SYM = ChainSpec.symmetric(2, 2.0)
GRID = make_grid(1.0, 0.125)


def test_zero_impulses_vanish():
    laws = JumpLawSet.zero(2)
    assert laws.is_zero()
    chain = simulate_chain(SYM, 1.0, 1)
    imp = simulate_impulse(chain, laws, 3, 1)
    for i in range(2):
        for l in (1, 2, 3):
            assert np.all(imp.psi_bar(GRID, i, l, laws, SYM) == 0.0)


def test_point_mass_impulses_are_scaled_counts():
    c = 1.5
    laws = JumpLawSet((PointMass(c), PointMass(c)))
    for p in range(20):
        chain = simulate_chain(SYM, 1.0, 4, path_id=p)
        imp = simulate_impulse(chain, laws, 2, 4, path_id=p)
        phibar = counting_and_compensators(chain, SYM).martingale(GRID)
        for i in range(2):
            assert np.allclose(imp.psi_bar(GRID, i, 1, laws, SYM), c * phibar[:, i], rtol=0, atol=1e-14)


def test_two_point_second_power_is_counting_martingale():
    laws = JumpLawSet((TwoPoint(-1, 1), TwoPoint(-1, 1)))
    vals = []
    for p in range(20_000):
        chain = simulate_chain(SYM, 1.0, 7, path_id=p)
        imp = simulate_impulse(chain, laws, 2, 7, path_id=p)
        if p < 50:
            phibar = counting_and_compensators(chain, SYM).martingale(GRID)
            assert np.allclose(imp.psi_bar(GRID, 0, 2, laws, SYM), phibar[:, 0], atol=1e-14)
        vals.append(imp.psi_bar(1.0, 0, 1, laws, SYM)[0])
    mean, se = mc_mean(vals)
    assert abs(mean) <= 4 * se


def test_powers_jump_only_at_entries():
    laws = JumpLawSet((Gaussian(0.5, 1.0), Gaussian(-1.0, 2.0)))
    chain = simulate_chain(SYM, 1.0, 9)
    imp = simulate_impulse(chain, laws, 3, 9)
    for i in range(2):
        enter = chain.epochs[chain.states[1:] == i]
        u = imp.values[chain.states[1:] == i]
        for l in (1, 2, 3):
            before = imp.psi(enter - 1e-12, i, l)
            after = imp.psi(enter, i, l)
            assert np.allclose(after - before, u**l)
            assert imp.psi(1.0, i, l)[0] == pytest.approx(np.sum(u**l))


def test_order_beyond_moments_is_rejected():
    laws = JumpLawSet((PointMass(1.0), PointMass(1.0)), max_moment_order=4)
    with pytest.raises(ValidationError):
        simulate_impulse(simulate_chain(SYM, 1.0, 1), laws, 5, 1)


def test_non_psd_moment_sequence_is_rejected():
    class Bad(PointMass):
        def _raw_moment(self, k):
            return [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0][k]

    with pytest.raises(ValidationError):
        JumpLawSet((Bad(0.0),))


def test_assemble_adds_impulse_paths():
    p = RegimeLevyParams(np.zeros(2), np.ones(2), JumpTransform.identity(2), 1.0, TwoPoint(-1, 1))
    laws = JumpLawSet((TwoPoint(-1, 1), Gaussian()))
    chain = simulate_chain(SYM, 1.0, 3)
    levy = simulate_levy(p, chain, 2.0**-6, 3)
    imp = simulate_impulse(chain, laws, 1, 3)
    x = assemble_X(levy, imp, GRID)
    assert np.allclose(x, levy.value_at(GRID) + imp.psi_all(GRID, 1).sum(axis=1))
    zero = simulate_impulse(chain, JumpLawSet.zero(2), 1, 3)
    assert np.array_equal(assemble_X(levy, zero, GRID), levy.value_at(GRID))


def test_pure_impulse_process():
    p = RegimeLevyParams(np.zeros(2), np.zeros(2), JumpTransform.identity(2), 0.0, PointMass(0.0))
    laws = JumpLawSet((Gaussian(), Gaussian()))
    chain = simulate_chain(SYM, 1.0, 13)
    x = assemble_X(simulate_levy(p, chain, 2.0**-6, 13), simulate_impulse(chain, laws, 1, 13), GRID)
    imp = simulate_impulse(chain, laws, 1, 13)
    assert np.array_equal(x, imp.psi_all(GRID, 1).sum(axis=1))


def test_levy_increments_are_stationary():
    spec = ChainSpec(np.zeros((1, 1)), np.ones(1))
    p = RegimeLevyParams(np.zeros(1), np.ones(1), JumpTransform.identity(1), 2.0, Gaussian(0.5, 1.0))
    first, second = [], []
    for k in range(5000):
        chain = simulate_chain(spec, 1.0, 17, path_id=k)
        x = simulate_levy(p, chain, 2.0**-4, 17, path_id=k).value_at([0.0, 0.5, 1.0])
        first.append(x[1] - x[0])
        second.append(x[2] - x[1])
    m1, s1 = mc_mean(first)
    m2, s2 = mc_mean(second)
    z = (m1 - m2) / np.hypot(s1, s2)
    assert abs(z) < 2.576  # two-sided p > 0.01
