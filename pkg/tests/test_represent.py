import numpy as np
import pytest

from itomap.errors import LookAheadError, RefusalError, UnsupportedOrderError, ValidationError
from itomap.harness.config import canonical_config
from itomap.harness.engine import run_scenario
from itomap.represent import (
    PayoffSpec,
    estimate_predictable_representation,
    oracle_sample,
    poly_representation_oracle,
    replicate,
)
from itomap.represent.regression import fit_least_squares

CFG = canonical_config(K=2, L=2, paths={"estimation": 10_000, "evaluation": 10_000})


@pytest.fixture(scope="module")
def sets():
    return run_scenario(CFG, CFG.estimation_ids), run_scenario(CFG, CFG.evaluation_ids)


def test_counting_payoff_has_unit_integrand(sets):
    est, ev = sets
    e = estimate_predictable_representation(est, PayoffSpec("terminal_count", state=1))
    h = e.integrand_mean
    target = e.index(("Phibar_1", 0))
    assert np.all(np.abs(h[:, target] - 1.0) <= 0.05)
    others = np.delete(h, target, axis=1)
    assert np.all(np.abs(others) <= 0.05)
    assert replicate(e, ev).relative_error <= 0.05


def test_impulse_payoff_replicates(sets):
    est, ev = sets
    e = estimate_predictable_representation(est, PayoffSpec("terminal_impulse", state=0))
    assert np.all(np.abs(e.integrand_mean[:, e.index(("Psibar_0", 1))] - 1.0) <= 0.05)
    assert replicate(e, ev).relative_error <= 0.05


def test_full_process_in_x_form():
    cfg = canonical_config(K=1, L=1, paths={"estimation": 40_000, "evaluation": 10_000})
    est, ev = run_scenario(cfg, cfg.estimation_ids), run_scenario(cfg, cfg.evaluation_ids)
    e = estimate_predictable_representation(est, PayoffSpec("terminal_linear")).to_form("x")
    assert np.all(np.abs(e.integrand_mean[:, e.index(("Xteu", 1))] - 1.0) <= 0.05)
    for i in range(2):
        assert np.all(np.abs(e.integrand_mean[:, e.index((f"Psibar_{i}", 1))]) <= 0.05)
    assert e.residual <= 0.02
    assert replicate(e, ev).relative_error <= 0.02


def test_form_round_trip_is_identity(sets):
    est, _ = sets
    e = estimate_predictable_representation(est, PayoffSpec("terminal_square"))
    back = e.to_form("x").to_form("xbar")
    assert np.allclose(back.coef, e.coef, rtol=0, atol=4 * np.finfo(float).eps * np.abs(e.coef).max())
    assert e.to_form("xbar") is e
    x = e.to_form("x")
    assert np.allclose(replicate(x, sets[1]).relative_error, replicate(e, sets[1]).relative_error, rtol=1e-10)


def test_zero_payoff(sets):
    est, ev = sets
    e = estimate_predictable_representation(est, PayoffSpec("zero"))
    assert np.all(e.coef == 0.0)
    r = replicate(e, ev)
    assert r.rms_error == 0.0


def test_look_ahead_features_degrade_the_fit(sets):
    est, _ = sets
    honest = estimate_predictable_representation(est, PayoffSpec("terminal_square"))
    leaky = estimate_predictable_representation(est, PayoffSpec("terminal_square"), feature_shift=1)
    assert leaky.residual > honest.residual + 2 * (leaky.residual_stderr + honest.residual_stderr)


def test_overlapping_paths_refused(sets):
    est, _ = sets
    e = estimate_predictable_representation(est, PayoffSpec("terminal_count"))
    with pytest.raises(LookAheadError):
        replicate(e, est.subset(np.arange(100)))


def test_too_few_paths_refused(sets):
    est, _ = sets
    with pytest.raises(RefusalError):
        estimate_predictable_representation(est.subset(np.arange(200)), PayoffSpec("terminal_count"))


def test_bucket_arguments(sets):
    est, _ = sets
    e = estimate_predictable_representation(est, PayoffSpec("indicator", state=1), buckets=4)
    assert np.allclose(e.times, [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValidationError):
        estimate_predictable_representation(est, PayoffSpec("indicator"), buckets=3)
    with pytest.raises(ValidationError):
        estimate_predictable_representation(est, PayoffSpec("indicator"), buckets=[0.0, 0.3, 1.0])


def test_table_rows(sets):
    est, _ = sets
    e = estimate_predictable_representation(est, PayoffSpec("terminal_count"), buckets=2)
    rows = e.table()
    assert len(rows) == 2 * len(e.martingales)
    assert rows[0][:2] == (0, "Xteu^1")


def test_collinear_columns_are_dropped():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(500, 2))
    A = np.column_stack([a, a[:, 0] * 2.0])
    y = a @ [1.0, -1.0]
    fit = fit_least_squares(A, y)
    assert list(fit.kept) == [True, True, False]
    assert np.allclose(A @ fit.coef, y)


def test_unknown_payoff_rejected():
    with pytest.raises(ValidationError):
        PayoffSpec("digital")


# polynomial-representation oracle

@pytest.fixture(scope="module")
def sample():
    return oracle_sample(canonical_config(paths={"estimation": 1000, "evaluation": 1000}), np.arange(200), 2.0**-12)


def test_oracle_rejects_high_order(sample):
    with pytest.raises(UnsupportedOrderError):
        poly_representation_oracle(sample.config, 2, 1, 1, sample=sample)


def test_first_order_reconstruction_is_exact(sample):
    r = poly_representation_oracle(sample.config, 1, 0, 0, sample=sample)
    assert max(r.max_error) <= 1e-12 * max(1.0, r.lhs_rms)
    assert r.nonincreasing()


def test_counting_impulse_product_same_state(sample):
    r = poly_representation_oracle(sample.config, 0, 1, 1, 1, 1, sample=sample)
    assert r.max_error[-1] <= 1e-12
    r2 = poly_representation_oracle(sample.config, 0, 2, 1, 1, 1, sample=sample)
    assert r2.max_error[0] > r2.max_error[-1] and r2.nonincreasing()


def test_brownian_square_has_strong_order_half():
    cfg = canonical_config(
        chain={"intensities": [[0.0]], "initial_dist": [1.0]},
        levy={"mu0": 0.0, "sigma0": 1.0, "jump_rate": 0.0},
        impulse={"laws": {"kind": "point_mass", "value": 0.0}},
        paths={"estimation": 1000, "evaluation": 1000},
    )
    r = poly_representation_oracle(cfg, 2, 0, 0, steps=(2.0**-4, 2.0**-6, 2.0**-8), n_paths=2000)
    rms = r.rms_error
    assert rms[0] / rms[1] >= 1.8 and rms[1] / rms[2] >= 1.8


def test_oracle_accepts_a_bundle(small_canonical):
    r = poly_representation_oracle(small_canonical, 1, 1, 0, 0, 1, steps=(2.0**-6, 2.0**-8), n_paths=100)
    assert r.n_paths == 100 and r.steps == [2.0**-6, 2.0**-8]
    assert {"stochastic", "I7", "T1_drift"} <= set(r.terms[0])
    assert len(r.rows()) == 2


def test_steps_must_refine_the_sample(sample):
    with pytest.raises(ValidationError):
        poly_representation_oracle(sample.config, 1, 1, 0, steps=(2.0**-13,), sample=sample)
