import math

import numpy as np
import pytest
from scipy import stats

from oracles import one_node_round, sensitivity_brute_force

from dpgossip.data import make_example
from dpgossip.privacy import (
    PrivacyError, PrivacyLedger, PrivacyParams, empirical_dp_check, laplace_density, node_rng,
    noise_for, perturb, sample_laplace_vector, sensitivity,
)


def test_sensitivity_formula():
    assert sensitivity(0.1, 100, 1) == pytest.approx(2.0)
    assert sensitivity(0.5, 1, 2) == pytest.approx(2.0)
    with pytest.raises(PrivacyError):
        sensitivity(0.0, 1, 1)


def test_sensitivity_brute_force():
    worst = sensitivity_brute_force(pairs=500, n=2, alpha=0.1)
    bound = sensitivity(0.1, 2, 1.0)
    assert worst <= bound + 1e-15
    assert worst >= 0.5 * bound


def test_laplace_density_and_determinism():
    assert laplace_density(0.0, 0.25) == pytest.approx(2.0)
    a = sample_laplace_vector(0.3, 5, np.random.default_rng(7))
    b = sample_laplace_vector(0.3, 5, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(PrivacyError):
        sample_laplace_vector(0.0, 5, np.random.default_rng(0))


def test_laplace_distribution():
    mu = 0.5
    x = sample_laplace_vector(mu, 1_000_000, np.random.default_rng(3))
    assert 0.497 <= np.abs(x).mean() <= 0.503
    ks = stats.kstest(x[:100_000], stats.laplace(scale=mu).cdf).statistic
    assert ks <= 0.01


def test_perturb_disabled_and_limit():
    theta = np.array([0.3, -1.0, 2.0])
    off = PrivacyParams.disabled(1.0, 3, 0.1)
    np.testing.assert_array_equal(perturb(theta, off, np.random.default_rng(0)), theta)
    near = PrivacyParams(1e6, 1.0, 3, 0.1)
    np.testing.assert_allclose(perturb(theta, near, np.random.default_rng(0)), theta, atol=1e-3)


def test_variance_ratio():
    rng = np.random.default_rng(4)
    strong = noise_for(PrivacyParams(0.1, 1.0, 100_000, 0.1), rng)
    weak = noise_for(PrivacyParams(1.0, 1.0, 100_000, 0.1), rng)
    assert strong.var() / weak.var() == pytest.approx(100, rel=0.10)


def test_params_validation():
    with pytest.raises(PrivacyError):
        PrivacyParams(0.0, 1.0, 2, 0.1)
    with pytest.raises(PrivacyError):
        PrivacyParams(math.inf, 1.0, 2, 0.1)
    assert PrivacyParams.disabled(1.0, 2, 0.1).scale == 0.0
    assert PrivacyParams(0.5, 1.0, 4, 0.1).scale == pytest.approx(0.4 / 0.5)


def test_node_streams_are_independent():
    a = node_rng(0, 0).laplace(size=4)
    b = node_rng(0, 1).laplace(size=4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, node_rng(0, 0).laplace(size=4))


def test_ledger_parallel_composition():
    led = PrivacyLedger(0.5)
    led.record_round([0, 1, 2])
    led.record_round([3, 4, 5])
    assert led.composed_epsilon == 0.5 and led.rounds == 2 and led.examples_consumed == 6
    with pytest.raises(PrivacyError, match="reused"):
        led.record_round([6, 2, 7])
    with pytest.raises(PrivacyError, match="same example"):
        led.record_round([8, 8, 9])


def _pair():
    return [make_example(np.array([1.0, 0.0]), 1, 0)], [make_example(np.array([-1.0, 0.0]), 1, 0)]


def _update(epsilon):
    def run(dataset, rng):
        return one_node_round(dataset[0], 0.1, 2, 1.0, epsilon, rng)
    return run


def test_dp_check_identical_datasets():
    d, _ = _pair()
    rep = empirical_dp_check(_update(0.5), (d, d), 0.5, trials=4000, bins=20)
    assert rep.max_ratio <= 1.0 + rep.slack


def test_dp_check_small_run_and_csv():
    d, d2 = _pair()
    rep = empirical_dp_check(_update(0.5), (d, d2), 0.5, trials=20_000, bins=40)
    assert rep.passed
    assert rep.max_ratio <= math.exp(0.5) * 1.1
    lines = rep.to_csv().splitlines()
    assert lines[0] == "bin,count_X,count_X_prime,ratio" and len(lines) == 41


def test_dp_check_detects_missing_noise():
    d, d2 = _pair()
    rep = empirical_dp_check(_update(None), (d, d2), 0.5, trials=1000, bins=40)
    assert not rep.passed and math.isinf(rep.max_ratio)


def test_dp_check_preconditions():
    d, d2 = _pair()
    far = [make_example(np.array([1.0, 0.0]), 1, 0), make_example(np.array([0.0, 1.0]), 1, 1)]
    far2 = [make_example(np.array([0.0, 1.0]), 1, 0), make_example(np.array([1.0, 0.0]), 1, 1)]
    with pytest.raises(PrivacyError, match="adjacent"):
        empirical_dp_check(_update(0.5), (far, far2), 0.5, trials=1000, bins=40)
    with pytest.raises(PrivacyError, match="too few"):
        empirical_dp_check(_update(0.5), (d, d2), 0.5, trials=100, bins=40)
