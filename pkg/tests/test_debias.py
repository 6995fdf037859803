import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedauc.core_metrics import auc
from fedauc.debias import NoiseRates, debias_auc, debias_coefficients, estimate_base_rate
from fedauc.errors import DegenerateCountsError, SingularRatesError
from fedauc.mechanisms import flip_from_uniform
from fedauc.rng import RngStream


def test_base_rate_identity_case():
    est = estimate_base_rate(117317, 341090, NoiseRates(0, 0))
    assert est.p_prime == 117317
    assert est.pi_prime == pytest.approx(0.2559, abs=5e-5)
    assert not est.clamped


def test_base_rate_hand_example():
    est = estimate_base_rate(400, 600, NoiseRates.symmetric(0.25))
    assert est.p_prime == pytest.approx(300)
    assert est.n_prime == pytest.approx(700)
    assert est.pi_prime == pytest.approx(0.3)


def test_base_rate_simulated_flips():
    n = 1_000_000
    rng = RngStream(21)
    labels = (rng.child("y").uniform(n) < 0.3).astype(np.int8)
    noisy = flip_from_uniform(labels, rng.child("flip").uniform(n), 0.25)
    p_bar = int(noisy.sum())
    est = estimate_base_rate(p_bar, n - p_bar, NoiseRates.symmetric(0.25))
    assert est.pi_prime == pytest.approx(labels.mean(), abs=3e-3)


def test_base_rate_symmetric_counts():
    assert estimate_base_rate(500, 500, NoiseRates.symmetric(0.3)).pi_prime == pytest.approx(0.5)


def test_base_rate_exact_at_expectation():
    rates = NoiseRates(0.1, 0.2)
    p, n = 250.0, 750.0
    p_bar = (1 - rates.rho_plus) * p + rates.rho_minus * n
    est = estimate_base_rate(p_bar, p + n - p_bar, rates)
    assert est.p_prime == pytest.approx(p) and not est.clamped


def test_base_rate_clamps():
    est = estimate_base_rate(10, 990, NoiseRates.symmetric(0.3))
    assert est.clamped and est.p_prime == 0.0 and est.n_prime == 1000
    with pytest.raises(DegenerateCountsError):
        estimate_base_rate(0, 0, NoiseRates.symmetric(0.1))


def test_rates_validation():
    with pytest.raises(SingularRatesError):
        NoiseRates.symmetric(0.5)
    with pytest.raises(SingularRatesError):
        NoiseRates(-0.1, 0.1)
    assert NoiseRates.randomized_response(1).rho_plus == pytest.approx(1 / (1 + math.e))


def test_debias_examples():
    assert debias_auc(0.63, 0.4, NoiseRates(0, 0)).value == pytest.approx(0.63)
    assert debias_coefficients(0.5, NoiseRates.symmetric(0.25)) == pytest.approx((0.25, 0.25))
    assert debias_auc(0.6, 0.5, NoiseRates.symmetric(0.25)).value == pytest.approx(0.7)
    assert debias_auc(0.5, 0.5, NoiseRates.symmetric(0.2)).value == pytest.approx(0.5)


def test_debias_out_of_range_clamped():
    v = debias_auc(0.95, 0.5, NoiseRates.symmetric(0.25))
    assert v.clamped and v.value == 1.0 and v.raw == pytest.approx(1.4)


def test_coefficients_match_simulated_mixing_fractions():
    """Fraction of noisy positives that are clean negatives, and vice versa."""
    n = 1_000_000
    rates = NoiseRates(0.15, 0.3)
    rng = RngStream(4)
    y = (rng.child("y").uniform(n) < 0.25).astype(np.int8)
    u = rng.child("flip").uniform(n)
    flip = np.where(y == 1, u < rates.rho_plus, u < rates.rho_minus)
    noisy = y ^ flip.astype(np.int8)
    a, b = debias_coefficients(y.mean(), rates)
    assert a == pytest.approx(np.mean(y[noisy == 1] == 0), abs=3e-3)
    assert b == pytest.approx(np.mean(y[noisy == 0] == 1), abs=3e-3)


def test_debias_recovers_clean_auc_on_average():
    rng = RngStream(8)
    m = 20_000
    y = (rng.child("y").uniform(m) < 0.3).astype(np.int8)
    scores = 1 / (1 + np.exp(-(1.2 * y + rng.child("z").uniform(m) * 4 - 2)))
    clean = auc(scores, y).value
    rates = NoiseRates.randomized_response(1.0)
    est = []
    for t in range(40):
        noisy = flip_from_uniform(y, rng.child(t).uniform(m), rates.rho_plus)
        p_bar = int(noisy.sum())
        pi = estimate_base_rate(p_bar, m - p_bar, rates).pi_prime
        est.append(debias_auc(auc(scores, noisy).value, pi, rates).value)
    assert abs(np.mean(est) - clean) < 4 * np.std(est, ddof=1) / math.sqrt(len(est))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0, 0.45), st.floats(0, 0.45),
       st.floats(0, 1), st.floats(0, 1))
def test_debias_strictly_increasing_affine(pi, rp, rm, x1, x2):
    rates = NoiseRates(rp, rm)
    a, b = debias_coefficients(pi, rates)
    assert 1 - a - b > 0
    lo, hi = sorted((x1, x2))
    if hi - lo > 1e-9:
        assert debias_auc(hi, pi, rates).raw > debias_auc(lo, pi, rates).raw
