"""Closed-form standard deviations of the federated AUC estimators.

All predictors assume the true class counts P and N are used in the final
formula, i.e. the oracle P/N mode of the harness.
"""
from __future__ import annotations

import math

from fedauc.debias import NoiseRates, debias_coefficients
from fedauc.errors import InvalidBudgetError, InvalidInputError


def _check_counts(m: int, p: int, n: int) -> None:
    if p < 1 or n < 1:
        raise InvalidInputError(f"need p >= 1 and n >= 1, got p={p}, n={n}")
    if m != p + n:
        raise InvalidInputError(f"m must equal p + n, got {m} != {p} + {n}")


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise InvalidBudgetError(f"epsilon must be > 0, got {eps}")


def predict_std_rr(m: int, p: int, n: int, epsilon: float) -> float:
    """Rank-sum variance under randomized response, before debias scaling.

    ``Var = e^eps / (1 + e^eps)^2 * (M(M-1)(2M-1)/6) / (P N)^2``.
    """
    _check_counts(m, p, n)
    _check_eps(epsilon)
    if math.isinf(epsilon):
        return 0.0
    rho = 1.0 / (1.0 + math.exp(epsilon)) if epsilon < 700 else 0.0
    var = rho * (1 - rho) * (m * (m - 1) * (2 * m - 1) / 6) / (p * p * n * n)
    return math.sqrt(var)


def predict_std_rr_corrected(m: int, p: int, n: int, epsilon: float) -> float:
    """``predict_std_rr`` divided by the debias slope 1 - alpha - beta at pi = p/m."""
    base = predict_std_rr(m, p, n, epsilon)
    rates = NoiseRates.randomized_response(epsilon)
    debias_alpha, debias_beta = debias_coefficients(p / m, rates)
    return base / (1 - debias_alpha - debias_beta)


def predict_std_global_laplace(m: int, p: int, n: int, k: int, eps_localsum: float) -> float:
    """K independent Lap((M-1)/eps) draws on localSum: sqrt(2K) (M-1) / (P N eps)."""
    _check_counts(m, p, n)
    _check_eps(eps_localsum)
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    return math.sqrt(2 * k * (m - 1) ** 2 / (p * p * n * n * eps_localsum ** 2))


def predict_std_local_laplace_single(k: int, p: int, n: int, eps_localsum: float) -> float:
    """One sample per client: localSum noise scales with each client's own rank.

    ``Var = sum_{i<K} 2 i^2 / eps^2 / (P N)^2 = K(K-1)(2K-1) / (3 P^2 N^2 eps^2)``.
    A single client holds rank 0 and releases nothing noisy, so K = 1 gives 0.
    """
    _check_eps(eps_localsum)
    if k == 1 and p + n == 1:
        return 0.0
    _check_counts(k, p, n)
    return math.sqrt(k * (k - 1) * (2 * k - 1) / (3 * p * p * n * n * eps_localsum ** 2))
