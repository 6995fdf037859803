"""Recover the clean-label AUC from an AUC computed on flipped labels."""
from __future__ import annotations

import dataclasses

from fedauc.core_metrics import AucValue
from fedauc.errors import DegenerateCountsError, SingularRatesError
from fedauc.mechanisms import rr_flip_probability


@dataclasses.dataclass(frozen=True)
class NoiseRates:
    """Class-conditional flip probabilities.

    Attributes:
      rho_plus: probability that a positive label is flipped.
      rho_minus: probability that a negative label is flipped.
    """

    rho_plus: float
    rho_minus: float

    def __post_init__(self):
        for name in ("rho_plus", "rho_minus"):
            rho = getattr(self, name)
            if not 0 <= rho < 0.5:
                raise SingularRatesError(f"{name} must be in [0, 0.5), got {rho}")

    @classmethod
    def symmetric(cls, rho: float) -> "NoiseRates":
        return cls(rho, rho)

    @classmethod
    def randomized_response(cls, epsilon: float) -> "NoiseRates":
        return cls.symmetric(rr_flip_probability(epsilon))


@dataclasses.dataclass(frozen=True)
class BaseRateEstimate:
    p_prime: float
    n_prime: float
    pi_prime: float
    clamped: bool = False


def _check_rates(rates: NoiseRates) -> None:
    if rates.rho_plus + rates.rho_minus >= 1:
        raise SingularRatesError("rho_plus + rho_minus must be < 1")


def estimate_base_rate(p_bar: float, n_bar: float, rates: NoiseRates) -> BaseRateEstimate:
    """Inverts the label-noise channel on the observed class counts.

    The clean positive count estimate solves
    ``P'(1 - rho_plus) + N' rho_minus = P_bar`` with ``P' + N' = P_bar + N_bar``.
    Noise can push P' outside [0, total]; it is then clamped and flagged.
    """
    _check_rates(rates)
    total = p_bar + n_bar
    if not total > 0:
        raise DegenerateCountsError(f"observed total must be positive, got {total}")
    rho_p, rho_m = rates.rho_plus, rates.rho_minus
    # Both readings of the identity agree because P' + N' is fixed.
    p_prime = (p_bar * (1 - rho_m) - n_bar * rho_m) / (1 - rho_p - rho_m)
    clamped = False
    if p_prime < 0 or p_prime > total:
        p_prime = min(max(p_prime, 0.0), total)
        clamped = True
    n_prime = total - p_prime
    return BaseRateEstimate(p_prime, n_prime, p_prime / total, clamped)


def debias_coefficients(pi_prime: float, rates: NoiseRates) -> tuple[float, float]:
    """The two mixing weights of the noisy-to-clean AUC relation.

    Returns ``(debias_alpha, debias_beta)``: the fractions of observed
    positives that are really negatives, and of observed negatives that are
    really positives.
    """
    _check_rates(rates)
    if not 0 < pi_prime < 1:
        raise DegenerateCountsError(f"base rate must be in (0, 1), got {pi_prime}")
    rho_p, rho_m = rates.rho_plus, rates.rho_minus
    pi = pi_prime
    debias_alpha = (1 - pi) * rho_m / (pi * (1 - rho_p) + (1 - pi) * rho_m)
    debias_beta = pi * rho_p / (pi * rho_p + (1 - pi) * (1 - rho_m))
    return debias_alpha, debias_beta


def debias_auc(noisy_auc: float, pi_prime: float, rates: NoiseRates) -> AucValue:
    """Maps a noisy-label AUC to an estimate of the clean-label AUC."""
    debias_alpha, debias_beta = debias_coefficients(pi_prime, rates)
    denom = 1 - debias_alpha - debias_beta
    if denom == 0:
        raise SingularRatesError("debias transform is singular")
    return AucValue.clamp((noisy_auc - (debias_alpha + debias_beta) / 2) / denom)
