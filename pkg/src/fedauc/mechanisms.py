"""Randomized response over binary labels and Laplace/Gaussian samplers."""
from __future__ import annotations

import dataclasses
import enum
import math
import warnings

import numpy as np
import scipy.special

from fedauc.errors import InvalidBudgetError
from fedauc.rng import RngStream


class Mechanism(str, enum.Enum):
    RR = "rr"
    LOCAL_LAPLACE = "local-laplace"
    GLOBAL_LAPLACE = "global-laplace"
    LOCAL_GAUSSIAN = "local-gaussian"
    LOCAL_LAPLACE_ADAPTIVE = "local-laplace-adaptive"
    # Orthogonal decomposition with one beta shared by every client.
    LOCAL_LAPLACE_ORTHOGONAL = "local-laplace-orthogonal"

    @property
    def is_gaussian(self) -> bool:
        return self is Mechanism.LOCAL_GAUSSIAN

    @property
    def is_orthogonal(self) -> bool:
        return self in (Mechanism.LOCAL_LAPLACE_ADAPTIVE,
                        Mechanism.LOCAL_LAPLACE_ORTHOGONAL)


@dataclasses.dataclass(frozen=True)
class PrivacyBudget:
    """Per-client label-DP budget and how it is split between releases.

    Attributes:
      epsilon: total epsilon per client; ``math.inf`` disables noise.
      delta: total delta; must be positive exactly for Gaussian noise.
      alloc_alpha: share of epsilon (and delta) spent on localSum by the
        naive two-release split; localP gets the rest.
      alloc_beta: share spent on the all-ones channel by the shared-beta
        orthogonal mechanism.  Ignored elsewhere.
      mechanism: which protocol the clients run.
    """

    epsilon: float
    delta: float = 0.0
    alloc_alpha: float = 0.5
    alloc_beta: float | None = None
    mechanism: Mechanism = Mechanism.RR

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if not self.epsilon > 0:
            raise InvalidBudgetError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise InvalidBudgetError(f"delta must be in [0, 1), got {self.delta}")
        if not 0 < self.alloc_alpha < 1:
            raise InvalidBudgetError(
                f"alloc_alpha must be in (0, 1), got {self.alloc_alpha}")
        if self.mechanism.is_gaussian != (self.delta > 0):
            raise InvalidBudgetError(
                "delta > 0 is required for, and only for, Gaussian noise")
        if self.mechanism is Mechanism.LOCAL_LAPLACE_ORTHOGONAL:
            if self.alloc_beta is None or not 0 < self.alloc_beta < 1:
                raise InvalidBudgetError(
                    f"shared alloc_beta must be in (0, 1), got {self.alloc_beta}")


@dataclasses.dataclass(frozen=True)
class BudgetEntry:
    """One privacy-consuming release made by a client."""

    client_id: int
    release: str
    epsilon: float
    delta: float = 0.0


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise InvalidBudgetError(f"epsilon must be > 0, got {epsilon}")


def rr_flip_probability(epsilon: float) -> float:
    """Probability 1 / (1 + e^epsilon) that randomized response flips a label."""
    _check_epsilon(epsilon)
    return float(scipy.special.expit(-epsilon))


def flip_from_uniform(labels, u, rho: float) -> np.ndarray:
    """Flips ``labels[i]`` exactly when ``u[i] < rho``."""
    labels = np.asarray(labels, dtype=np.int8)
    return labels ^ (np.asarray(u) < rho).astype(np.int8)


def rr_flip_labels(labels, epsilon: float, rng: RngStream) -> np.ndarray:
    """Randomized response applied once to every label."""
    rho = rr_flip_probability(epsilon)
    labels = np.asarray(labels, dtype=np.int8)
    return flip_from_uniform(labels, rng.uniform(labels.size), rho)


def laplace_from_uniform(u, scale):
    """Inverse-CDF Laplace transform of uniforms on (0, 1).

    With ``v = u - 1/2`` the draw is ``-scale * sign(v) * ln(1 - 2|v|)``; a
    zero scale gives exactly zero.
    """
    v = np.asarray(u, dtype=np.float64) - 0.5
    return -np.asarray(scale, dtype=np.float64) * np.sign(v) * np.log1p(-2.0 * np.abs(v))


def laplace_sample(scale: float, rng: RngStream) -> float:
    if not scale > 0 or math.isinf(scale):
        raise InvalidBudgetError(f"Laplace scale must be positive and finite, got {scale}")
    return float(laplace_from_uniform(rng.uniform(), scale))


def gaussian_sigma(sensitivity: float, epsilon: float, delta: float) -> float:
    """Classical calibration sigma = sensitivity * sqrt(2 ln(1.25/delta)) / epsilon.

    The bound is only proven for epsilon <= 1; larger values still return a
    sigma but warn.
    """
    if not sensitivity > 0:
        raise InvalidBudgetError(f"sensitivity must be > 0, got {sensitivity}")
    _check_epsilon(epsilon)
    if not 0 < delta < 1:
        raise InvalidBudgetError(f"Gaussian noise needs 0 < delta < 1, got {delta}")
    if epsilon > 1:
        warnings.warn(
            f"Gaussian calibration is not a DP guarantee for epsilon={epsilon} > 1",
            stacklevel=2)
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def gaussian_from_uniform(u, sigma):
    return np.asarray(sigma, dtype=np.float64) * scipy.special.ndtri(np.asarray(u, dtype=np.float64))


def gaussian_sample(sensitivity: float, epsilon: float, delta: float,
                    rng: RngStream) -> float:
    sigma = gaussian_sigma(sensitivity, epsilon, delta)
    return float(gaussian_from_uniform(rng.uniform(), sigma))
