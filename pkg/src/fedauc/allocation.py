"""Budget allocation for the Laplace protocol.

Two strategies are provided.  The naive one splits epsilon between the
localSum and localP releases with a fixed ``alloc_alpha``.  The orthogonal one
writes a client's rank vector as ``r = u' + v'`` with ``u'`` parallel to the
all-ones vector; the all-ones channel reuses the localP noise, so only the
(usually small) residual ``v'`` needs its own draw.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from fedauc.errors import InvalidBudgetError, InvalidInputError
from fedauc.mechanisms import laplace_from_uniform
from fedauc.rng import RngStream


@dataclasses.dataclass(frozen=True, eq=False)
class OrthoDecomposition:
    u_prime: np.ndarray
    v_prime: np.ndarray
    u_inf: float
    v_inf: float


@dataclasses.dataclass(frozen=True)
class BetaAllocation:
    beta: float

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise InvalidBudgetError(f"beta must be in (0, 1], got {self.beta}")


@dataclasses.dataclass(frozen=True)
class NoisyLocalStats:
    local_sum: float
    local_p: float
    local_n: float


def split_budget_naive(epsilon: float, alloc_alpha: float) -> tuple[float, float]:
    """Returns ``(eps_localSum, eps_localP)``."""
    if not 0 < alloc_alpha < 1:
        raise InvalidBudgetError(f"alloc_alpha must be in (0, 1), got {alloc_alpha}")
    if not epsilon > 0:
        raise InvalidBudgetError(f"epsilon must be > 0, got {epsilon}")
    return alloc_alpha * epsilon, (1 - alloc_alpha) * epsilon


def orthogonal_decompose(ranks) -> OrthoDecomposition:
    r = np.asarray(ranks, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise InvalidInputError("ranks must be a non-empty vector")
    u_prime = np.full(r.shape, r.mean())
    v_prime = r - u_prime
    return OrthoDecomposition(u_prime, v_prime,
                              float(np.abs(u_prime).max()),
                              float(np.abs(v_prime).max()))


def beta_star(u_inf, v_inf):
    """Minimiser of 2a^2/beta^2 + 2b^2/(1-beta)^2 over beta, vectorised.

    Setting the derivative to zero gives ``a^2 (1-beta)^3 = b^2 beta^3``, so
    ``beta = a^(2/3) / (a^(2/3) + b^(2/3))``.  ``b = 0`` (including the
    all-zero case) yields 1.
    """
    a = np.power(np.asarray(u_inf, dtype=np.float64), 2.0 / 3.0)
    b = np.power(np.asarray(v_inf, dtype=np.float64), 2.0 / 3.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = a / (a + b)
    return np.where(b == 0, 1.0, beta)


def adaptive_beta(decomp: OrthoDecomposition) -> BetaAllocation:
    return BetaAllocation(float(beta_star(decomp.u_inf, decomp.v_inf)))


def orthogonal_release(local_sum, local_p, count, u_inf, v_inf, beta, epsilon,
                       u_s1, u_s2):
    """Noisy (localSum', localP', localN') from uniforms for s1 and s2.

    Vectorised over clients.  ``s1 ~ Lap(1/(beta eps))`` perturbs localP and,
    scaled by ``u_inf``, the all-ones part of localSum; ``s2 ~
    Lap(1/((1-beta) eps))`` perturbs the residual and is skipped at beta = 1.
    Clients whose rank vector is parallel to the all-ones vector report
    ``localSum' = r * localP'``.
    """
    beta = np.asarray(beta, dtype=np.float64)
    v_inf = np.asarray(v_inf, dtype=np.float64)
    with np.errstate(divide="ignore"):
        s1 = laplace_from_uniform(u_s1, 1.0 / (beta * epsilon))
        scale2 = np.where(beta < 1, 1.0 / ((1.0 - beta) * epsilon), 0.0)
    s2 = laplace_from_uniform(u_s2, scale2)
    noisy_p = local_p + s1
    noisy_sum = np.where(v_inf == 0,
                         u_inf * noisy_p,
                         local_sum + u_inf * s1 + v_inf * s2)
    return noisy_sum, noisy_p, count - noisy_p


def effective_beta(beta, v_inf):
    """A parallel rank vector has no residual channel; it gets the whole budget."""
    return np.where(np.asarray(v_inf) == 0, 1.0, beta)


def noisy_stats_orthogonal(labels, ranks, epsilon: float, beta: BetaAllocation,
                           rng: RngStream) -> NoisyLocalStats:
    """One client's release under the orthogonal decomposition.

    ``rng`` is the client's stream; s1 is drawn from its ``localP-noise``
    child and s2 from its ``localSum-noise`` child.
    """
    labels = np.asarray(labels, dtype=np.int64)
    ranks = np.asarray(ranks, dtype=np.int64)
    if labels.shape != ranks.shape:
        raise InvalidInputError("labels and ranks differ in length")
    if not epsilon > 0:
        raise InvalidBudgetError(f"epsilon must be > 0, got {epsilon}")
    decomp = orthogonal_decompose(ranks)
    b = effective_beta(beta.beta, decomp.v_inf)
    if decomp.v_inf > 0 and b >= 1:
        raise InvalidBudgetError("beta = 1 would release the residual channel without noise")
    u_s1 = rng.child("localP-noise").uniform()
    u_s2 = rng.child("localSum-noise").uniform() if b < 1 else 0.5
    noisy_sum, noisy_p, noisy_n = orthogonal_release(
        int(np.dot(ranks, labels)), int(labels.sum()), labels.size,
        decomp.u_inf, decomp.v_inf, b, epsilon, u_s1, u_s2)
    return NoisyLocalStats(float(noisy_sum), float(noisy_p), float(noisy_n))
