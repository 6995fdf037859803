"""How much the shared prediction scores reveal, and what hiding them costs."""
from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from fedauc.core_metrics import AucValue, Dataset, auc
from fedauc.errors import InvalidBudgetError, InvalidInputError
from fedauc.mechanisms import laplace_from_uniform
from fedauc.rng import RngStream


def topk_attack(dataset: Dataset, k_values: Iterable[int]) -> list[tuple[int, float, float]]:
    """Guess that the k highest-scored samples are the positives.

    Returns ``(k, precision, recall)`` per requested k.  Equal scores are
    ordered by dataset position.
    """
    m = len(dataset)
    p = dataset.p
    order = np.argsort(-dataset.scores, kind="stable")
    hits = np.cumsum(dataset.labels[order].astype(np.int64))
    out = []
    for k in k_values:
        k = int(k)
        if not 1 <= k <= m:
            raise InvalidInputError(f"k must be in [1, {m}], got {k}")
        tp = int(hits[k - 1])
        out.append((k, tp / k, tp / p if p else 0.0))
    return out


def score_perturbation_baseline(dataset: Dataset, epsilon: float, rng: RngStream) -> AucValue:
    """AUC after adding Lap(1/epsilon) to every score (scores have sensitivity 1)."""
    if not epsilon > 0:
        raise InvalidBudgetError(f"epsilon must be > 0, got {epsilon}")
    noise = laplace_from_uniform(rng.uniform(len(dataset)), 1.0 / epsilon)
    return auc(dataset.scores + noise, dataset.labels)
