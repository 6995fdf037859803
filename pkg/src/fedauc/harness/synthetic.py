"""Synthetic (score, label) evaluation sets.

Scores are ``sigmoid(z)`` with ``z ~ Normal(separation * label, 1)``, so the
population AUC is ``Phi(separation / sqrt(2))`` and the base rate is set
directly.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.special
import scipy.stats

from fedauc.core_metrics import Dataset, auc
from fedauc.errors import InvalidInputError
from fedauc.rng import RngStream


@dataclasses.dataclass(frozen=True)
class SyntheticSpec:
    m: int
    base_rate: float = 0.2559
    separation: float = 0.954

    def __post_init__(self):
        if self.m < 2:
            raise InvalidInputError(f"m must be >= 2, got {self.m}")
        if not 0 < self.base_rate < 1:
            raise InvalidInputError(f"base_rate must be in (0, 1), got {self.base_rate}")
        if not math.isfinite(self.separation):
            raise InvalidInputError("separation must be finite")

    @property
    def expected_auc(self) -> float:
        return float(scipy.stats.norm.cdf(self.separation / math.sqrt(2)))


def separation_for_auc(target_auc: float) -> float:
    if not 0 < target_auc < 1:
        raise InvalidInputError(f"target AUC must be in (0, 1), got {target_auc}")
    return math.sqrt(2) * float(scipy.stats.norm.ppf(target_auc))


def generate_synthetic(spec: SyntheticSpec, rng: RngStream) -> Dataset:
    labels = (rng.child("labels").uniform(spec.m) < spec.base_rate).astype(np.int8)
    latent = spec.separation * labels + scipy.special.ndtri(rng.child("scores").uniform(spec.m))
    scores = scipy.special.expit(latent)
    metadata = {"source": "synthetic", "m": spec.m, "base_rate": spec.base_rate,
                "separation": spec.separation, "clean_auc": None}
    if 0 < labels.sum() < spec.m:
        metadata["clean_auc"] = auc(scores, labels).value
    return Dataset(scores, labels, metadata)
