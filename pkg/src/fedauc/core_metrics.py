"""Exact AUC: the rank-sum formula and a brute-force pair-counting oracle."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
from collections.abc import Iterator, Mapping, Sequence
from typing import Any, NamedTuple

import numpy as np

from fedauc.errors import DatasetFormatError, DegenerateLabelsError, InvalidInputError

# Above this many positive-negative pairs the oracle counts via binary search
# instead of materialising every comparison.
_BRUTE_FORCE_PAIRS = 20_000_000


class Sample(NamedTuple):
    score: float
    label: int


@dataclasses.dataclass(frozen=True)
class AucValue:
    """An AUC estimate.

    ``value`` is what callers should report.  Estimates built from noisy
    statistics can leave [0, 1]; those are clamped, ``clamped`` is set and
    the unclamped number is kept in ``raw``.
    """

    value: float
    clamped: bool = False
    raw: float | None = None

    def __post_init__(self):
        if self.raw is None:
            object.__setattr__(self, "raw", self.value)

    def __float__(self) -> float:
        return float(self.value)

    @classmethod
    def clamp(cls, raw: float) -> "AucValue":
        raw = float(raw)
        if math.isnan(raw):
            raise InvalidInputError("AUC estimate is NaN")
        value = min(1.0, max(0.0, raw))
        return cls(value=value, clamped=value != raw, raw=raw)


def _as_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise InvalidInputError("labels must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise InvalidInputError("labels must be 0 or 1")
    return arr.astype(np.int8)


def _as_scores(scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError("scores must be one-dimensional")
    if not np.isfinite(arr).all():
        raise InvalidInputError("scores must be finite")
    return arr


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable evaluation set of (score, label) records."""

    scores: np.ndarray
    labels: np.ndarray
    metadata: Mapping[str, Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        scores = _as_scores(self.scores)
        labels = _as_labels(self.labels)
        if scores.shape != labels.shape:
            raise InvalidInputError(
                f"{scores.size} scores but {labels.size} labels")
        if ((scores < 0.0) | (scores > 1.0)).any():
            raise InvalidInputError("scores must lie in [0, 1]")
        object.__setattr__(self, "scores", _readonly(scores))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @classmethod
    def from_records(cls, records: Sequence[tuple[float, int]], **metadata) -> "Dataset":
        scores = [float(s) for s, _ in records]
        labels = [int(y) for _, y in records]
        return cls(np.asarray(scores), np.asarray(labels), metadata)

    def __len__(self) -> int:
        return int(self.scores.size)

    def __iter__(self) -> Iterator[Sample]:
        for s, y in zip(self.scores.tolist(), self.labels.tolist()):
            yield Sample(s, y)

    @property
    def records(self) -> list[Sample]:
        return list(self)

    @property
    def p(self) -> int:
        return int(self.labels.sum())

    @property
    def n(self) -> int:
        return len(self) - self.p

    @property
    def base_rate(self) -> float:
        return self.p / len(self)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.scores[indices], self.labels[indices])


def read_csv(source: str | os.PathLike | io.TextIOBase) -> Dataset:
    """Reads a ``score,label`` CSV file.

    Raises:
      DatasetFormatError: with the 1-based line number of the first bad row.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_csv(fh)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetFormatError("empty file", line=1) from None
    if [h.strip().lower() for h in header] != ["score", "label"]:
        raise DatasetFormatError("header must be 'score,label'", line=1)
    scores, labels = [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise DatasetFormatError(f"expected 2 fields, got {len(row)}", line)
        try:
            score = float(row[0])
        except ValueError:
            raise DatasetFormatError(f"bad score {row[0]!r}", line) from None
        if not math.isfinite(score) or not 0.0 <= score <= 1.0:
            raise DatasetFormatError(f"score {row[0]!r} not in [0, 1]", line)
        label = row[1].strip()
        if label not in ("0", "1"):
            raise DatasetFormatError(f"bad label {row[1]!r}", line)
        scores.append(score)
        labels.append(int(label))
    return Dataset(np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=np.int8))


def write_csv(dataset: Dataset, target: str | os.PathLike | io.TextIOBase) -> None:
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="") as fh:
            write_csv(dataset, fh)
            return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["score", "label"])
    for s, y in dataset:
        writer.writerow([repr(s), y])


def rank_scores(scores) -> np.ndarray:
    """Ranks 0..M-1 by increasing score.

    Ties are broken by input position, so the result is a deterministic
    permutation even when scores repeat.
    """
    scores = _as_scores(scores)
    if scores.size < 2:
        raise InvalidInputError("need at least two scores to rank")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.int64)
    ranks[order] = np.arange(scores.size, dtype=np.int64)
    return ranks


def _class_counts(labels: np.ndarray) -> tuple[int, int]:
    p = int(labels.sum())
    n = int(labels.size) - p
    if p == 0 or n == 0:
        raise DegenerateLabelsError(
            f"AUC needs both classes (P={p}, N={n})")
    return p, n


def auc_from_ranks(ranks, labels) -> AucValue:
    """(sum of positive ranks - P(P-1)/2) / (P N)."""
    ranks = np.asarray(ranks)
    labels = _as_labels(labels)
    if ranks.shape != labels.shape:
        raise InvalidInputError("ranks and labels differ in length")
    p, n = _class_counts(labels)
    # Integer arithmetic keeps the rank sum exact.
    rank_sum = int(np.dot(ranks.astype(np.int64), labels.astype(np.int64)))
    return AucValue((rank_sum - p * (p - 1) // 2) / (p * n))


def auc(scores, labels) -> AucValue:
    return auc_from_ranks(rank_scores(scores), labels)


def auc_pairwise_oracle(scores, labels) -> AucValue:
    """Fraction of correctly ordered positive-negative pairs; ties earn 1/2."""
    scores = _as_scores(scores)
    labels = _as_labels(labels)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels differ in length")
    p, n = _class_counts(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if p * n <= _BRUTE_FORCE_PAIRS:
        wins = ties = 0
        chunk = max(1, _BRUTE_FORCE_PAIRS // (4 * n))
        for start in range(0, p, chunk):
            block = pos[start:start + chunk, None]
            wins += int(np.count_nonzero(block > neg[None, :]))
            ties += int(np.count_nonzero(block == neg[None, :]))
    else:
        neg_sorted = np.sort(neg)
        below = np.searchsorted(neg_sorted, pos, side="left")
        at_or_below = np.searchsorted(neg_sorted, pos, side="right")
        wins = int(below.sum())
        ties = int((at_or_below - below).sum())
    return AucValue((wins + 0.5 * ties) / (p * n))
