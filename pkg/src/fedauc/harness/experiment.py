"""Repeated-trial experiments, grid sweeps and report files."""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import math
import os
import time
from collections.abc import Iterable, Sequence
from typing import Any, Union

import numpy as np

from fedauc.core_metrics import Dataset, auc, read_csv
from fedauc.errors import DegenerateCountsError, InvalidInputError
from fedauc.federation import PNMode, Strategy, partition, run_protocol
from fedauc.harness.engine import TrialSimulator
from fedauc.harness.predictors import (predict_std_global_laplace,
                                       predict_std_local_laplace_single, predict_std_rr,
                                       predict_std_rr_corrected)
from fedauc.harness.synthetic import SyntheticSpec, generate_synthetic
from fedauc.mechanisms import Mechanism, PrivacyBudget
from fedauc.rng import RngStream

DataSource = Union[Dataset, SyntheticSpec, str, os.PathLike]

ENGINES = ("vectorized", "protocol")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One cell of an experiment grid.

    ``source`` is a loaded dataset, a synthetic spec (generated from the
    master seed) or a CSV path.  The partition is drawn once from the master
    seed; trial ``t`` draws all of its noise from the substream keyed by ``t``.
    """

    source: DataSource
    budget: PrivacyBudget
    k: int = 1
    partition: Strategy = Strategy.IID
    trials: int = 100
    master_seed: int = 0
    pn_mode: PNMode = PNMode.ESTIMATED
    engine: str = "vectorized"
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "partition", Strategy(self.partition))
        object.__setattr__(self, "pn_mode", PNMode(self.pn_mode))
        if self.trials < 2:
            raise InvalidInputError(f"trials must be >= 2, got {self.trials}")
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")
        if self.engine not in ENGINES:
            raise InvalidInputError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.jobs < 1:
            raise InvalidInputError(f"jobs must be >= 1, got {self.jobs}")

    def describe(self) -> dict[str, Any]:
        """Resolved settings, JSON-friendly."""
        src = self.source
        if isinstance(src, SyntheticSpec):
            source = {"synthetic": dataclasses.asdict(src)}
        elif isinstance(src, Dataset):
            source = {"dataset": src.metadata.get("name", "in-memory"), "m": len(src)}
        else:
            source = {"file": os.fspath(src)}
        b = self.budget
        return {
            "source": source,
            "mechanism": b.mechanism.value,
            "epsilon": b.epsilon,
            "delta": b.delta,
            "alloc_alpha": b.alloc_alpha,
            "alloc_beta": b.alloc_beta,
            "k": self.k,
            "partition": self.partition.value,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "pn_mode": self.pn_mode.value,
        }


@dataclasses.dataclass
class ExperimentReport:
    mechanism: str
    epsilon: float
    delta: float
    alloc_alpha: float
    alloc_beta: float | None
    k: int
    partition: str
    pn_mode: str
    trials: int
    mean_auc: float
    std_auc: float
    mean_auc_raw: float
    std_auc_raw: float
    clean_auc: float
    predicted_std: float | None
    predicted_std_corrected: float | None
    clamp_count: int
    degenerate_count: int
    m: int
    wall_time: float = 0.0
    estimates: np.ndarray | None = dataclasses.field(default=None, repr=False)
    raw_estimates: np.ndarray | None = dataclasses.field(default=None, repr=False)

    def row(self) -> dict[str, Any]:
        """Serialisable fields; wall time and per-trial values are left out so
        that reruns produce identical files."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                if f.name not in _UNSERIALIZED}


_UNSERIALIZED = {"wall_time", "estimates", "raw_estimates"}
REPORT_COLUMNS = [f.name for f in dataclasses.fields(ExperimentReport)
                  if f.name not in _UNSERIALIZED]


def load_source(source: DataSource, master_seed: int) -> Dataset:
    if isinstance(source, Dataset):
        return source
    if isinstance(source, SyntheticSpec):
        return generate_synthetic(source, RngStream(master_seed).child("synthetic"))
    return read_csv(source)


def predicted_stds(dataset: Dataset, budget: PrivacyBudget, k: int
                   ) -> tuple[float | None, float | None]:
    """(verbatim, debias-corrected) analytic std, where a formula exists."""
    m, p, n = len(dataset), dataset.p, dataset.n
    if p == 0 or n == 0:
        return None, None
    mech = budget.mechanism
    if mech is Mechanism.RR:
        return predict_std_rr(m, p, n, budget.epsilon), \
            predict_std_rr_corrected(m, p, n, budget.epsilon)
    eps_sum = budget.alloc_alpha * budget.epsilon
    if mech is Mechanism.GLOBAL_LAPLACE:
        return predict_std_global_laplace(m, p, n, k, eps_sum), None
    if mech is Mechanism.LOCAL_LAPLACE and k == m:
        return predict_std_local_laplace_single(k, p, n, eps_sum), None
    return None, None


def _trial_values(dataset: Dataset, config: ExperimentConfig, plan, trial_ids: Sequence[int]
                  ) -> list[tuple[float, float, bool] | None]:
    root = RngStream(config.master_seed)
    out: list[tuple[float, float, bool] | None] = []
    sim = None
    if config.engine == "vectorized":
        sim = TrialSimulator(dataset, plan, config.budget, config.pn_mode)
    for t in trial_ids:
        try:
            if sim is not None:
                value = sim.run(root.child(t))
            else:
                value, _ = run_protocol(dataset, plan, config.budget, config.pn_mode,
                                        root.child(t))
        except DegenerateCountsError:
            out.append(None)
            continue
        out.append((value.value, value.raw, value.clamped))
    return out


def _worker(args):
    dataset, config, plan, trial_ids = args
    return _trial_values(dataset, config, plan, trial_ids)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None
                   ) -> ExperimentReport:
    """Runs ``config.trials`` trials and summarises them.

    Trials whose noisy class totals are not both positive have no AUC; they
    are counted in ``degenerate_count`` and left out of the statistics.
    """
    start = time.perf_counter()
    if dataset is None:
        dataset = load_source(config.source, config.master_seed)
    if config.k > len(dataset):
        raise InvalidInputError(f"k={config.k} exceeds dataset size {len(dataset)}")
    plan = partition(dataset, config.k, config.partition,
                     RngStream(config.master_seed).child("partition"))
    trial_ids = list(range(config.trials))
    if config.jobs > 1:
        chunks = [c.tolist() for c in np.array_split(trial_ids, config.jobs) if len(c)]
        with concurrent.futures.ProcessPoolExecutor(config.jobs) as pool:
            parts = pool.map(_worker, [(dataset, config, plan, c) for c in chunks])
            values = [v for part in parts for v in part]
    else:
        values = _trial_values(dataset, config, plan, trial_ids)

    ok = [v for v in values if v is not None]
    est = np.array([v[0] for v in ok])
    raw = np.array([v[1] for v in ok])
    clamp_count = sum(v[2] for v in ok)
    predicted, corrected = predicted_stds(dataset, config.budget, config.k)
    clean = dataset.metadata.get("clean_auc")
    if clean is None:
        clean = auc(dataset.scores, dataset.labels).value
    b = config.budget
    return ExperimentReport(
        mechanism=b.mechanism.value, epsilon=b.epsilon, delta=b.delta,
        alloc_alpha=b.alloc_alpha, alloc_beta=b.alloc_beta, k=config.k,
        partition=config.partition.value, pn_mode=config.pn_mode.value,
        trials=config.trials,
        mean_auc=_mean(est), std_auc=_std(est),
        mean_auc_raw=_mean(raw), std_auc_raw=_std(raw),
        clean_auc=float(clean), predicted_std=predicted,
        predicted_std_corrected=corrected, clamp_count=int(clamp_count),
        degenerate_count=len(values) - len(ok), m=len(dataset),
        wall_time=time.perf_counter() - start, estimates=est, raw_estimates=raw)


def _mean(x: np.ndarray) -> float:
    return float(math.fsum(x) / len(x)) if len(x) else math.nan


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) >= 2 else math.nan


SWEEP_PARAMS = ("alpha", "beta", "clients", "m", "epsilon", "mechanism")


def vary(config: ExperimentConfig, param: str, value) -> ExperimentConfig:
    """A copy of ``config`` with one grid parameter changed."""
    if param == "alpha":
        return dataclasses.replace(
            config, budget=dataclasses.replace(config.budget, alloc_alpha=float(value)))
    if param == "beta":
        return dataclasses.replace(
            config, budget=dataclasses.replace(config.budget, alloc_beta=float(value)))
    if param == "epsilon":
        return dataclasses.replace(
            config, budget=dataclasses.replace(config.budget, epsilon=float(value)))
    if param == "mechanism":
        return dataclasses.replace(
            config, budget=dataclasses.replace(config.budget, mechanism=Mechanism(value)))
    if param == "clients":
        return dataclasses.replace(config, k=int(value))
    if param == "m":
        if not isinstance(config.source, SyntheticSpec):
            raise InvalidInputError("sweeping m needs a synthetic source")
        return dataclasses.replace(
            config, source=dataclasses.replace(config.source, m=int(value)))
    raise InvalidInputError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


def sweep(config: ExperimentConfig, param: str, values: Iterable) -> list[ExperimentReport]:
    """One report per grid point, in grid order.  The dataset is loaded once
    unless the grid changes it."""
    values = list(values)
    dataset = None if param == "m" else load_source(config.source, config.master_seed)
    return [run_experiment(vary(config, param, v), dataset) for v in values]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_reports_csv(reports: Sequence[ExperimentReport], target: io.TextIOBase,
                      header: dict[str, Any] | None = None) -> None:
    """CSV with one row per configuration, preceded by ``# `` header lines."""
    if header is not None:
        target.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        row = r.row()
        writer.writerow([_cell(row[c]) for c in REPORT_COLUMNS])


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_reports_json(reports: Sequence[ExperimentReport], target: io.TextIOBase,
                       header: dict[str, Any] | None = None) -> None:
    doc = {"config": header or {},
           "reports": [{k: _json_value(v) for k, v in r.row().items()} for r in reports]}
    json.dump(doc, target, indent=2, sort_keys=True)
    target.write("\n")
