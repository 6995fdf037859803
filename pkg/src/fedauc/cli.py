"""Command-line interface.

Exit codes:
  0  success
  1  rank formula and pair-counting oracle disagree (``auc``)
  2  unreadable input or invalid configuration
  3  the dataset has only one class
  4  a protocol run produced no usable class totals
"""
from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import math
import os
import sys
from collections.abc import Sequence
from typing import Any

import numpy as np

from fedauc.core_metrics import Dataset, auc, auc_pairwise_oracle, read_csv
from fedauc.errors import DegenerateCountsError, DegenerateLabelsError, FedAucError
from fedauc.federation import JsonLinesTransport, PNMode, Strategy, partition, run_protocol
from fedauc.harness.experiment import (SWEEP_PARAMS, ExperimentConfig, load_source,
                                       predicted_stds, run_experiment, vary,
                                       write_reports_csv, write_reports_json)
from fedauc.harness.synthetic import SyntheticSpec
from fedauc.mechanisms import Mechanism, PrivacyBudget
from fedauc.rng import RngStream

DEFAULT_SEED = 20240101
DEFAULT_GAUSSIAN_DELTA = 1e-5
EXIT_MISMATCH, EXIT_USAGE, EXIT_DEGENERATE_LABELS, EXIT_DEGENERATE_COUNTS = 1, 2, 3, 4

log = logging.getLogger("fedauc")


class UsageError(Exception):
    """Bad flag values; reported with exit code 2."""


def _synthetic_spec(text: str) -> SyntheticSpec:
    fields: dict[str, Any] = {}
    names = {"m": ("m", int), "pi": ("base_rate", float), "sep": ("separation", float)}
    for part in filter(None, text.split(",")):
        key, _, value = part.partition("=")
        if key.strip() not in names:
            raise UsageError(f"unknown synthetic field {key!r}; use m=, pi=, sep=")
        name, conv = names[key.strip()]
        try:
            fields[name] = conv(value)
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    if "m" not in fields:
        raise UsageError("--synthetic needs m=")
    return SyntheticSpec(**fields)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


def _grid(text: str) -> tuple[str, list[str]]:
    """``alpha=0.1:0.9:0.1`` (inclusive range) or ``clients=10,100,1000``."""
    param, sep, spec = text.partition("=")
    if not sep or param not in SWEEP_PARAMS:
        raise UsageError(f"--sweep expects one of {SWEEP_PARAMS} as name=values")
    if ":" in spec:
        try:
            start, stop, step = (float(x) for x in spec.split(":"))
        except ValueError:
            raise UsageError(f"bad range {spec!r}; expected start:stop:step") from None
        if step <= 0 or stop < start:
            raise UsageError(f"empty range {spec!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
        return param, [repr(v) for v in values]
    values = [v for v in spec.split(",") if v]
    if not values:
        raise UsageError("--sweep needs at least one value")
    return param, values


def _add_source(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="CSV file with header score,label")
    group.add_argument("--synthetic", metavar="m=..,pi=..,sep=..",
                       help="generate a synthetic dataset from the master seed")


def _add_protocol(p: argparse.ArgumentParser, lists: bool) -> None:
    mech_help = "comma-separated list" if lists else "noise mechanism"
    p.add_argument("--mechanism", default="rr",
                   help=f"{mech_help}: " + ", ".join(m.value for m in Mechanism))
    p.add_argument("--epsilon", default="1", help="per-client epsilon" +
                   (" (comma-separated list)" if lists else ""))
    p.add_argument("--delta", type=float, default=None,
                   help=f"Gaussian delta (default {DEFAULT_GAUSSIAN_DELTA})")
    p.add_argument("--alloc-alpha", type=float, default=0.5,
                   help="share of epsilon spent on localSum")
    p.add_argument("--alloc-beta", type=float, default=None,
                   help="shared ones-channel share for local-laplace-orthogonal")
    p.add_argument("--clients", type=int, default=1, help="number of clients K")
    p.add_argument("--partition", choices=[s.value for s in Strategy], default="iid")
    p.add_argument("--pn-mode", choices=[m.value for m in PNMode], default="estimated")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedauc", description="Federated AUC under label differential privacy.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging on stderr")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"master seed (default $FEDAUC_SEED or {DEFAULT_SEED})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("auc", help="exact AUC of a labelled score file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("run", help="one run of the federated protocol")
    _add_source(p)
    _add_protocol(p, lists=False)
    p.add_argument("--trial", type=int, default=0, help="trial substream index")
    p.add_argument("--transcript", help="write every protocol message here (JSON lines)")
    p.add_argument("--output", help="write the result here instead of stdout")

    p = sub.add_parser("experiment", help="repeated trials, grids and predictors")
    _add_source(p)
    _add_protocol(p, lists=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--sweep", help="grid over one parameter, e.g. alpha=0.1:0.9:0.1")
    p.add_argument("--predict-only", action="store_true",
                   help="emit analytic predictions without running trials")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    p.add_argument("--engine", choices=("vectorized", "protocol"), default="vectorized")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FEDAUC_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"FEDAUC_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _source(args):
    if args.input is not None:
        return args.input
    return _synthetic_spec(args.synthetic)


def _budget(args, mechanism: str, epsilon: float, alloc_beta=None) -> PrivacyBudget:
    try:
        mech = Mechanism(mechanism)
    except ValueError:
        raise UsageError(f"unknown mechanism {mechanism!r}") from None
    delta = 0.0
    if mech.is_gaussian:
        delta = args.delta if args.delta is not None else DEFAULT_GAUSSIAN_DELTA
    beta = args.alloc_beta if alloc_beta is None else alloc_beta
    return PrivacyBudget(epsilon, delta=delta, alloc_alpha=args.alloc_alpha,
                         alloc_beta=beta, mechanism=mech)


@contextlib.contextmanager
def _open_output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def cmd_auc(args) -> int:
    dataset = read_csv(args.input)
    rank = auc(dataset.scores, dataset.labels).value
    oracle = auc_pairwise_oracle(dataset.scores, dataset.labels).value
    distinct = len(np.unique(dataset.scores)) == len(dataset)
    if args.format == "json":
        print(json.dumps({"auc": rank, "oracle_auc": oracle, "m": len(dataset),
                          "p": dataset.p, "n": dataset.n}))
    else:
        print(f"auc {rank!r}")
        print(f"oracle_auc {oracle!r}")
    if not distinct:
        log.warning("scores contain ties; the rank formula breaks them by row order")
        return 0
    if abs(rank - oracle) > 1e-12:
        log.error("rank formula %r and oracle %r disagree", rank, oracle)
        return EXIT_MISMATCH
    return 0


def cmd_run(args) -> int:
    seed = _seed(args)
    epsilon = _float_list(args.epsilon)
    if len(epsilon) != 1:
        raise UsageError("run takes a single --epsilon")
    budget = _budget(args, args.mechanism, epsilon[0])
    dataset = load_source(_source(args), seed)
    if not 1 <= args.clients <= len(dataset):
        raise UsageError(f"--clients must be in [1, {len(dataset)}]")
    plan = partition(dataset, args.clients, args.partition,
                     RngStream(seed).child("partition"))
    buffer = io.StringIO()
    transport = JsonLinesTransport(buffer)
    value, _ = run_protocol(dataset, plan, budget, args.pn_mode,
                            RngStream(seed).child(args.trial), transport)
    text = buffer.getvalue()
    if "label" in text:
        raise RuntimeError("transcript contains a label field")
    if args.transcript:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            fh.write(text)
    config = {"command": "run", "master_seed": seed, "trial": args.trial,
              **_run_config(args, budget, dataset)}
    with _open_output(args.output) as out:
        json.dump({"config": config, "auc": value.value, "raw_auc": value.raw,
                   "clamped": value.clamped}, out, sort_keys=True)
        out.write("\n")
    return 0


def _run_config(args, budget: PrivacyBudget, dataset: Dataset) -> dict[str, Any]:
    return {"source": args.input if args.input else {"synthetic": args.synthetic},
            "m": len(dataset), "mechanism": budget.mechanism.value,
            "epsilon": budget.epsilon, "delta": budget.delta,
            "alloc_alpha": budget.alloc_alpha, "alloc_beta": budget.alloc_beta,
            "clients": args.clients, "partition": args.partition, "pn_mode": args.pn_mode}


PREDICTION_COLUMNS = ["mechanism", "epsilon", "delta", "alloc_alpha", "alloc_beta", "k",
                      "partition", "m", "p", "n", "predicted_std", "predicted_std_corrected"]


def cmd_experiment(args) -> int:
    seed = _seed(args)
    if args.trials < 2:
        raise UsageError("--trials must be >= 2")
    mechanisms = [m for m in args.mechanism.split(",") if m]
    epsilons = _float_list(args.epsilon)
    param, values = _grid(args.sweep) if args.sweep else (None, [None])
    first_beta = float(values[0]) if param == "beta" else None

    configs = []
    for mech in mechanisms:
        for eps in epsilons:
            base = ExperimentConfig(
                source=_source(args), budget=_budget(args, mech, eps, first_beta),
                k=args.clients, partition=args.partition, trials=args.trials,
                master_seed=seed, pn_mode=args.pn_mode, engine=args.engine, jobs=args.jobs)
            for v in values:
                configs.append(base if param is None else vary(base, param, v))

    header = {"command": "experiment", "master_seed": seed,
              "source": configs[0].describe()["source"],
              "mechanisms": mechanisms, "epsilons": epsilons,
              "sweep": args.sweep, "alloc_alpha": args.alloc_alpha,
              "alloc_beta": args.alloc_beta, "delta": args.delta, "clients": args.clients,
              "partition": args.partition, "pn_mode": args.pn_mode, "trials": args.trials,
              "engine": args.engine, "predict_only": args.predict_only}

    cache: dict[Any, Dataset] = {}

    def dataset_for(cfg: ExperimentConfig) -> Dataset:
        key = cfg.source if isinstance(cfg.source, SyntheticSpec) else str(cfg.source)
        if key not in cache:
            cache[key] = load_source(cfg.source, seed)
        return cache[key]

    if args.predict_only:
        rows = []
        for cfg in configs:
            ds = dataset_for(cfg)
            pred, corr = predicted_stds(ds, cfg.budget, cfg.k)
            b = cfg.budget
            rows.append([b.mechanism.value, b.epsilon, b.delta, b.alloc_alpha, b.alloc_beta,
                         cfg.k, cfg.partition.value, len(ds), ds.p, ds.n, pred, corr])
        with _open_output(args.output) as out:
            if args.format == "json":
                json.dump({"config": header,
                           "predictions": [dict(zip(PREDICTION_COLUMNS, r)) for r in rows]},
                          out, indent=2, sort_keys=True)
                out.write("\n")
            else:
                out.write("# " + json.dumps(header, sort_keys=True) + "\n")
                out.write(",".join(PREDICTION_COLUMNS) + "\n")
                for r in rows:
                    out.write(",".join("" if x is None else repr(x) if isinstance(x, float)
                                       else str(x) for x in r) + "\n")
        return 0

    reports = []
    for cfg in configs:
        log.info("running %s", json.dumps(cfg.describe(), sort_keys=True))
        rep = run_experiment(cfg, dataset_for(cfg))
        log.info("done in %.2fs: std %.4g", rep.wall_time, rep.std_auc)
        reports.append(rep)
    with _open_output(args.output) as out:
        if args.format == "json":
            write_reports_json(reports, out, header)
        else:
            write_reports_csv(reports, out, header)
    return 0


COMMANDS = {"auc": cmd_auc, "run": cmd_run, "experiment": cmd_experiment}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except DegenerateLabelsError as exc:
        log.error("%s", exc)
        return EXIT_DEGENERATE_LABELS
    except DegenerateCountsError as exc:
        log.error("%s", exc)
        return EXIT_DEGENERATE_COUNTS
    except (UsageError, FedAucError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
