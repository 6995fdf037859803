import dataclasses
import io
import itertools
import json
import math

import numpy as np
import pytest

from fedauc.core_metrics import Dataset, auc
from fedauc.errors import InvalidInputError
from fedauc.harness import (ExperimentConfig, SyntheticSpec, generate_synthetic,
                            predict_std_global_laplace, predict_std_local_laplace_single,
                            predict_std_rr, predict_std_rr_corrected, run_experiment,
                            score_perturbation_baseline, separation_for_auc, sweep, topk_attack,
                            write_reports_csv, write_reports_json)
from fedauc.mechanisms import PrivacyBudget
from fedauc.rng import RngStream


def exact_rr_std(m, positives, eps):
    """Std of sum(r_i * flipped_i) / (P N) by enumerating every flip pattern."""
    rho = 1 / (1 + math.exp(eps))
    labels = np.zeros(m, dtype=int)
    labels[list(positives)] = 1
    p, n = labels.sum(), m - labels.sum()
    ranks = np.arange(m)
    values, weights = [], []
    for flips in itertools.product([0, 1], repeat=m):
        f = np.array(flips)
        values.append(np.dot(ranks, labels ^ f) / (p * n))
        weights.append(np.prod(np.where(f == 1, rho, 1 - rho)))
    values, weights = np.array(values), np.array(weights)
    mean = np.dot(weights, values)
    return math.sqrt(np.dot(weights, (values - mean) ** 2))


def test_rr_predictor_examples():
    assert predict_std_rr(4, 2, 2, 1.0) ** 2 == pytest.approx(0.17204, abs=1e-5)
    assert predict_std_rr(4, 2, 2, 1.0) == pytest.approx(0.4148, abs=1e-4)
    assert predict_std_rr(4, 2, 2, 1.0) == pytest.approx(exact_rr_std(4, [1, 3], 1.0), rel=1e-12)
    assert predict_std_rr(6, 2, 4, 0.7) == pytest.approx(exact_rr_std(6, [0, 5], 0.7), rel=1e-12)
    assert predict_std_rr(100, 30, 70, math.inf) == 0.0
    assert predict_std_rr(100, 30, 70, 800.0) == 0.0
    ratio = predict_std_rr(10_000, 2_500, 7_500, 1.0) / predict_std_rr(100_000, 25_000, 75_000, 1.0)
    assert ratio == pytest.approx(math.sqrt(10), rel=1e-3)
    with pytest.raises(InvalidInputError):
        predict_std_rr(4, 0, 4, 1.0)
    with pytest.raises(InvalidInputError):
        predict_std_rr(5, 2, 2, 1.0)


def test_rr_corrected_predictor():
    base = predict_std_rr(100, 50, 50, 1.0)
    rho = 1 / (1 + math.e)
    # At pi = 1/2 both debias coefficients equal rho.
    assert predict_std_rr_corrected(100, 50, 50, 1.0) == pytest.approx(base / (1 - 2 * rho))


def test_global_laplace_predictor():
    assert predict_std_global_laplace(3, 1, 2, 1, 1.0) == pytest.approx(math.sqrt(2))
    a = predict_std_global_laplace(1000, 300, 700, 10, 0.5)
    assert predict_std_global_laplace(1000, 300, 700, 40, 0.5) == pytest.approx(2 * a)
    with pytest.raises(InvalidInputError):
        predict_std_global_laplace(3, 1, 2, 0, 1.0)


def test_local_single_predictor():
    assert predict_std_local_laplace_single(3, 1, 2, 1.0) ** 2 == pytest.approx(2.5)
    assert predict_std_local_laplace_single(1, 1, 0, 1.0) == 0.0
    assert predict_std_local_laplace_single(2, 1, 1, 1.0) ** 2 == pytest.approx(2 * 1 / 1)
    k, p, n = 10_000, 2_559, 7_441
    direct = math.sqrt(sum(2 * i * i for i in range(k))) / (p * n * 0.5)
    assert predict_std_local_laplace_single(k, p, n, 0.5) == pytest.approx(direct, rel=1e-12)
    ratio = (predict_std_global_laplace(k, p, n, k, 0.5)
             / predict_std_local_laplace_single(k, p, n, 0.5))
    assert ratio == pytest.approx(math.sqrt(3), rel=5e-3)
    with pytest.raises(InvalidInputError):
        predict_std_local_laplace_single(5, 2, 2, 1.0)


def test_synthetic_generator():
    ds = generate_synthetic(SyntheticSpec(45_840), RngStream(1))
    assert abs(ds.base_rate - 0.2559) < 0.01
    assert abs(ds.base_rate - 0.2559) < 2 * math.sqrt(0.2559 * 0.7441 / 45_840)
    assert ds.scores.min() >= 0 and ds.scores.max() <= 1
    assert ds.metadata["clean_auc"] == auc(ds.scores, ds.labels).value
    assert ds.metadata["clean_auc"] == pytest.approx(SyntheticSpec(2).expected_auc, abs=0.01)
    flat = generate_synthetic(SyntheticSpec(20_000, 0.3, 0.0), RngStream(2))
    assert abs(flat.metadata["clean_auc"] - 0.5) < 3 * 0.0045
    sharp = generate_synthetic(SyntheticSpec(5_000, 0.3, 12.0), RngStream(2))
    assert sharp.metadata["clean_auc"] > 0.999
    with pytest.raises(InvalidInputError):
        SyntheticSpec(100, 0.0)
    with pytest.raises(InvalidInputError):
        SyntheticSpec(100, 1.0)


def test_separation_for_auc():
    assert SyntheticSpec(10, separation=separation_for_auc(0.75)).expected_auc == \
        pytest.approx(0.75)
    assert separation_for_auc(0.75) == pytest.approx(0.954, abs=1e-3)


def test_topk_attack():
    ds = Dataset([0.9, 0.8, 0.2, 0.1, 0.7], [1, 1, 0, 0, 1])
    assert topk_attack(ds, [3]) == [(3, 1.0, 1.0)]
    assert topk_attack(ds, [5]) == [(5, 0.6, 1.0)]
    with pytest.raises(InvalidInputError):
        topk_attack(ds, [6])
    ds = generate_synthetic(SyntheticSpec(50_000), RngStream(3))
    precision = [p for _, p, _ in topk_attack(ds, [100, 1000, 5000, 20000, 50000])]
    assert all(a >= b for a, b in zip(precision, precision[1:]))


def test_score_perturbation_baseline():
    ds = generate_synthetic(SyntheticSpec(20_000), RngStream(4))
    clean = ds.metadata["clean_auc"]
    assert score_perturbation_baseline(ds, 1000, RngStream(1)).value == \
        pytest.approx(clean, abs=1e-3)
    assert score_perturbation_baseline(ds, 1.0, RngStream(1)).value < clean - 0.1
    assert score_perturbation_baseline(ds, 1e12, RngStream(1)).value == \
        pytest.approx(clean, abs=1e-9)


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(SyntheticSpec(5_000), RngStream(7))


def test_experiment_rr_large_epsilon(small):
    rep = run_experiment(ExperimentConfig(small, PrivacyBudget(50), k=10, trials=20))
    assert rep.std_auc < 1e-4
    assert rep.mean_auc == pytest.approx(rep.clean_auc, abs=1e-4)
    assert rep.clamp_count == 0 and rep.degenerate_count == 0


def test_experiment_deterministic_and_parallel_safe(small):
    cfg = ExperimentConfig(small, PrivacyBudget(1, mechanism="local-laplace"), k=20, trials=30)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    c = run_experiment(dataclasses.replace(cfg, jobs=3))
    assert a.row() == b.row() == c.row()
    assert np.array_equal(a.estimates, c.estimates)


def test_protocol_engine_same_report(small):
    cfg = ExperimentConfig(small, PrivacyBudget(2), k=5, trials=4)
    assert run_experiment(cfg).row() == run_experiment(
        dataclasses.replace(cfg, engine="protocol")).row()


def test_experiment_rr_std_shrinks_with_epsilon(small):
    stds = [run_experiment(ExperimentConfig(small, PrivacyBudget(e), k=10, trials=200)).std_auc
            for e in (1, 2)]
    assert stds[1] < stds[0]


def test_experiment_config_validation(small):
    with pytest.raises(InvalidInputError):
        ExperimentConfig(small, PrivacyBudget(1), trials=1)
    with pytest.raises(InvalidInputError):
        ExperimentConfig(small, PrivacyBudget(1), engine="gpu")
    with pytest.raises(InvalidInputError):
        run_experiment(ExperimentConfig(small, PrivacyBudget(1), k=10_000))


def test_synthetic_source_and_sweep():
    cfg = ExperimentConfig(SyntheticSpec(2_000), PrivacyBudget(1, mechanism="local-laplace"),
                           k=10, trials=5)
    reports = sweep(cfg, "alpha", [0.2, 0.5, 0.8])
    assert [r.alloc_alpha for r in reports] == [0.2, 0.5, 0.8]
    assert all(r.m == 2_000 for r in reports)
    reports = sweep(cfg, "m", [1_000, 3_000])
    assert [r.m for r in reports] == [1_000, 3_000]
    with pytest.raises(InvalidInputError):
        sweep(cfg, "gamma", [1])


def test_report_writers(small):
    reps = [run_experiment(ExperimentConfig(small, PrivacyBudget(e), k=4, trials=3))
            for e in (1, 2)]
    buf = io.StringIO()
    write_reports_csv(reps, buf, {"master_seed": 0})
    lines = buf.getvalue().splitlines()
    assert lines[0] == '# {"master_seed": 0}'
    assert lines[1].startswith("mechanism,epsilon")
    assert len(lines) == 4 and "wall_time" not in lines[1]
    buf = io.StringIO()
    write_reports_json(reps, buf, {"master_seed": 0})
    doc = json.loads(buf.getvalue())
    assert doc["config"] == {"master_seed": 0} and len(doc["reports"]) == 2
    assert doc["reports"][0]["std_auc"] >= 0


def test_global_laplace_monte_carlo_matches_predictor():
    ds = generate_synthetic(SyntheticSpec(10_000), RngStream(12))
    rep = run_experiment(ExperimentConfig(ds, PrivacyBudget(1, mechanism="global-laplace"),
                                          k=100, trials=2000, pn_mode="oracle"))
    assert rep.clamp_count == 0
    assert rep.std_auc == pytest.approx(rep.predicted_std, rel=0.10)


@pytest.mark.parametrize("eps", [1, 2, 4, 8])
def test_predictors_bracket_empirical_std(eps):
    """Oracle P/N; RR is compared with its better-matching reading."""
    ds = generate_synthetic(SyntheticSpec(20_000), RngStream(13))
    rr = run_experiment(ExperimentConfig(ds, PrivacyBudget(eps), k=20, trials=500,
                                         pn_mode="oracle"))
    ratios = [rr.std_auc_raw / rr.predicted_std, rr.std_auc_raw / rr.predicted_std_corrected]
    assert min(ratios, key=lambda r: abs(math.log(r))) == pytest.approx(1, abs=0.35)
    assert 0.75 <= min(ratios, key=lambda r: abs(math.log(r))) <= 1.35
    gl = run_experiment(ExperimentConfig(ds, PrivacyBudget(eps, mechanism="global-laplace"),
                                         k=50, trials=500, pn_mode="oracle"))
    assert 0.75 <= gl.std_auc_raw / gl.predicted_std <= 1.35
    single = generate_synthetic(SyntheticSpec(2_000), RngStream(14))
    ll = run_experiment(ExperimentConfig(single, PrivacyBudget(eps, mechanism="local-laplace"),
                                         k=2_000, trials=500, pn_mode="oracle"))
    assert 0.75 <= ll.std_auc_raw / ll.predicted_std <= 1.35
