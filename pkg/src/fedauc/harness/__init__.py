"""Monte-Carlo harness: repeated trials, analytic predictors, synthetic data."""
from fedauc.harness.engine import TrialSimulator
from fedauc.harness.experiment import (ExperimentConfig, ExperimentReport, load_source,
                                       run_experiment, sweep, write_reports_csv,
                                       write_reports_json)
from fedauc.harness.predictors import (predict_std_global_laplace,
                                       predict_std_local_laplace_single, predict_std_rr,
                                       predict_std_rr_corrected)
from fedauc.harness.scores import score_perturbation_baseline, topk_attack
from fedauc.harness.synthetic import SyntheticSpec, generate_synthetic, separation_for_auc

__all__ = [
    "ExperimentConfig", "ExperimentReport", "SyntheticSpec", "TrialSimulator",
    "generate_synthetic", "load_source", "predict_std_global_laplace",
    "predict_std_local_laplace_single", "predict_std_rr", "predict_std_rr_corrected",
    "run_experiment", "score_perturbation_baseline", "separation_for_auc", "sweep",
    "topk_attack", "write_reports_csv", "write_reports_json",
]
