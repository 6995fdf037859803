"""Federated AUC estimation under label differential privacy."""
from fedauc.core_metrics import AucValue, Dataset, auc, auc_pairwise_oracle, read_csv
from fedauc.federation import PNMode, Strategy, partition, run_protocol
from fedauc.mechanisms import Mechanism, PrivacyBudget
from fedauc.rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "AucValue", "Dataset", "Mechanism", "PNMode", "PrivacyBudget", "RngStream",
    "Strategy", "auc", "auc_pairwise_oracle", "partition", "read_csv", "run_protocol",
]
