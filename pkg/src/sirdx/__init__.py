"""SIRD-X epidemic simulator with surrogate, classifier and sensitivity tooling."""
from .classifiers import KernelSVC, KernelSpec, LogisticClassifier, confusion, logistic_train, svm_train
from .core import (
    BASELINE_PARAMS, INITIAL_STATE, POLICY_PARAMS, EpidemicState, IntegratorConfig, Params,
    SIRDXSimulator, analytic_peak, integrate, integrate_oracle, outcome, simulate_batch,
)
from .dataset import PAPER_RANGES, Dataset, LabelRule, MinMaxScaler, ParamRanges, generate, read_csv, write_csv
from .exceptions import SirdxError
from .sobol import SobolPlan, analyze, sobol_run
from .surrogate import MLPSurrogate, MlpConfig, TrainConfig, cross_validate, r2_score, train

__version__ = "0.1.0"

__all__ = [
    "BASELINE_PARAMS", "INITIAL_STATE", "POLICY_PARAMS", "PAPER_RANGES",
    "Dataset", "EpidemicState", "IntegratorConfig", "KernelSVC", "KernelSpec", "LabelRule",
    "LogisticClassifier", "MLPSurrogate", "MinMaxScaler", "MlpConfig", "ParamRanges", "Params",
    "SIRDXSimulator", "SirdxError", "SobolPlan", "TrainConfig",
    "analytic_peak", "analyze", "confusion", "cross_validate", "generate", "integrate",
    "integrate_oracle", "logistic_train", "outcome", "r2_score", "read_csv", "simulate_batch",
    "sobol_run", "svm_train", "train", "write_csv",
]
