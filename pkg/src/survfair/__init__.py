"""Group-fairness auditing for survival models.

Survival evaluation measures, a log-rank random survival forest, bias
injection experiments and the statistics used to summarise them.
"""

from .data import (
    SurvivalDataset,
    SynthConfig,
    FoldAssignment,
    DataError,
    load_csv,
    write_csv,
    generate_synthetic,
    split_random,
    kfold_partition,
    subset_by_group,
)
from .km import SurvivalCurve, fit_km, fit_censoring_km, curve_eval
from .rsf import (
    RSFParams,
    RSFModel,
    DistributionPrediction,
    RiskPrediction,
    fit_rsf,
    predict_distribution,
    predict_risk,
)
from .metrics import MEASURES, MetricValue, CensoringWeights, MetricError, evaluate
from .fairness import FairnessResult, fairness_gap, audit_groups

__version__ = "0.1.0"

__all__ = [
    "SurvivalDataset",
    "SynthConfig",
    "FoldAssignment",
    "DataError",
    "load_csv",
    "write_csv",
    "generate_synthetic",
    "split_random",
    "kfold_partition",
    "subset_by_group",
    "SurvivalCurve",
    "fit_km",
    "fit_censoring_km",
    "curve_eval",
    "RSFParams",
    "RSFModel",
    "DistributionPrediction",
    "RiskPrediction",
    "fit_rsf",
    "predict_distribution",
    "predict_risk",
    "MEASURES",
    "MetricValue",
    "CensoringWeights",
    "MetricError",
    "evaluate",
    "FairnessResult",
    "fairness_gap",
    "audit_groups",
]
