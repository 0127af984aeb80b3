"""Per-group evaluation and the absolute group performance gap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DataError, SurvivalDataset
from .metrics import CensoringWeights, MetricError, evaluate, resolve_measures
from .rsf import DistributionPrediction, RiskPrediction


@dataclass(frozen=True)
class FairnessResult:
    measure: str
    loss_advantaged: float
    loss_disadvantaged: float
    gap: float
    group_sizes: tuple
    error: Optional[str] = None

    def row(self) -> dict:
        return {
            "measure": self.measure,
            "L_A": self.loss_advantaged,
            "L_D": self.loss_disadvantaged,
            "F_L": self.gap,
            "n_A": self.group_sizes[0],
            "n_D": self.group_sizes[1],
        }


def fairness_gap(loss_a: float, loss_b: float) -> float:
    if not (math.isfinite(loss_a) and math.isfinite(loss_b)):
        raise ValueError(f"non-finite loss: {loss_a}, {loss_b}")
    return abs(loss_a - loss_b)


def group_labels(ds: SurvivalDataset) -> list:
    if ds.group is None:
        raise DataError("dataset has no group column")
    return sorted(set(ds.group.tolist()), key=str)


def audit_groups(
    pred_dist: DistributionPrediction,
    pred_risk: RiskPrediction,
    test: SurvivalDataset,
    measures=None,
    G: Optional[CensoringWeights] = None,
    baseline: Optional[DistributionPrediction] = None,
    labels=None,
) -> list:
    """Evaluate each measure on both groups of ``test`` and take the gap.

    Scoring rules are standardised per group against ``baseline`` (rows
    aligned with ``test``). Either prediction may be None when only
    measures of the other kind are requested. The first label (sorted,
    unless ``labels`` is given) is reported as the advantaged group. A measure that fails on a
    group yields a result with NaN values and ``error`` set; the others are
    still computed.
    """
    names = resolve_measures(measures if measures is not None else list_all())
    found = group_labels(test)
    if labels is None:
        labels = found
    if len(found) != 2 or set(labels) != set(found):
        raise DataError(f"fairness audit needs exactly two groups, found {len(found)}: {found}")
    if G is None:
        G = CensoringWeights.fit(test.time, test.status)
    rows = [np.flatnonzero(test.group == lab) for lab in labels]
    sizes = (len(rows[0]), len(rows[1]))

    out = []
    for name in names:
        try:
            losses = [
                evaluate(
                    name,
                    None if pred_dist is None else pred_dist.take(r),
                    None if pred_risk is None else pred_risk.take(r),
                    test.time[r],
                    test.status[r],
                    G,
                    None if baseline is None else baseline.take(r),
                )
                for r in rows
            ]
        except MetricError as exc:
            out.append(FairnessResult(name, math.nan, math.nan, math.nan, sizes, str(exc)))
            continue
        out.append(FairnessResult(name, losses[0], losses[1], fairness_gap(*losses), sizes))
    return out


def list_all() -> list:
    from .metrics import MEASURES

    return list(MEASURES)
