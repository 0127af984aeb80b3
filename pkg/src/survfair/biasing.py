"""Bias injection experiments.

One repetition splits a dataset into a half to bias and an untouched
half, biases a proportion ``sigma`` of the first half, estimates every
measure on both halves by k-fold cross-validation and records the absolute
difference. The result is the mean over repetitions.

Seeds depend on the master seed, repetition and redraw attempt but not on
``sigma``: every sigma level of a sweep sees the same halves, the same
nested biased subsets and the same untouched-half losses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np

from .data import DataError, SurvivalDataset, concat, empty_like, kfold_partition
from .km import fit_km
from .metrics import CensoringWeights, MetricError, evaluate, resolve_measures
from .rsf import DistributionPrediction, RSFParams, fit_rsf, predict_both

MAX_REDRAWS = 5


class BiasMethod(str, enum.Enum):
    PERMUTATION = "permutation"
    UNDERSAMPLING = "undersampling"
    # each feature column shuffled independently
    PERMUTATION_COLUMNS = "permutation_columns"

    @classmethod
    def parse(cls, value) -> "BiasMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            known = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown bias method '{value}' (known: {known})") from None


@dataclass(frozen=True)
class BiasRunConfig:
    sigma: float = 0.0
    repetitions: int = 10
    folds: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.sigma < 1:
            raise ValueError("sigma must lie in [0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


class DegenerateFold(DataError):
    """A cross-validation fold without events."""


def apply_permutation(ds: SurvivalDataset, seed) -> SurvivalDataset:
    """Shuffle whole covariate rows; times, status, groups and ids stay put."""
    if ds.n < 2:
        raise DataError("permutation needs at least 2 rows")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.replace(features=ds.features[perm])


def apply_column_permutation(ds: SurvivalDataset, seed) -> SurvivalDataset:
    if ds.n < 2:
        raise DataError("permutation needs at least 2 rows")
    rng = np.random.default_rng(seed)
    X = ds.features.copy()
    for j in range(ds.p):
        X[:, j] = X[rng.permutation(ds.n), j]
    return ds.replace(features=X)


def apply_undersampling(ds: SurvivalDataset) -> SurvivalDataset:
    """Delete every row."""
    return empty_like(ds)


def apply_bias(method: BiasMethod, ds: SurvivalDataset, seed) -> SurvivalDataset:
    method = BiasMethod.parse(method)
    if method is BiasMethod.UNDERSAMPLING:
        return apply_undersampling(ds)
    if ds.n < 2:
        # a single row cannot be shuffled against anything
        return ds
    if method is BiasMethod.PERMUTATION:
        return apply_permutation(ds, seed)
    return apply_column_permutation(ds, seed)


def _seeds(*key, count=8):
    return [int(s) for s in np.random.SeedSequence([int(k) for k in key]).generate_state(count)]


def cv_losses(ds: SurvivalDataset, measures, learner_params: RSFParams, folds: int, seed) -> Dict[str, float]:
    """Mean per-fold value of each measure under k-fold cross-validation.

    Each fold refits the forest on the training part. Scoring rules are
    reported as ERV against a Kaplan-Meier curve fit on the training part;
    censoring weights come from the held-out fold. A measure undefined on a
    fold is skipped for that fold (NaN if undefined on every fold).
    """
    names = resolve_measures(measures)
    if ds.n < folds:
        raise DataError(f"{ds.n} rows cannot fill {folds} folds")
    s_part, s_fit = _seeds(seed, 0, count=2)
    assignment = kfold_partition(ds, folds, s_part)
    fold_seeds = _seeds(s_fit, 1, count=folds)
    values = {m: [] for m in names}
    for k in range(folds):
        train = ds.take(assignment.train_rows(k))
        test = ds.take(assignment.test_rows(k))
        if not train.status.any() or not test.status.any():
            raise DegenerateFold(f"fold {k} has no events")
        model = fit_rsf(train, replace(learner_params, seed=fold_seeds[k]))
        dist, risk = predict_both(model, test.features)
        baseline = DistributionPrediction.constant(fit_km(train.time, train.status), test.n)
        G = CensoringWeights.fit(test.time, test.status)
        for m in names:
            try:
                v = evaluate(m, dist, risk, test.time, test.status, G, baseline)
            except MetricError:
                v = math.nan
            values[m].append(v)
    return {m: _nanmean(v) for m, v in values.items()}


def _nanmean(values) -> float:
    a = np.asarray(values, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.mean()) if a.size else math.nan


def _halves(D: SurvivalDataset, seed):
    """Random halves: the first (to bias) gets floor(n/2) rows."""
    perm = np.random.default_rng(seed).permutation(D.n)
    m = D.n // 2
    return D.take(np.sort(perm[:m])), D.take(np.sort(perm[m:]))


def biased_half(D_B: SurvivalDataset, sigma: float, method: BiasMethod, order_seed, bias_seed) -> SurvivalDataset:
    """Bias ``round(sigma * |D_B|)`` random rows of ``D_B`` and recombine.

    Rows are chosen as a prefix of one random ordering, so the biased set at
    a larger sigma contains the one at a smaller sigma.
    """
    k = int(round(sigma * D_B.n))
    order = np.random.default_rng(order_seed).permutation(D_B.n)
    chosen = np.zeros(D_B.n, dtype=bool)
    chosen[order[:k]] = True
    D_BA, D_BD = D_B.take(~chosen), D_B.take(chosen)
    if k == 0:
        return D_B
    return concat([D_BA, apply_bias(method, D_BD, bias_seed)])


def _repetition(D, sigmas, names, learner_params, method, folds, seed, rep):
    """F_L per measure for every sigma in one repetition, redrawing the
    repetition (new derived seeds) when a fold has no events."""
    out = {}
    untouched = {}
    for sigma in sigmas:
        for attempt in range(MAX_REDRAWS + 1):
            s_split, s_order, s_bias, s_cv_b, s_cv_u = _seeds(seed, rep, attempt, count=5)
            D_B, D_U = _halves(D, s_split)
            try:
                if attempt not in untouched:
                    untouched[attempt] = cv_losses(D_U, names, learner_params, folds, s_cv_u)
                L_U = untouched[attempt]
                D_B = biased_half(D_B, sigma, method, s_order, s_bias)
                if D_B.n < folds:
                    raise DataError(f"biased half has {D_B.n} rows, fewer than {folds} folds")
                L_B = cv_losses(D_B, names, learner_params, folds, s_cv_b)
            except DegenerateFold:
                if attempt == MAX_REDRAWS:
                    raise DataError(
                        f"repetition {rep}, sigma={sigma}: fold without events after {MAX_REDRAWS} redraws"
                    ) from None
                continue
            out[sigma] = {m: abs(L_B[m] - L_U[m]) for m in names}
            break
    return out


def run_bias_sweep(
    D: SurvivalDataset,
    sigmas: Sequence[float],
    measures,
    learner_params: RSFParams,
    method,
    config: BiasRunConfig,
    reps: Optional[Sequence[int]] = None,
) -> Dict[float, Dict[str, list]]:
    """Per-repetition F_L for each sigma and measure.

    Returns ``{sigma: {measure: [F_L for each repetition]}}``. ``reps``
    restricts the repetitions computed (used to spread work over processes);
    the values do not depend on which process computes which repetition.
    """
    names = resolve_measures(measures)
    method = BiasMethod.parse(method)
    if D.n < 4 * config.folds:
        raise DataError(f"dataset has {D.n} rows; at least {4 * config.folds} needed for {config.folds}-fold halves")
    for s in sigmas:
        if not 0 <= s < 1:
            raise ValueError(f"sigma {s} outside [0, 1)")
    reps = range(config.repetitions) if reps is None else reps
    result = {s: {m: [] for m in names} for s in sigmas}
    for rep in reps:
        per = _repetition(D, list(sigmas), names, learner_params, method, config.folds, config.seed, rep)
        for s in sigmas:
            for m in names:
                result[s][m].append(per[s][m])
    return result


def run_bias_algorithm(
    D: SurvivalDataset,
    sigma: float,
    measures,
    learner_params: RSFParams,
    method,
    config: BiasRunConfig,
) -> Dict[str, float]:
    """Mean F_L over repetitions for one bias proportion ``sigma``."""
    per = run_bias_sweep(D, [sigma], measures, learner_params, method, config)[sigma]
    return {m: _nanmean(v) for m, v in per.items()}
