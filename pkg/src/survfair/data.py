"""Survival data container, CSV ingestion, synthetic data and splitting."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or out-of-contract survival data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored survival data ``(X, T, status)`` with optional groups.

    Arrays are copied and made read-only on construction. A dataset with
    zero rows is allowed only as the placeholder produced by deletion
    (undersampling); every other operation expects ``n >= 1``.
    """

    features: np.ndarray
    time: np.ndarray
    status: np.ndarray
    group: Optional[np.ndarray] = None
    ids: Optional[np.ndarray] = None
    feature_names: tuple = field(default=())

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).reshape(-1)
        n = time.shape[0]
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(n, -1) if n else features.reshape(0, 0)
        if features.ndim != 2 or features.shape[0] != n:
            raise DataError(f"features must have {n} rows, got shape {features.shape}")
        status = np.asarray(self.status)
        if status.shape != (n,):
            raise DataError(f"status must have length {n}, got {status.shape}")
        if n and not np.all((status == 0) | (status == 1)):
            raise DataError("status values must be 0 or 1")
        status = status.astype(np.int8)
        if n and not (np.all(np.isfinite(time)) and np.all(time > 0)):
            raise DataError("time values must be positive and finite")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        group = self.group
        if group is not None:
            group = np.asarray(group, dtype=object).reshape(-1)
            if group.shape[0] != n:
                raise DataError(f"group must have length {n}, got {group.shape[0]}")
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (n,):
            raise DataError(f"ids must have length {n}")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(features.shape[1]))
        if len(names) != features.shape[1]:
            raise DataError("feature_names length does not match feature count")

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "time", _frozen(time))
        object.__setattr__(self, "status", _frozen(status))
        object.__setattr__(self, "group", None if group is None else _frozen(group))
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def take(self, rows) -> "SurvivalDataset":
        """Rows selected by integer index or boolean mask, ids carried along."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        rows = rows.astype(np.int64)
        return SurvivalDataset(
            features=self.features[rows].reshape(len(rows), self.p),
            time=self.time[rows],
            status=self.status[rows],
            group=None if self.group is None else self.group[rows],
            ids=self.ids[rows],
            feature_names=self.feature_names,
        )

    def replace(self, **changes) -> "SurvivalDataset":
        kw = dict(
            features=self.features,
            time=self.time,
            status=self.status,
            group=self.group,
            ids=self.ids,
            feature_names=self.feature_names,
        )
        kw.update(changes)
        return SurvivalDataset(**kw)

    def equals(self, other: "SurvivalDataset") -> bool:
        if self.n != other.n or self.p != other.p:
            return False
        same_group = (self.group is None and other.group is None) or (
            self.group is not None
            and other.group is not None
            and list(self.group) == list(other.group)
        )
        return (
            same_group
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.ids, other.ids)
            and self.feature_names == other.feature_names
        )


def concat(parts: Sequence[SurvivalDataset]) -> SurvivalDataset:
    """Stack datasets row-wise, keeping ids. Parts may be empty."""
    parts = list(parts)
    p = parts[0].p
    has_group = parts[0].group is not None
    return SurvivalDataset(
        features=np.vstack([d.features.reshape(d.n, p) for d in parts]),
        time=np.concatenate([d.time for d in parts]),
        status=np.concatenate([d.status for d in parts]),
        group=np.concatenate([d.group for d in parts]) if has_group else None,
        ids=np.concatenate([d.ids for d in parts]),
        feature_names=parts[0].feature_names,
    )


def empty_like(ds: SurvivalDataset) -> SurvivalDataset:
    return ds.take(np.zeros(0, dtype=np.int64))


# --------------------------------------------------------------------------
# CSV


def load_csv(
    path,
    time_col: str = "time",
    status_col: str = "status",
    group_col: Optional[str] = "group",
) -> SurvivalDataset:
    """Read a comma-separated file with a header row.

    The group column is optional: if ``group_col`` is not present in the
    header the dataset has no groups. Every other column must be numeric
    and becomes a feature. Row numbers in error messages count data rows
    from 1 (the header is not counted).
    """
    if not os.path.isfile(path):
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise DataError(f"{path}: duplicate column(s) {', '.join(dupes)}")
        for role, col in (("time", time_col), ("status", status_col)):
            if col not in header:
                raise DataError(f"{path}: missing {role} column '{col}'")
        if time_col == status_col or (group_col is not None and group_col in (time_col, status_col)):
            raise DataError("schema names the same column twice")
        gi = header.index(group_col) if group_col is not None and group_col in header else None
        ti, si = header.index(time_col), header.index(status_col)
        fcols = [j for j in range(len(header)) if j not in (ti, si, gi)]

        times, stats, groups, feats = [], [], [], []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r}: expected {len(header)} fields, got {len(rec)}")
            t = _parse_float(rec[ti], path, r, time_col)
            if not (math.isfinite(t) and t > 0):
                raise DataError(f"{path}: row {r}, column '{time_col}': time must be positive, got {rec[ti]!r}")
            s = _parse_float(rec[si], path, r, status_col)
            if s not in (0.0, 1.0):
                raise DataError(f"{path}: row {r}, column '{status_col}': status must be 0 or 1, got {rec[si]!r}")
            row = []
            for j in fcols:
                v = _parse_float(rec[j], path, r, header[j])
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {r}, column '{header[j]}': non-finite value")
                row.append(v)
            times.append(t)
            stats.append(int(s))
            feats.append(row)
            if gi is not None:
                groups.append(rec[gi].strip())
    if not times:
        raise DataError(f"{path}: no data rows")
    return SurvivalDataset(
        features=np.array(feats, dtype=float).reshape(len(times), len(fcols)),
        time=np.array(times),
        status=np.array(stats),
        group=np.array(groups, dtype=object) if gi is not None else None,
        feature_names=tuple(header[j] for j in fcols),
    )


def _parse_float(cell: str, path, row: int, col: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}: row {row}, column '{col}': not a number: {cell!r}") from None


def write_csv(ds: SurvivalDataset, path, time_col="time", status_col="status", group_col="group"):
    """Write ``ds`` in the layout :func:`load_csv` reads. Floats use ``repr``
    so a reload is exact."""
    header = list(ds.feature_names) + [time_col, status_col]
    if ds.group is not None:
        header.append(group_col)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            row += [repr(float(ds.time[i])), str(int(ds.status[i]))]
            if ds.group is not None:
                row.append(str(ds.group[i]))
            w.writerow(row)


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthConfig:
    n: int = 500
    p: int = 5
    effect_weights: Optional[tuple] = None
    baseline_shape: float = 1.5
    baseline_scale: float = 10.0
    target_censoring: float = 0.3
    group_count: int = 2

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DataError("n and p must be >= 1")
        if not 0 <= self.target_censoring < 1:
            raise DataError("target_censoring must lie in [0, 1)")
        if self.baseline_shape <= 0 or self.baseline_scale <= 0:
            raise DataError("baseline_shape and baseline_scale must be positive")
        if self.group_count < 1:
            raise DataError("group_count must be >= 1")
        if self.effect_weights is not None and len(self.effect_weights) != self.p:
            raise DataError(f"effect_weights must have length p={self.p}")

    @property
    def weights(self) -> np.ndarray:
        if self.effect_weights is None:
            return np.zeros(self.p)
        return np.asarray(self.effect_weights, dtype=float)

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        kw = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected 'key = value'")
                key, val = (s.strip() for s in line.split("=", 1))
                kw[key] = val
        return cls.from_mapping(kw)

    @classmethod
    def from_mapping(cls, kw: dict) -> "SynthConfig":
        conv = {
            "n": int,
            "p": int,
            "baseline_shape": float,
            "baseline_scale": float,
            "target_censoring": float,
            "group_count": int,
        }
        out = {}
        for key, val in kw.items():
            if key == "effect_weights":
                if isinstance(val, str):
                    val = [float(v) for v in val.replace(",", " ").split()]
                out[key] = tuple(float(v) for v in val)
            elif key in conv:
                out[key] = conv[key](val)
            else:
                raise DataError(f"unknown synthetic config key '{key}'")
        return cls(**out)


def generate_synthetic(config: SynthConfig, seed: int) -> SurvivalDataset:
    """Weibull event times with covariate-scaled scale, exponential censoring.

    Features are standard normal. The event time of row ``i`` is Weibull
    with the configured shape and scale ``baseline_scale * exp(x_i @ w)``,
    so ``-(x_i @ w)`` is the true risk score. The exponential censoring rate
    is bisected on the realised draws until the censored fraction matches
    ``target_censoring`` as closely as the sample allows.
    """
    rng = np.random.default_rng(seed)
    n, p = config.n, config.p
    X = rng.standard_normal((n, p))
    scale = config.baseline_scale * np.exp(X @ config.weights)
    event = scale * rng.weibull(config.baseline_shape, size=n)
    unit_cens = rng.standard_exponential(n)
    if config.group_count > 1:
        group = np.array([f"g{k}" for k in rng.integers(0, config.group_count, size=n)], dtype=object)
    else:
        group = np.full(n, "g0", dtype=object)

    if config.target_censoring == 0:
        time, status = event, np.ones(n, dtype=np.int8)
    else:
        rate = _tune_censoring_rate(event, unit_cens, config.target_censoring)
        cens = unit_cens / rate
        status = (event <= cens).astype(np.int8)
        time = np.minimum(event, cens)
    return SurvivalDataset(features=X, time=time, status=status, group=group)


def _tune_censoring_rate(event: np.ndarray, unit_cens: np.ndarray, target: float) -> float:
    def frac(rate):
        return np.mean(unit_cens / rate < event)

    lo, hi = 1e-12, 1.0
    while frac(hi) < target:
        hi *= 2.0
    for _ in range(200):
        mid = math.sqrt(lo * hi) if lo > 0 else hi / 2
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    # choose whichever bracket end lands closer to the target
    return hi if abs(frac(hi) - target) <= abs(frac(lo) - target) else lo


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_index: np.ndarray
    k: int

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_index == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_index != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_index, minlength=self.k)


def split_random(ds: SurvivalDataset, fraction: float, seed) -> tuple:
    """Split into a part of ``round(fraction * n)`` random rows and the rest.

    Both parts keep the input row order.
    """
    if ds.n < 2:
        raise DataError("split_random needs at least 2 rows")
    if not 0 < fraction < 1:
        raise DataError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    m = int(round(fraction * ds.n))
    chosen = np.zeros(ds.n, dtype=bool)
    chosen[rng.permutation(ds.n)[:m]] = True
    return ds.take(chosen), ds.take(~chosen)


def kfold_partition(ds_or_n, k: int, seed) -> FoldAssignment:
    """Balanced random fold labels; fold sizes differ by at most one."""
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else ds_or_n.n
    if k < 2:
        raise DataError("k must be >= 2")
    if n < k:
        raise DataError(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    return FoldAssignment(fold_index=labels[rng.permutation(n)], k=k)


def subset_by_group(ds: SurvivalDataset, label) -> SurvivalDataset:
    if ds.group is None:
        raise DataError("dataset has no group column")
    mask = ds.group == label
    if not mask.any():
        raise DataError(f"group label {label!r} not present")
    return ds.take(mask)
