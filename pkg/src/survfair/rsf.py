"""Random survival forest with log-rank splitting.

Trees are grown on bootstrap samples. At every node ``mtry`` features are
drawn without replacement and the split maximising the absolute
standardised log-rank statistic between the two children is taken.
Leaves hold the Nelson-Aalen cumulative hazard of their in-bag members on
the forest's time grid (the sorted distinct training event times); the
ensemble hazard is the mean over trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numba import njit

from .data import DataError, SurvivalDataset


@dataclass(frozen=True)
class RSFParams:
    tree_count: int = 100
    mtry: Optional[int] = None  # None -> ceil(sqrt(p))
    min_node_size: int = 3
    max_depth: Optional[int] = None
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def resolved_mtry(self, p: int) -> int:
        m = math.ceil(math.sqrt(p)) if self.mtry is None else self.mtry
        if not 1 <= m <= p:
            raise ValueError(f"mtry={m} outside [1, {p}]")
        return m


@dataclass(eq=False)
class SurvivalTree:
    """Flat node arrays. ``feature[k] == -1`` marks a leaf whose hazard row
    is ``leaf_cumhaz[leaf_index[k]]``. Rows with ``x[feature] <= threshold``
    go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_index: np.ndarray
    leaf_cumhaz: np.ndarray
    inbag: np.ndarray  # bootstrap multiplicity of every training row

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    def topology(self):
        """Structure without thresholds, for comparing fitted trees."""
        return (tuple(self.feature), tuple(self.left), tuple(self.right))


@dataclass(eq=False)
class RSFModel:
    trees: List[SurvivalTree]
    time_grid: np.ndarray
    n_features: int
    params: RSFParams = field(default_factory=RSFParams)

    def to_json(self) -> str:
        doc = {
            "format": "survfair-rsf/1",
            "n_features": self.n_features,
            "params": {
                "tree_count": self.params.tree_count,
                "mtry": self.params.mtry,
                "min_node_size": self.params.min_node_size,
                "max_depth": self.params.max_depth,
                "seed": self.params.seed,
                "bootstrap": self.params.bootstrap,
            },
            "time_grid": self.time_grid.tolist(),
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "leaf_index": t.leaf_index.tolist(),
                    "leaf_cumhaz": t.leaf_cumhaz.tolist(),
                    "inbag": t.inbag.tolist(),
                }
                for t in self.trees
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RSFModel":
        doc = json.loads(text)
        if doc.get("format") != "survfair-rsf/1":
            raise ValueError("not a survfair forest dump")
        grid = np.array(doc["time_grid"], dtype=float)
        trees = [
            SurvivalTree(
                feature=np.array(t["feature"], dtype=np.int64),
                threshold=np.array(t["threshold"], dtype=float),
                left=np.array(t["left"], dtype=np.int64),
                right=np.array(t["right"], dtype=np.int64),
                leaf_index=np.array(t["leaf_index"], dtype=np.int64),
                leaf_cumhaz=np.array(t["leaf_cumhaz"], dtype=float).reshape(-1, grid.shape[0]),
                inbag=np.array(t["inbag"], dtype=np.int64),
            )
            for t in doc["trees"]
        ]
        return cls(trees=trees, time_grid=grid, n_features=doc["n_features"], params=RSFParams(**doc["params"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "RSFModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True, eq=False)
class DistributionPrediction:
    """Survival curves of ``n`` observations on a shared step grid.

    Row ``i`` holds ``S_i`` on ``[time_grid[j], time_grid[j+1])``; before
    the first grid point every curve equals 1.
    """

    time_grid: np.ndarray
    survival_matrix: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.time_grid, dtype=float).reshape(-1)
        surv = np.asarray(self.survival_matrix, dtype=float)
        if surv.ndim != 2 or surv.shape[1] != grid.shape[0]:
            raise ValueError("survival_matrix must be (n, len(time_grid))")
        if grid.shape[0] > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("time_grid must be strictly increasing")
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "survival_matrix", surv)

    @property
    def n(self) -> int:
        return self.survival_matrix.shape[0]

    def take(self, rows) -> "DistributionPrediction":
        return DistributionPrediction(self.time_grid, self.survival_matrix[np.asarray(rows)])

    def survival_at(self, t, side: str = "right") -> np.ndarray:
        """``S_i(t_i)`` row-wise (``len(t) == n``)."""
        t = np.asarray(t, dtype=float).reshape(-1)
        idx = np.searchsorted(self.time_grid, t, side=side)
        padded = np.hstack([np.ones((self.n, 1)), self.survival_matrix])
        return padded[np.arange(self.n), idx]

    def on_grid(self, grid) -> np.ndarray:
        """Every curve evaluated (right-continuously) at the points ``grid``."""
        idx = np.searchsorted(self.time_grid, np.asarray(grid, dtype=float), side="right")
        padded = np.hstack([np.ones((self.n, 1)), self.survival_matrix])
        return padded[:, idx]

    def density_at(self, t) -> np.ndarray:
        from .km import interval_density

        return interval_density(self.time_grid, self.survival_matrix, np.asarray(t, dtype=float).reshape(-1))

    @classmethod
    def constant(cls, curve, n: int) -> "DistributionPrediction":
        """``n`` copies of one fitted curve (e.g. a Kaplan-Meier baseline)."""
        return cls(curve.times, np.tile(curve.survival, (n, 1)))


@dataclass(frozen=True, eq=False)
class RiskPrediction:
    risk: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.risk, dtype=float).reshape(-1)
        if not np.all(np.isfinite(r)):
            raise ValueError("risk values must be finite")
        object.__setattr__(self, "risk", r)

    def take(self, rows) -> "RiskPrediction":
        return RiskPrediction(self.risk[np.asarray(rows)])


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _best_split(X, rows, r, ev, feats, min_node):
    """Best log-rank split of ``rows`` over candidate features ``feats``.

    ``r[i]`` is the number of grid times <= T_i, so row i is at risk at
    grid positions ``0 .. r[i]-1`` and, if ``ev[i]``, dies at ``r[i]-1``.
    Returns (feature, threshold, n_left, stat) with feature -1 if none.
    """
    s = rows.shape[0]
    # node-local event times, as sorted global grid positions
    maxpos = 0
    for a in range(s):
        if r[rows[a]] > maxpos:
            maxpos = r[rows[a]]
    mark = np.zeros(maxpos + 1, np.int64)
    for a in range(s):
        i = rows[a]
        if ev[i] == 1:
            mark[r[i] - 1] = 1
    # local index of grid position g among node event times <= g
    J = 0
    cum = np.zeros(maxpos + 1, np.int64)
    for g in range(maxpos + 1):
        J += mark[g]
        cum[g] = J
    best_f = -1
    best_thr = 0.0
    best_nl = 0
    best_stat = -1.0
    if J < 2:
        return best_f, best_thr, best_nl, best_stat
    rl = np.empty(s, np.int64)
    Y = np.zeros(J, np.float64)
    D = np.zeros(J, np.float64)
    for a in range(s):
        i = rows[a]
        k = cum[r[i] - 1] if r[i] > 0 else 0
        rl[a] = k
        for j in range(k):
            Y[j] += 1.0
        if ev[i] == 1:
            D[k - 1] += 1.0
    # variance factor per time, independent of the split
    vf = np.zeros(J, np.float64)
    for j in range(J):
        if Y[j] > 1.0:
            vf[j] = D[j] * (Y[j] - D[j]) / (Y[j] - 1.0)
    YL = np.empty(J, np.float64)
    DL = np.empty(J, np.float64)
    vals = np.empty(s, np.float64)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for a in range(s):
            vals[a] = X[rows[a], f]
        order = np.argsort(vals, kind="mergesort")
        YL[:] = 0.0
        DL[:] = 0.0
        for q in range(s - 1):
            a = order[q]
            k = rl[a]
            for j in range(k):
                YL[j] += 1.0
            if ev[rows[a]] == 1:
                DL[k - 1] += 1.0
            nl = q + 1
            x0 = vals[a]
            x1 = vals[order[q + 1]]
            if x1 <= x0 or nl < min_node or s - nl < min_node:
                continue
            num = 0.0
            var = 0.0
            for j in range(J):
                if Y[j] > 0.0:
                    frac = YL[j] / Y[j]
                    num += DL[j] - frac * D[j]
                    var += frac * (1.0 - frac) * vf[j]
            if var <= 0.0:
                continue
            stat = abs(num) / math.sqrt(var)
            if stat > best_stat:
                best_stat = stat
                best_f = f
                thr = x0 + (x1 - x0) / 2.0
                if thr >= x1:
                    thr = x0
                best_thr = thr
                best_nl = nl
    return best_f, best_thr, best_nl, best_stat


@njit(cache=True)
def _grow(X, r, ev, sample, G, keys, mtry, min_node, max_depth):
    m = sample.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    leaf_index = np.full(cap, -1, np.int64)
    order = sample.copy()
    leaf_start = np.empty(cap, np.int64)
    leaf_end = np.empty(cap, np.int64)
    n_leaves = 0

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    tmp = np.empty(m, np.int64)
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        size = end - start
        bf = -1
        thr = 0.0
        if size >= 2 * min_node and (max_depth < 0 or depth < max_depth):
            feats = np.sort(np.argsort(keys[node % keys.shape[0]])[:mtry])
            rows = order[start:end]
            bf, thr, nl, stat = _best_split(X, rows, r, ev, feats, min_node)
        if bf < 0:
            leaf_index[node] = n_leaves
            leaf_start[n_leaves] = start
            leaf_end[n_leaves] = end
            n_leaves += 1
            continue
        # stable partition by the chosen threshold
        a = start
        b = 0
        for q in range(start, end):
            i = order[q]
            if X[i, bf] <= thr:
                order[a] = i
                a += 1
            else:
                tmp[b] = i
                b += 1
        for q in range(b):
            order[a + q] = tmp[q]
        feature[node] = bf
        threshold[node] = thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is expanded first
        st_node[top] = rc
        st_start[top] = a
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = a
        st_depth[top] = depth + 1
        top += 1

    cumhaz = np.zeros((n_leaves, G), np.float64)
    deaths = np.zeros(G, np.float64)
    risk_end = np.zeros(G + 1, np.float64)
    for L in range(n_leaves):
        deaths[:] = 0.0
        risk_end[:] = 0.0
        for q in range(leaf_start[L], leaf_end[L]):
            i = order[q]
            risk_end[r[i]] += 1.0
            if ev[i] == 1:
                deaths[r[i] - 1] += 1.0
        atrisk = 0.0
        # at risk at g: members with r > g
        H = 0.0
        acc = np.zeros(G, np.float64)
        for g in range(G - 1, -1, -1):
            atrisk += risk_end[g + 1]
            acc[g] = atrisk
        for g in range(G):
            if acc[g] > 0.0:
                H += deaths[g] / acc[g]
            cumhaz[L, g] = H
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        leaf_index[:n_nodes].copy(),
        cumhaz,
    )


@njit(cache=True)
def _apply(X, feature, threshold, left, right, leaf_index):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = leaf_index[k]
    return out


# --------------------------------------------------------------------------
# public API


def fit_rsf(train: SurvivalDataset, params: RSFParams = RSFParams()) -> RSFModel:
    if train.n < 1 or train.p < 1:
        raise DataError("training set needs at least one row and one feature")
    if not np.any(train.status == 1):
        raise DataError("training set has no events; the log-rank split is undefined")
    mtry = params.resolved_mtry(train.p)
    X = np.ascontiguousarray(train.features, dtype=np.float64)
    grid = np.unique(train.time[train.status == 1])
    r = np.searchsorted(grid, train.time, side="right").astype(np.int64)
    ev = train.status.astype(np.int8)
    n = train.n
    max_depth = -1 if params.max_depth is None else params.max_depth

    trees = []
    for ss in np.random.SeedSequence(params.seed).spawn(params.tree_count):
        rng = np.random.default_rng(ss)
        if params.bootstrap:
            sample = np.sort(rng.integers(0, n, size=n)).astype(np.int64)
        else:
            sample = np.arange(n, dtype=np.int64)
        keys = rng.random((2 * n + 1, train.p))
        f, t, lft, rgt, leaf, H = _grow(
            X, r, ev, sample, grid.shape[0], keys, mtry, params.min_node_size, max_depth
        )
        trees.append(
            SurvivalTree(
                feature=f,
                threshold=t,
                left=lft,
                right=rgt,
                leaf_index=leaf,
                leaf_cumhaz=H,
                inbag=np.bincount(sample, minlength=n),
            )
        )
    return RSFModel(trees=trees, time_grid=grid, n_features=train.p, params=params)


def _features_of(features, model: RSFModel) -> np.ndarray:
    if isinstance(features, SurvivalDataset):
        features = features.features
    X = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got shape {X.shape}")
    return X


def ensemble_cumhaz(model: RSFModel, features) -> np.ndarray:
    X = _features_of(features, model)
    H = np.zeros((X.shape[0], model.time_grid.shape[0]))
    for t in model.trees:
        H += t.leaf_cumhaz[_apply(X, t.feature, t.threshold, t.left, t.right, t.leaf_index)]
    return H / len(model.trees)


def predict_distribution(model: RSFModel, features) -> DistributionPrediction:
    H = ensemble_cumhaz(model, features)
    return DistributionPrediction(model.time_grid, np.exp(-H))


def predict_risk(model: RSFModel, features) -> RiskPrediction:
    """Ensemble mortality: the ensemble cumulative hazard summed over the grid."""
    return RiskPrediction(ensemble_cumhaz(model, features).sum(axis=1))


def predict_both(model: RSFModel, features):
    H = ensemble_cumhaz(model, features)
    return DistributionPrediction(model.time_grid, np.exp(-H)), RiskPrediction(H.sum(axis=1))
