"""Survival evaluation measures.

Scoring rules (``rsbs``, ``risl``, ``snl``, ``rcll``) are losses, lower is
better, and can be standardised against a baseline with :func:`erv`.
Discrimination (``charrell``, ``cuno``) is higher-is-better concordance;
calibration is ``cala`` (van Houwelingen's alpha, ideal 1) and ``cald``
(D-calibration chi-squared statistic, ideal 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .km import SurvivalCurve, curve_eval, fit_censoring_km
from .rsf import DistributionPrediction, RiskPrediction

PROB_FLOOR = 1e-15
IPCW_FLOOR = 0.001


class MetricError(ValueError):
    """A measure is undefined on the given data (e.g. no events)."""


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    n_effective: int

    def __float__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class CensoringWeights:
    """Inverse probability of censoring weights from a censoring-time curve.

    The curve is read just before each time (``G(t-)``) and floored before
    inversion.
    """

    curve: SurvivalCurve
    floor: float = IPCW_FLOOR

    def __post_init__(self):
        if not 0 < self.floor < 1:
            raise ValueError("floor must lie in (0, 1)")

    @classmethod
    def fit(cls, time, status, floor: float = IPCW_FLOOR) -> "CensoringWeights":
        return cls(fit_censoring_km(time, status), floor)

    @classmethod
    def uniform(cls) -> "CensoringWeights":
        """G == 1 everywhere: all weights equal one."""
        empty = np.zeros(0)
        return cls(SurvivalCurve(empty, empty, empty))

    def prob(self, t) -> np.ndarray:
        g = np.asarray(curve_eval(self.curve, np.asarray(t, dtype=float), side="left"))
        return np.maximum(g, self.floor)

    def weight(self, t) -> np.ndarray:
        return 1.0 / self.prob(t)


def _prep(pred, time, status):
    time = np.asarray(time, dtype=float).reshape(-1)
    status = np.asarray(status).reshape(-1).astype(int)
    if time.shape != status.shape:
        raise MetricError("time and status lengths differ")
    if time.shape[0] == 0:
        raise MetricError("no observations")
    if pred is not None and pred.n != time.shape[0]:
        raise MetricError(f"prediction has {pred.n} rows for {time.shape[0]} observations")
    return time, status


def _integration_grid(time, grid):
    grid = np.unique(time) if grid is None else np.asarray(grid, dtype=float)
    if grid.shape[0] == 0:
        raise MetricError("empty integration grid")
    return grid, np.diff(grid)


def _ipcw_setup(name, pred, time, status, G, grid):
    time, status = _prep(pred, time, status)
    if pred.time_grid.shape[0] == 0:
        raise MetricError(f"{name}: prediction has an empty time grid")
    n_events = int(status.sum())
    if n_events == 0:
        raise MetricError(f"{name}: every observation is censored")
    G = CensoringWeights.uniform() if G is None else G
    return time, status, G.weight(time), n_events


def rsbs(pred: DistributionPrediction, time, status, G: Optional[CensoringWeights] = None, grid=None) -> MetricValue:
    """Reweighted survival Brier score integrated over time.

    The integral is a left rectangle sum over ``grid`` (default: the
    distinct observed times), so it spans ``grid[0]`` to ``grid[-1]``.
    Censored observations contribute zero; the mean is over all rows.
    """
    time, status, w, n_ev = _ipcw_setup("rsbs", pred, time, status, G, grid)
    grid, width = _integration_grid(time, grid)
    F = 1.0 - pred.on_grid(grid[:-1])
    died = (time[:, None] <= grid[None, :-1]).astype(float)
    per_obs = ((died - F) ** 2) @ width
    return MetricValue("rsbs", float(np.mean(status * per_obs * w)), n_ev)


def risl(pred: DistributionPrediction, time, status, G: Optional[CensoringWeights] = None, grid=None) -> MetricValue:
    """Reweighted integrated survival log loss (negated, lower is better)."""
    time, status, w, n_ev = _ipcw_setup("risl", pred, time, status, G, grid)
    grid, width = _integration_grid(time, grid)
    S = pred.on_grid(grid[:-1])
    died = time[:, None] <= grid[None, :-1]
    p = np.where(died, 1.0 - S, S)
    per_obs = -np.log(np.maximum(p, PROB_FLOOR)) @ width
    return MetricValue("risl", float(np.mean(status * per_obs * w)), n_ev)


def snl(pred: DistributionPrediction, time, status, G: Optional[CensoringWeights] = None) -> MetricValue:
    """IPCW-weighted negative log density at the observed event time."""
    time, status, w, n_ev = _ipcw_setup("snl", pred, time, status, G, None)
    f = pred.density_at(time)
    per_obs = -np.log(np.maximum(f, PROB_FLOOR))
    return MetricValue("snl", float(np.mean(status * per_obs * w)), n_ev)


def rcll(pred: DistributionPrediction, time, status) -> MetricValue:
    """Right-censored log-likelihood loss: density for events, survival for
    censored rows."""
    time, status = _prep(pred, time, status)
    f = pred.density_at(time)
    S = pred.survival_at(time)
    lik = np.where(status == 1, f, S)
    return MetricValue("rcll", float(np.mean(-np.log(np.maximum(lik, PROB_FLOOR)))), time.shape[0])


def _concordance(risk, time, status, weight, tau, name):
    risk = np.asarray(risk.risk if isinstance(risk, RiskPrediction) else risk, dtype=float).reshape(-1)
    if risk.shape != time.shape:
        raise MetricError(f"{name}: risk has {risk.shape[0]} entries for {time.shape[0]} observations")
    num = 0.0
    den = 0.0
    n_pairs = 0
    anchors = np.flatnonzero((status == 1) & (time < tau))
    for start in range(0, anchors.shape[0], 512):
        i = anchors[start : start + 512]
        comparable = time[i][:, None] < time[None, :]
        conc = (risk[i][:, None] > risk[None, :]) + 0.5 * (risk[i][:, None] == risk[None, :])
        wi = weight[i]
        num += float(np.sum(wi * np.sum(comparable * conc, axis=1)))
        cnt = comparable.sum(axis=1)
        den += float(np.sum(wi * cnt))
        n_pairs += int(cnt.sum())
    if n_pairs == 0 or den <= 0:
        raise MetricError(f"{name}: no comparable pairs")
    return num / den, n_pairs


def harrell_c(risk, time, status) -> MetricValue:
    """Harrell's concordance; tied risks count one half, tied times are not
    comparable."""
    time, status = _prep(None, time, status)
    c, pairs = _concordance(risk, time, status, np.ones_like(time), np.inf, "charrell")
    return MetricValue("charrell", c, pairs)


def uno_c(risk, time, status, G: Optional[CensoringWeights] = None, tau: Optional[float] = None) -> MetricValue:
    """Uno's IPCW concordance with weights ``G(T_i-)^-2``, anchors ``T_i < tau``.

    ``tau`` defaults to the largest event time, and ``G`` to the censoring
    curve of the data passed in.
    """
    time, status = _prep(None, time, status)
    if G is None:
        G = CensoringWeights.fit(time, status)
    if tau is None:
        if not status.any():
            raise MetricError("cuno: no events")
        tau = float(time[status == 1].max())
    if tau <= 0:
        raise MetricError("cuno: tau must be positive")
    w = G.weight(time) ** 2
    c, pairs = _concordance(risk, time, status, w, tau, "cuno")
    return MetricValue("cuno", c, pairs)


def cal_alpha(pred: DistributionPrediction, time, status) -> MetricValue:
    """Observed over expected events, expected = sum of ``-log S_i(T_i)``."""
    time, status = _prep(pred, time, status)
    H = -np.log(np.maximum(pred.survival_at(time), PROB_FLOOR))
    denom = float(H.sum())
    if denom <= 0:
        raise MetricError("cala: predicted cumulative hazards sum to zero")
    return MetricValue("cala", float(status.sum()) / denom, time.shape[0])


def d_calibration_counts(s, status, bins: int = 10) -> np.ndarray:
    """Bin occupancy of ``s_i = S_i(T_i)`` with censored mass spread over [0, s_i]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    status = np.asarray(status).astype(int)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = np.zeros(bins)
    which = np.minimum((s * bins).astype(int), bins - 1)
    ev = status == 1
    np.add.at(counts, which[ev], 1.0)
    cs = s[~ev]
    zero = cs <= 0
    counts[0] += zero.sum()
    cs = cs[~zero]
    if cs.shape[0]:
        overlap = np.clip(np.minimum(edges[1:][None, :], cs[:, None]) - edges[:-1][None, :], 0.0, None)
        counts += (overlap / cs[:, None]).sum(axis=0)
    return counts


def cal_d(pred: DistributionPrediction, time, status, bins: int = 10) -> MetricValue:
    """D-calibration: chi-squared statistic of the binned ``S_i(T_i)`` against
    a uniform histogram."""
    time, status = _prep(pred, time, status)
    if bins < 2:
        raise MetricError("cald: bins must be >= 2")
    n = time.shape[0]
    if n < bins:
        raise MetricError(f"cald: {n} observations for {bins} bins")
    return MetricValue("cald", chi2_uniform(d_calibration_counts(pred.survival_at(time), status, bins)), n)


def chi2_uniform(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    expected = counts.sum() / counts.shape[0]
    return float(np.sum((counts - expected) ** 2 / expected))


def erv(model_loss: float, baseline_loss: float) -> float:
    """Relative improvement over the baseline: ``1 - model / baseline``."""
    if baseline_loss == 0:
        raise MetricError("erv: baseline loss is zero")
    return 1.0 - model_loss / baseline_loss


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Measure:
    name: str
    kind: str  # "dist" or "risk"
    scoring_rule: bool
    uses_weights: bool


MEASURES = {
    "rsbs": Measure("rsbs", "dist", True, True),
    "risl": Measure("risl", "dist", True, True),
    "snl": Measure("snl", "dist", True, True),
    "rcll": Measure("rcll", "dist", True, False),
    "charrell": Measure("charrell", "risk", False, False),
    "cuno": Measure("cuno", "risk", False, True),
    "cala": Measure("cala", "dist", False, False),
    "cald": Measure("cald", "dist", False, False),
}

_FUNCS = {
    "rsbs": rsbs,
    "risl": risl,
    "snl": snl,
    "rcll": rcll,
    "charrell": harrell_c,
    "cuno": uno_c,
    "cala": cal_alpha,
    "cald": cal_d,
}


def resolve_measures(names) -> list:
    """Normalise measure names (case-insensitive, order kept, no repeats)."""
    if isinstance(names, str):
        names = [s for s in names.replace(" ", "").split(",") if s]
    out = []
    for nm in names:
        key = str(nm).lower()
        if key not in MEASURES:
            raise KeyError(f"unknown measure '{nm}' (known: {', '.join(MEASURES)})")
        if key not in out:
            out.append(key)
    if not out:
        raise KeyError("no measures requested")
    return out


def evaluate(name, dist, risk, time, status, G=None, baseline=None) -> float:
    """Evaluate one measure by name.

    Scoring rules are reported as ERV against ``baseline`` when one is
    given; other measures ignore it.
    """
    key = resolve_measures([name])[0]
    m = MEASURES[key]
    fn = _FUNCS[key]
    if m.kind == "risk":
        return fn(risk, time, status, G).value if m.uses_weights else fn(risk, time, status).value

    def score(pred):
        return fn(pred, time, status, G).value if m.uses_weights else fn(pred, time, status).value

    value = score(dist)
    if m.scoring_rule and baseline is not None:
        return erv(value, score(baseline))
    return value
