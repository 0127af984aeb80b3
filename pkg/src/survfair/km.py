"""Kaplan-Meier / Nelson-Aalen estimation as right-continuous step curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Step function: ``survival[j]`` holds on ``[times[j], times[j+1])``.

    Before ``times[0]`` the survival is 1 and the cumulative hazard 0.
    """

    times: np.ndarray
    survival: np.ndarray
    cumhaz: np.ndarray

    def __call__(self, t, side: str = "right"):
        return curve_eval(self, t, side)

    def cdf(self, t, side: str = "right"):
        return 1.0 - curve_eval(self, t, side)

    def density(self, t):
        """Piecewise-constant density of the linearly interpolated curve.

        On ``(times[j-1], times[j]]`` the density is the drop at ``times[j]``
        divided by the interval width (with an implicit knot at ``(0, 1)``);
        it is 0 beyond the last step.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rows = np.broadcast_to(self.survival, (t.shape[0], self.survival.shape[0]))
        return interval_density(self.times, rows, t)


def interval_density(grid, survival, t):
    """Density of each survival row at its own point ``t[i]``.

    ``survival`` is ``(n, m)`` on ``grid``; a knot ``(0, 1)`` is prepended so
    the first interval is ``(0, grid[0]]``.
    """
    survival = np.asarray(survival, dtype=float)
    n = survival.shape[0]
    if grid.shape[0] == 0:
        return np.zeros(n)
    knots = np.concatenate([[0.0], grid])
    surv = np.hstack([np.ones((n, 1)), survival])
    width = np.diff(knots)
    drop = surv[:, :-1] - surv[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(width > 0, drop / np.where(width > 0, width, 1.0), 0.0)
    # interval j covers (knots[j], knots[j+1]]
    idx = np.searchsorted(knots, t, side="left") - 1
    inside = (idx >= 0) & (idx < width.shape[0])
    out = dens[np.arange(n), np.clip(idx, 0, width.shape[0] - 1)]
    return np.where(inside, out, 0.0)


def _product_limit(time, status):
    time = np.asarray(time, dtype=float).reshape(-1)
    status = np.asarray(status).reshape(-1)
    if time.shape[0] == 0:
        raise ValueError("cannot fit a survival curve to empty input")
    if time.shape != status.shape:
        raise ValueError("time and status must have equal length")
    uniq, inv = np.unique(time, return_inverse=True)
    deaths = np.bincount(inv, weights=(status == 1).astype(float), minlength=uniq.shape[0])
    counts = np.bincount(inv, minlength=uniq.shape[0]).astype(float)
    # censorings tied with an event time are still at risk at that time
    at_risk = counts[::-1].cumsum()[::-1]
    keep = deaths > 0
    t, d, y = uniq[keep], deaths[keep], at_risk[keep]
    surv = np.cumprod(1.0 - d / y)
    cumhaz = np.cumsum(d / y)
    return SurvivalCurve(times=t, survival=surv, cumhaz=cumhaz)


def fit_km(time, status) -> SurvivalCurve:
    """Product-limit survival estimate with Nelson-Aalen cumulative hazard."""
    return _product_limit(time, status)


def fit_censoring_km(time, status) -> SurvivalCurve:
    """Censoring-time distribution: product-limit on ``(time, 1 - status)``."""
    status = np.asarray(status).reshape(-1)
    return _product_limit(time, 1 - status)


def curve_eval(curve: SurvivalCurve, t, side: str = "right"):
    """Evaluate the survival step function.

    ``side="right"`` gives ``S(t)``; ``side="left"`` gives ``S(t-)``, the
    value just before ``t``. Scalars in, scalars out.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("t must be non-negative")
    idx = np.searchsorted(curve.times, arr, side=side)
    vals = np.concatenate([[1.0], curve.survival])[idx]
    return float(vals) if np.ndim(vals) == 0 else vals


def cumhaz_eval(curve: SurvivalCurve, t, side: str = "right"):
    idx = np.searchsorted(curve.times, np.asarray(t, dtype=float), side=side)
    vals = np.concatenate([[0.0], curve.cumhaz])[idx]
    return float(vals) if np.ndim(vals) == 0 else vals
