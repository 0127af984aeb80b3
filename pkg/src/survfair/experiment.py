"""Sigma sweeps over datasets and the statistics summarising them."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats as st

from .biasing import BiasMethod, BiasRunConfig, run_bias_sweep
from .metrics import MEASURES, resolve_measures
from .rsf import RSFParams

DEFAULT_GRID = tuple(round(0.1 * k, 10) for k in range(10))
SMALL_SLOPE = 0.02
SWEEP_COLUMNS = ["dataset", "method", "measure", "sigma", "fl_mean", "fl_sd", "repetitions"]


class SweepError(RuntimeError):
    def __init__(self, dataset_id, cause):
        super().__init__(f"dataset {dataset_id}: {cause}")
        self.dataset_id = dataset_id
        self.cause = cause


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class SweepRow:
    dataset: str
    method: str
    measure: str
    sigma: float
    fl_mean: float
    fl_sd: float
    repetitions: int


@dataclass
class SweepResult:
    rows: List[SweepRow] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def extend(self, other: "SweepResult"):
        self.rows.extend(other.rows)
        self.failures.update(other.failures)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            w.writerow([r.dataset, r.method, r.measure, _fmt(r.sigma), _fmt(r.fl_mean), _fmt(r.fl_sd), r.repetitions])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "SweepResult":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != SWEEP_COLUMNS:
                raise ReportError(f"{path}: line 1: expected header {','.join(SWEEP_COLUMNS)}")
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(SWEEP_COLUMNS):
                    raise ReportError(f"{path}: line {lineno}: expected {len(SWEEP_COLUMNS)} fields, got {len(rec)}")
                try:
                    rows.append(
                        SweepRow(
                            rec[0], rec[1], rec[2], float(rec[3]), float(rec[4]), float(rec[5]), int(rec[6])
                        )
                    )
                except ValueError as exc:
                    raise ReportError(f"{path}: line {lineno}: {exc}") from None
        if not rows:
            raise ReportError(f"{path}: no sweep rows")
        return cls(rows)


def _fmt(x: float) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def parse_grid(text: str) -> Tuple[float, ...]:
    """``lo:hi:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        vals = [round(lo + k * step, 10) for k in range(count)]
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty sigma grid")
    for v in vals:
        if not 0 <= v < 1:
            raise ValueError(f"sigma {v} outside [0, 1)")
    return tuple(vals)


def _dataset_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), 7919, int(index)]).generate_state(1)[0])


def _sweep_unit(args):
    ds, grid, names, params, method, folds, seed, rep = args
    cfg = BiasRunConfig(repetitions=1, folds=folds, seed=seed)
    try:
        return run_bias_sweep(ds, grid, names, params, method, cfg, reps=[rep]), None
    except Exception as exc:  # reported per dataset by the caller
        return None, f"{type(exc).__name__}: {exc}"


def sigma_sweep(
    datasets,
    grid: Sequence[float] = DEFAULT_GRID,
    measures=None,
    method=BiasMethod.PERMUTATION,
    learner_params: RSFParams = RSFParams(),
    config: BiasRunConfig = BiasRunConfig(),
    jobs: int = 1,
    keep_going: bool = False,
) -> SweepResult:
    """Run the bias algorithm for every dataset and sigma.

    ``datasets`` is a sequence of datasets or of ``(id, dataset)`` pairs.
    Work is split into (dataset, repetition) units; ``jobs > 1`` runs them
    in worker processes with identical results. With ``keep_going`` a failing
    dataset is recorded in ``failures`` instead of raising.
    """
    grid = tuple(float(s) for s in grid)
    if not grid:
        raise ValueError("empty sigma grid")
    for s in grid:
        if not 0 <= s < 1:
            raise ValueError(f"sigma {s} outside [0, 1)")
    names = resolve_measures(measures if measures is not None else list(MEASURES))
    method = BiasMethod.parse(method)
    items = [d if isinstance(d, tuple) else (f"d{i}", d) for i, d in enumerate(datasets)]

    units = []
    for i, (did, ds) in enumerate(items):
        seed = _dataset_seed(config.seed, i)
        for rep in range(config.repetitions):
            units.append((did, (ds, grid, names, learner_params, method.value, config.folds, seed, rep)))

    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_sweep_unit, [u for _, u in units]))
    else:
        outputs = [_sweep_unit(u) for _, u in units]

    collected: Dict[str, dict] = {}
    failures: Dict[str, str] = {}
    for (did, _), (res, err) in zip(units, outputs):
        if err is not None:
            failures.setdefault(did, err)
            continue
        acc = collected.setdefault(did, {s: {m: [] for m in names} for s in grid})
        for s in grid:
            for m in names:
                acc[s][m].extend(res[s][m])

    result = SweepResult()
    for did, _ in items:
        if did in failures:
            if not keep_going:
                raise SweepError(did, failures[did])
            continue
        for m in names:
            for s in grid:
                vals = np.asarray(collected[did][s][m], dtype=float)
                ok = vals[np.isfinite(vals)]
                mean = float(ok.mean()) if ok.size else math.nan
                sd = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
                result.rows.append(SweepRow(did, method.value, m, s, mean, sd, int(ok.size)))
    result.failures = failures
    return result


# --------------------------------------------------------------------------
# statistics


def spearman_rho(x, y) -> Tuple[float, float]:
    """Spearman correlation on average ranks with a two-sided t-test p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    m = x.shape[0]
    if m < 3:
        raise ValueError("need at least 3 points")
    rx, ry = st.rankdata(x), st.rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise ValueError("zero variance")
    rho = float(np.corrcoef(rx, ry)[0, 1])
    if abs(rho) >= 1.0 - 1e-12:
        # identical (or reversed) rankings; snap away rounding noise
        return math.copysign(1.0, rho), 0.0
    t = rho * math.sqrt((m - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * st.t.sf(abs(t), m - 2))


def ols_slope_test(x, y) -> Tuple[float, float, float]:
    """Least-squares intercept and slope with a two-sided t-test on the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.shape[0]
    if m < 3 or y.shape[0] != m:
        raise ValueError("need at least 3 paired points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("x is constant")
    beta = float(np.sum((x - xm) * (y - ym)) / sxx)
    alpha = float(ym - beta * xm)
    resid = y - alpha - beta * x
    sse = float(np.sum(resid**2))
    se = math.sqrt(sse / (m - 2) / sxx)
    scale = max(abs(beta), float(np.max(np.abs(y))) if m else 0.0, 1e-300)
    if se <= 1e-13 * scale:
        return alpha, beta, (1.0 if beta == 0 else 0.0)
    t = beta / se
    return alpha, beta, float(2.0 * st.t.sf(abs(t), m - 2))


def holm_correct(p_values) -> List[float]:
    """Holm step-down adjusted p-values, in the input order."""
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.shape[0]
    order = np.argsort(p, kind="mergesort")
    adj = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adj[idx] = running
    return adj.tolist()


@dataclass(frozen=True)
class StatsRow:
    measure: str
    method: str
    alpha: float
    beta: float
    rho: float
    p_beta: float
    p_rho: float
    significant_beta: bool
    significant_rho: bool
    small_slope: bool = False


@dataclass
class Report:
    stats: List[StatsRow]
    # (method, measure) -> [(sigma, grand mean F_L)]
    means: Dict[Tuple[str, str], List[Tuple[float, float]]]
    sigmas: List[float]

    def row(self, method, measure) -> StatsRow:
        for r in self.stats:
            if r.method == method and r.measure == measure:
                return r
        raise KeyError((method, measure))

    def to_jsonl(self) -> str:
        lines = []
        for r in self.stats:
            d = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(r).items()}
            lines.append(json.dumps(d, sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        methods = sorted({r.method for r in self.stats})
        measures = _measure_order({r.measure for r in self.stats})
        out = io.StringIO()
        out.write("Regression F_L = alpha + sigma*beta and Spearman rho(sigma, mean F_L)\n")
        out.write("'*' marks Holm-adjusted p < 0.05; '!' marks a significant slope below %.2f\n\n" % SMALL_SLOPE)
        head = f"{'measure':<10}" + "".join(f"| {m:^30} " for m in methods)
        out.write(head + "\n")
        out.write(f"{'':<10}" + "".join(f"| {'alpha':>9} {'beta':>9} {'rho':>9} " for _ in methods) + "\n")
        out.write("-" * len(head) + "\n")
        for meas in measures:
            line = f"{meas:<10}"
            for meth in methods:
                try:
                    r = self.row(meth, meas)
                except KeyError:
                    line += f"| {'':>30} "
                    continue
                b = _num(r.beta) + ("*" if r.significant_beta else " ") + ("!" if r.small_slope else " ")
                rho = _num(r.rho) + ("*" if r.significant_rho else " ")
                line += f"| {_num(r.alpha):>9} {b:>9} {rho:>9} "
            out.write(line.rstrip() + "\n")
        for meth in methods:
            out.write(f"\nMean F_L over datasets, {meth}\n")
            out.write(f"{'measure':<10}" + "".join(f"{s:>8.2f}" for s in self.sigmas) + "\n")
            for meas in measures:
                if (meth, meas) not in self.means:
                    continue
                vals = dict(self.means[(meth, meas)])
                out.write(f"{meas:<10}" + "".join(f"{_num(vals.get(s, math.nan)):>8}" for s in self.sigmas) + "\n")
        return out.getvalue()


def _num(v: float) -> str:
    return "NA" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.3f}"


def _measure_order(names) -> List[str]:
    known = [m for m in MEASURES if m in names]
    return known + sorted(n for n in names if n not in MEASURES)


def build_report(sweep: SweepResult) -> Report:
    """Regression and rank-correlation summary of a sweep.

    The regression pools every (sigma, per-dataset mean F_L) row; Spearman's
    rho uses the per-sigma means across datasets. Holm's correction runs
    over the measures of each method, separately for slopes and for rho.
    """
    if not sweep.rows:
        raise ReportError("empty sweep")
    rows = sorted(sweep.rows, key=lambda r: (r.method, r.measure, r.sigma, r.dataset))
    sigmas = sorted({r.sigma for r in rows})
    if len(sigmas) < 3:
        raise ReportError(f"insufficient sigma levels: {len(sigmas)} (need at least 3)")

    groups: Dict[Tuple[str, str], List[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.method, r.measure), []).append(r)

    raw = {}
    means = {}
    for key, grp in groups.items():
        ok = [r for r in grp if math.isfinite(r.fl_mean)]
        x = np.array([r.sigma for r in ok])
        y = np.array([r.fl_mean for r in ok])
        try:
            alpha, beta, p_beta = ols_slope_test(x, y)
        except ValueError:
            alpha = beta = math.nan
            p_beta = 1.0
        per_sigma = []
        for s in sigmas:
            v = [r.fl_mean for r in ok if r.sigma == s]
            per_sigma.append((s, float(np.mean(v)) if v else math.nan))
        means[key] = per_sigma
        xs = np.array([s for s, v in per_sigma if math.isfinite(v)])
        ys = np.array([v for s, v in per_sigma if math.isfinite(v)])
        try:
            rho, p_rho = spearman_rho(xs, ys)
        except ValueError:
            rho, p_rho = math.nan, 1.0
        raw[key] = (alpha, beta, rho, p_beta, p_rho)

    stats_rows = []
    for method in sorted({k[0] for k in groups}):
        keys = [k for k in groups if k[0] == method]
        keys = [(method, m) for m in _measure_order({k[1] for k in keys})]
        adj_b = holm_correct([raw[k][3] for k in keys])
        adj_r = holm_correct([raw[k][4] for k in keys])
        for k, pb, pr in zip(keys, adj_b, adj_r):
            alpha, beta, rho, _, _ = raw[k]
            sig_b = pb < 0.05 and math.isfinite(beta)
            sig_r = pr < 0.05 and math.isfinite(rho)
            stats_rows.append(
                StatsRow(
                    measure=k[1],
                    method=method,
                    alpha=alpha,
                    beta=beta,
                    rho=rho,
                    p_beta=pb,
                    p_rho=pr,
                    significant_beta=sig_b,
                    significant_rho=sig_r,
                    small_slope=bool(sig_b and abs(beta) < SMALL_SLOPE),
                )
            )
    return Report(stats=stats_rows, means=means, sigmas=sigmas)
