"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <criterion>: PASS|FAIL`` line with
its measured values, then asserts. Runtime limits are checked as part of
the criterion where one is stated.
"""

import hashlib
import time as clock

import numpy as np
import pytest

from survfair.biasing import BiasRunConfig
from survfair.cli import main
from survfair.data import SynthConfig, generate_synthetic
from survfair.experiment import build_report, holm_correct, ols_slope_test, parse_grid, sigma_sweep, spearman_rho
from survfair.km import curve_eval, fit_km
from survfair.metrics import CensoringWeights, chi2_uniform, d_calibration_counts, harrell_c, rcll, risl, rsbs, snl, uno_c
from survfair.rsf import DistributionPrediction, RSFParams

from conftest import STRONG, brute_harrell
from oracles import risl_loop, rsbs_loop, snl_loop

KM_CASES = [
    ([1, 2, 3], [1, 1, 0], {1: 2 / 3, 2: 1 / 3, 3: 1 / 3}),
    ([1, 2, 3], [0, 0, 0], {0.5: 1.0, 2: 1.0, 10: 1.0}),
    ([5], [1], {4.9: 1.0, 5: 0.0}),
    ([1, 1, 2, 3, 4], [1, 0, 1, 1, 0], {1: 0.8, 2: 8 / 15, 3: 4 / 15, 4: 4 / 15}),
    ([2, 2, 2, 5, 5], [1, 1, 0, 1, 0], {1: 1.0, 2: 0.6, 4: 0.6, 5: 0.3}),
]


@pytest.fixture
def verdict(capsys):
    def record(name, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, f"{name}: {detail}"

    return record


def test_km_oracle(verdict):
    t0 = clock.perf_counter()
    worst = 0.0
    for time, status, expected in KM_CASES:
        curve = fit_km(time, status)
        for t, s in expected.items():
            worst = max(worst, abs(curve_eval(curve, t) - s))
    dt = clock.perf_counter() - t0
    verdict("km_oracle", worst <= 1e-12 and dt < 1, f"max_err={worst:.1e} time={dt:.3f}s")


def test_concordance_oracle(verdict):
    t0 = clock.perf_counter()
    rng = np.random.default_rng(101)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 31))
        time = rng.integers(1, 12, size=n).astype(float)
        status = rng.integers(0, 2, size=n)
        status[0] = 1
        time[0] = 0.5  # earliest event guarantees a comparable pair
        risk = rng.integers(0, 5, size=n).astype(float)
        if harrell_c(risk, time, status).value != brute_harrell(risk, time, status):
            mismatches += 1
    collapse = 0.0
    for _ in range(20):
        n = int(rng.integers(3, 31))
        time = rng.uniform(0, 10, size=n)
        risk = rng.normal(size=n)
        ones = np.ones(n, int)
        h = harrell_c(risk, time, ones).value
        u = uno_c(risk, time, ones, CensoringWeights.fit(time, ones), tau=time.max() + 1).value
        collapse = max(collapse, abs(h - u))
    dt = clock.perf_counter() - t0
    verdict("concordance_oracle", mismatches == 0 and collapse == 0 and dt < 5,
            f"mismatches={mismatches}/100 uno_vs_harrell={collapse:.1e} time={dt:.2f}s")


def test_scoring_rule_oracles(verdict):
    t0 = clock.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 15))
        grid = np.sort(rng.choice(np.arange(1, 40), size=int(rng.integers(2, 12)), replace=False)).astype(float) / 4
        surv = np.sort(rng.uniform(0, 1, size=(n, grid.shape[0])), axis=1)[:, ::-1]
        time = rng.integers(1, 45, size=n).astype(float) / 4
        status = rng.integers(0, 2, size=n)
        status[0] = 1
        pred = DistributionPrediction(grid, surv)
        w = np.ones(n)
        eg = np.unique(time)
        worst = max(
            worst,
            abs(rsbs(pred, time, status).value - rsbs_loop(grid, surv, time, status, w, eg)),
            abs(risl(pred, time, status).value - risl_loop(grid, surv, time, status, w, eg)),
            abs(snl(pred, time, status).value - snl_loop(grid, surv, time, status, w)),
        )
    g = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    f_quarter = rcll(DistributionPrediction(g, np.array([[1, 0.75, 0.5, 0.25, 0]])), [2.0], [1]).value
    s_half = rcll(DistributionPrediction(g, np.array([[1, 0.5, 0.5, 0.5, 0.5]])), [2.0], [0]).value
    hand = max(abs(f_quarter - 1.386294361), abs(s_half - 0.693147181))
    dt = clock.perf_counter() - t0
    verdict("scoring_rule_oracles", worst <= 1e-12 and hand <= 1e-6 and dt < 5,
            f"loop_max_err={worst:.1e} rcll_hand_err={hand:.1e} time={dt:.2f}s")


def test_properness_smoke(verdict):
    t0 = clock.perf_counter()
    wins = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        t = 5.0 * r.weibull(1.5, size=10_000)
        grid = np.linspace(t.max() / 400, t.max() * 1.01, 400)
        ones = np.ones(t.size)

        def loss(scale):
            row = np.exp(-((grid / scale) ** 1.5))
            return rcll(DistributionPrediction(grid, np.broadcast_to(row, (t.size, grid.size))), t, ones).value

        wins += loss(5.0) < loss(7.5)
    dt = clock.perf_counter() - t0
    verdict("properness_smoke", wins >= 19 and dt < 60, f"wins={wins}/20 time={dt:.1f}s")


def test_d_calibration_uniform(verdict):
    t0 = clock.perf_counter()
    r = np.random.default_rng(303)
    below = sum(chi2_uniform(d_calibration_counts(r.uniform(size=500), np.ones(500), 10)) < 16.92 for _ in range(100))
    dt = clock.perf_counter() - t0
    verdict("d_calibration", below >= 90 and dt < 30, f"below_critical={below}/100 time={dt:.2f}s")


# ------------------------------------------------------------- replication

PERMUTATION_MEASURES = ["charrell", "cuno", "rsbs", "risl"]
UNDERSAMPLING_MEASURES = ["snl", "rcll"]


@pytest.fixture(scope="module")
def replication():
    t0 = clock.perf_counter()
    cfg = SynthConfig(n=600, p=5, effect_weights=STRONG, target_censoring=0.3)
    datasets = [(f"synth{k}", generate_synthetic(cfg, 1000 + k)) for k in range(10)]
    params = RSFParams(tree_count=50, seed=0)
    run = BiasRunConfig(repetitions=5, folds=3, seed=0)
    grid = parse_grid("0:0.9:0.1")
    out = {}
    for method in ("permutation", "undersampling"):
        sweep = sigma_sweep(datasets, grid, None, method, params, run)
        out[method] = (sweep, build_report(sweep))
    return out, clock.perf_counter() - t0


def _check_rho(report, method, measures):
    rows = {r.measure: r for r in report.stats if r.method == method}
    ok = all(rows[m].rho >= 0.8 and rows[m].p_rho < 0.05 for m in measures)
    detail = " ".join(f"{m}:rho={rows[m].rho:.3f},p_holm={rows[m].p_rho:.2g}" for m in measures)
    return ok, detail


@pytest.mark.slow
def test_replication_permutation(verdict, replication):
    out, dt = replication
    ok, detail = _check_rho(out["permutation"][1], "permutation", PERMUTATION_MEASURES)
    verdict("replication_permutation", ok and dt < 900, f"{detail} sweep_time={dt:.0f}s")


@pytest.mark.slow
def test_replication_undersampling(verdict, replication):
    out, dt = replication
    ok, detail = _check_rho(out["undersampling"][1], "undersampling", UNDERSAMPLING_MEASURES)
    verdict("replication_undersampling", ok, detail)


@pytest.mark.slow
def test_null_direction(verdict, replication):
    out, _ = replication
    parts, ok = [], True
    for method, measures in (("permutation", PERMUTATION_MEASURES), ("undersampling", UNDERSAMPLING_MEASURES)):
        means = out[method][1].means
        for m in measures:
            by_sigma = dict(means[(method, m)])
            lo, hi = by_sigma[0.0], by_sigma[0.9]
            ok &= lo < hi
            parts.append(f"{method[:5]}/{m}:{lo:.3f}<{hi:.3f}")
    verdict("null_direction", ok, " ".join(parts))


def test_determinism(verdict, tmp_path):
    def run(out, jobs):
        code = main(["experiment", "--synth", "2", "--synth-n", "120", "--reps", "2", "--trees", "10",
                     "--seed", "3", "--jobs", str(jobs), "--out", str(out)])
        assert code == 0
        return {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in ("sweep.csv", "report.txt", "report.jsonl")}

    a, b, c = run(tmp_path / "a", 1), run(tmp_path / "b", 1), run(tmp_path / "c", 2)
    verdict("determinism", a == b == c, f"identical_files={sum(a[f] == b[f] == c[f] for f in a)}/3")


def test_statistics_oracles(verdict):
    errs = []
    rho, p = spearman_rho([1, 2, 3, 4], [2, 1, 4, 3])
    errs += [abs(rho - 0.6), abs(p - 0.4)]
    rho, p = spearman_rho([1, 2, 3], [2, 4, 6])
    errs += [abs(rho - 1.0), abs(p)]
    a, b, _ = ols_slope_test([0, 1, 2], [0, 1, 1])
    errs += [abs(a - 1 / 6), abs(b - 0.5)]
    a, b, p = ols_slope_test([0, 1, 2, 3], [1, 3, 5, 7])
    errs += [abs(a - 1), abs(b - 2), abs(p)]
    holm_ok = holm_correct([0.01, 0.04]) == [0.02, 0.04] and holm_correct([0.04, 0.01, 0.03]) == [0.06, 0.03, 0.06]
    worst = max(errs)
    verdict("statistics_oracles", worst <= 1e-10 and holm_ok, f"max_err={worst:.1e} holm_exact={holm_ok}")
