import csv
import hashlib

import numpy as np
import pytest

from survfair.cli import main, strong_weights
from survfair.data import SynthConfig, concat, generate_synthetic, load_csv, write_csv

from conftest import STRONG


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def two_group_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "d.csv"
    write_csv(generate_synthetic(SynthConfig(n=300, p=5, effect_weights=STRONG), 3), path)
    return path


def test_strong_weights():
    assert strong_weights(5) == pytest.approx((1.0, -0.8, 0.6, -0.4, 0.2))
    assert strong_weights(1) == (1.0,)


def test_synth_writes_and_reloads(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["synth", "--n", "500", "--p", "5", "--censoring", "0.4", "--seed", "1", "--out", str(out)]) == 0
    ds = load_csv(out)
    assert ds.n == 500 and ds.p == 5
    cfg = SynthConfig(n=500, p=5, effect_weights=strong_weights(5), target_censoring=0.4)
    assert ds.equals(generate_synthetic(cfg, 1))
    assert abs(1 - ds.status.mean() - 0.4) < 0.01


def test_synth_config_file_and_override(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("# demo\nn = 40\np = 2\neffect_weights = 0.5, -0.5\ntarget_censoring = 0.2\n")
    out = tmp_path / "s.csv"
    assert main(["synth", "--config", str(conf), "--n", "60", "--out", str(out)]) == 0
    ds = load_csv(out)
    assert ds.n == 60 and ds.p == 2


@pytest.mark.parametrize("flags", [["--censoring", "1.0"], ["--n", "0"], ["--weights", "1,2"]])
def test_synth_rejects_bad_config(tmp_path, capsys, flags):
    out = tmp_path / "s.csv"
    assert main(["synth", *flags, "--out", str(out)]) == 1
    assert not out.exists()
    assert capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["audit", "--input", str(tmp_path / "missing.csv"), "--out", "x"]) == 1
    assert "missing.csv" in capsys.readouterr().err


def test_audit_default_measures(two_group_csv, tmp_path):
    before = _digest(two_group_csv)
    out = tmp_path / "audit.csv"
    assert main(["audit", "--input", str(two_group_csv), "--trees", "20", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [r["measure"] for r in rows] == ["rsbs", "risl", "snl", "rcll", "charrell", "cuno", "cala", "cald"]
    for r in rows:
        assert float(r["F_L"]) == pytest.approx(abs(float(r["L_A"]) - float(r["L_D"])))
        assert int(r["n_A"]) + int(r["n_D"]) == 100
    assert _digest(two_group_csv) == before
    out2 = tmp_path / "audit2.csv"
    main(["audit", "--input", str(two_group_csv), "--trees", "20", "--out", str(out2)])
    assert _digest(out) == _digest(out2)


def test_audit_cv_protocol(two_group_csv, tmp_path):
    out = tmp_path / "audit.csv"
    assert main(["audit", "--input", str(two_group_csv), "--protocol", "cv", "--trees", "10",
                 "--measures", "charrell,CALA", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [r["measure"] for r in rows] == ["charrell", "cala"]
    assert int(rows[0]["n_A"]) + int(rows[0]["n_D"]) == 300


def test_audit_unknown_measure(two_group_csv, tmp_path, capsys):
    assert main(["audit", "--input", str(two_group_csv), "--measures", "auc", "--out", str(tmp_path / "a.csv")]) == 1
    assert "auc" in capsys.readouterr().err


def test_audit_single_group(tmp_path, capsys):
    path = tmp_path / "one.csv"
    write_csv(generate_synthetic(SynthConfig(n=60, p=2, group_count=1), 0), path, group_col="sex")
    assert main(["audit", "--input", str(path), "--group-col", "sex", "--out", str(tmp_path / "a.csv")]) == 2
    assert "sex" in capsys.readouterr().err


def test_audit_malformed_data(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x1,time,status,group\n0.1,2.0,1,a\n0.2,-1,0,b\n")
    assert main(["audit", "--input", str(path), "--out", str(tmp_path / "a.csv")]) == 2
    err = capsys.readouterr().err
    assert "row 2" in err and "time" in err


def _experiment(out, *extra):
    return main(["experiment", "--synth", "2", "--synth-n", "80", "--synth-p", "3", "--grid", "0:0.9:0.3",
                 "--reps", "1", "--trees", "4", "--seed", "7", "--out", str(out), *extra])


def test_experiment_outputs_and_determinism(tmp_path):
    assert _experiment(tmp_path / "a") == 0
    assert _experiment(tmp_path / "b", "--jobs", "2") == 0
    rows = _rows(tmp_path / "a" / "sweep.csv")
    assert len(rows) == 2 * 4 * 8
    for name in ("sweep.csv", "report.txt", "report.jsonl"):
        assert _digest(tmp_path / "a" / name) == _digest(tmp_path / "b" / name)


def test_experiment_partial_failure(tmp_path, capsys):
    tiny = tmp_path / "tiny.csv"
    write_csv(generate_synthetic(SynthConfig(n=6, p=3), 0), tiny)
    code = _experiment(tmp_path / "o", "--input", str(tiny))
    assert code == 3
    assert "tiny" in capsys.readouterr().err
    datasets = {r["dataset"] for r in _rows(tmp_path / "o" / "sweep.csv")}
    assert datasets == {"synth0", "synth1"}


def test_experiment_needs_data(tmp_path):
    assert main(["experiment", "--out", str(tmp_path / "o")]) == 1


def test_report_idempotent(tmp_path):
    assert _experiment(tmp_path / "a") == 0
    assert main(["report", "--input", str(tmp_path / "a" / "sweep.csv"), "--out", str(tmp_path / "r")]) == 0
    for name in ("report.txt", "report.jsonl"):
        assert _digest(tmp_path / "a" / name) == _digest(tmp_path / "r" / name)


def test_report_truncated(tmp_path, capsys):
    assert _experiment(tmp_path / "a") == 0
    lines = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:5]) + "\n" + lines[5][: len(lines[5]) // 2] + "\n")
    assert main(["report", "--input", str(bad), "--out", str(tmp_path / "r")]) == 2
    assert "line 6" in capsys.readouterr().err


def test_report_one_sigma(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["experiment", "--synth", "1", "--synth-n", "80", "--grid", "0.5", "--reps", "1",
                 "--trees", "4", "--measures", "charrell", "--out", str(out)]) == 0
    assert not (out / "report.txt").exists()
    assert main(["report", "--input", str(out / "sweep.csv"), "--out", str(tmp_path / "r")]) == 2
    assert "insufficient" in capsys.readouterr().err


# Null case: group D is an exact copy of group A, audited by cross-validation
# with default forest settings. Concordance and cala stay below 0.02 for every
# seed tried. The ERV-scaled scoring rules inherit the variance of a forest
# with 3-row leaves (fold-dependent, often above 0.02); cald is a chi-squared
# statistic whose gaps are of order 1.
NULL_TOLERANT = ["charrell", "cuno", "cala"]
NULL_NOISY = ["rsbs", "risl", "snl", "rcll", "cald"]


@pytest.fixture(scope="module")
def duplicated_audit(tmp_path_factory):
    d = tmp_path_factory.mktemp("null")
    base = generate_synthetic(SynthConfig(n=1000, p=5, effect_weights=STRONG, group_count=1), 21)
    a = base.replace(group=np.full(base.n, "A", dtype=object))
    b = base.replace(group=np.full(base.n, "B", dtype=object), ids=np.arange(base.n, 2 * base.n))
    path = d / "dup.csv"
    write_csv(concat([a, b]), path)
    out = d / "audit.csv"
    assert main(["audit", "--input", str(path), "--protocol", "cv", "--seed", "1", "--out", str(out)]) == 0
    return {r["measure"]: float(r["F_L"]) for r in _rows(out)}


@pytest.mark.slow
@pytest.mark.parametrize(
    "measure",
    NULL_TOLERANT
    + [pytest.param(m, marks=pytest.mark.xfail(reason="gap not reliably below 0.02 at default forest settings")) for m in NULL_NOISY],
)
def test_duplicated_groups_null_gap(duplicated_audit, measure):
    assert duplicated_audit[measure] < 0.02
