"""Command-line interface: ``survfair {audit,experiment,synth,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .biasing import BiasMethod, BiasRunConfig
from .data import (
    DataError,
    SynthConfig,
    generate_synthetic,
    kfold_partition,
    load_csv,
    split_random,
    write_csv,
)
from .experiment import (
    ReportError,
    SweepResult,
    build_report,
    parse_grid,
    sigma_sweep,
)
from .fairness import audit_groups, group_labels
from .km import fit_km
from .metrics import MEASURES, CensoringWeights, resolve_measures
from .rsf import DistributionPrediction, RSFParams, fit_rsf, predict_both

log = logging.getLogger("survfair")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def strong_weights(p: int) -> tuple:
    """Alternating-sign effects shrinking from 1.0 to 0.2."""
    mags = np.linspace(1.0, 0.2, p) if p > 1 else np.array([1.0])
    return tuple(float(m * (-1) ** j) for j, m in enumerate(mags))


def _add_learner(p):
    p.add_argument("--trees", type=int, default=100, help="trees per forest (default 100)")
    p.add_argument("--mtry", type=int, default=None, help="features tried per split (default ceil(sqrt(p)))")
    p.add_argument("--min-node-size", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)


def _add_schema(p):
    p.add_argument("--time-col", default="time")
    p.add_argument("--status-col", default="status")
    p.add_argument("--group-col", default="group")


def _add_synth(p, prefix=""):
    p.add_argument(f"--{prefix}n", type=int, default=500, dest="synth_n")
    p.add_argument(f"--{prefix}p", type=int, default=5, dest="synth_p")
    p.add_argument("--censoring", type=float, default=0.3)
    p.add_argument("--weights", default=None, help="comma-separated effect weights (default: strong pattern)")
    p.add_argument("--shape", type=float, default=1.5)
    p.add_argument("--scale", type=float, default=10.0)
    p.add_argument("--groups", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survfair", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    a = sub.add_parser("audit", help="group fairness gaps of a forest on one dataset")
    a.add_argument("--input", required=True)
    _add_schema(a)
    a.add_argument("--measures", default=",".join(MEASURES))
    a.add_argument("--protocol", choices=["holdout", "cv"], default="holdout")
    a.add_argument("--test-fraction", type=float, default=1 / 3)
    a.add_argument("--folds", type=int, default=3)
    _add_learner(a)
    a.add_argument("--out", required=True, help="report CSV path")

    e = sub.add_parser("experiment", help="sigma sweep of a biasing method")
    e.add_argument("--input", action="append", default=[], help="dataset CSV (repeatable)")
    e.add_argument("--synth", type=int, default=0, metavar="K", help="generate K synthetic datasets")
    _add_synth(e, prefix="synth-")
    e.add_argument("--synth-config", default=None, help="key = value file for synthetic datasets")
    _add_schema(e)
    e.add_argument("--measures", default=",".join(MEASURES))
    e.add_argument("--method", default="permutation", choices=[m.value for m in BiasMethod])
    e.add_argument("--grid", default="0:0.9:0.1")
    e.add_argument("--reps", type=int, default=10)
    e.add_argument("--folds", type=int, default=3)
    e.add_argument("--jobs", type=int, default=1)
    _add_learner(e)
    e.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("synth", help="write a synthetic dataset CSV")
    _add_synth(s)
    s.add_argument("--config", default=None, help="key = value file (flags override)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    r = sub.add_parser("report", help="statistics tables from a stored sweep CSV")
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True, help="output directory")
    return parser


def _learner(args) -> RSFParams:
    return RSFParams(tree_count=args.trees, mtry=args.mtry, min_node_size=args.min_node_size, seed=args.seed)


def _synth_config(args, config_file=None) -> SynthConfig:
    base = {}
    if config_file:
        base = vars(SynthConfig.from_file(config_file)).copy()
    p = args.synth_p
    if args.weights is not None:
        weights = tuple(float(v) for v in args.weights.split(","))
    else:
        weights = base.get("effect_weights") or strong_weights(p)
    return SynthConfig(
        n=args.synth_n,
        p=p,
        effect_weights=weights,
        baseline_shape=args.shape,
        baseline_scale=args.scale,
        target_censoring=args.censoring,
        group_count=args.groups,
    )


def _explicit(argv, flag) -> bool:
    return any(a == flag or a.startswith(flag + "=") for a in argv)


def cmd_synth(args, argv) -> int:
    if args.config:
        file_cfg = SynthConfig.from_file(args.config)
        # flags given on the command line win over the file
        for flag, attr, key in (
            ("--n", "synth_n", "n"),
            ("--p", "synth_p", "p"),
            ("--censoring", "censoring", "target_censoring"),
            ("--shape", "shape", "baseline_shape"),
            ("--scale", "scale", "baseline_scale"),
            ("--groups", "groups", "group_count"),
        ):
            if not _explicit(argv, flag):
                setattr(args, attr, getattr(file_cfg, key))
        if args.weights is None and file_cfg.effect_weights is not None:
            args.weights = ",".join(repr(w) for w in file_cfg.effect_weights)
    try:
        cfg = _synth_config(args)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    ds = generate_synthetic(cfg, args.seed)
    write_csv(ds, args.out)
    log.info("wrote %d rows to %s", ds.n, args.out)
    return EXIT_OK


def _audit_once(train, test, measures, params):
    model = fit_rsf(train, params)
    dist, risk = predict_both(model, test.features)
    baseline = DistributionPrediction.constant(fit_km(train.time, train.status), test.n)
    G = CensoringWeights.fit(test.time, test.status)
    return audit_groups(dist, risk, test, measures, G, baseline, labels=group_labels(train))


def cmd_audit(args, argv) -> int:
    measures = resolve_measures(args.measures)
    ds = load_csv(args.input, args.time_col, args.status_col, args.group_col)
    if ds.group is None:
        raise DataError(f"{args.input}: group column '{args.group_col}' not found")
    labels = group_labels(ds)
    if len(labels) != 2:
        raise DataError(f"group column '{args.group_col}' has {len(labels)} label(s) {labels}; exactly 2 required")
    params = _learner(args)
    if args.protocol == "holdout":
        test, train = split_random(ds, args.test_fraction, args.seed)
        folds = [(train, test)]
    else:
        fa = kfold_partition(ds, args.folds, args.seed)
        folds = [(ds.take(fa.train_rows(k)), ds.take(fa.test_rows(k))) for k in range(args.folds)]
    per_fold = []
    for k, (train, test) in enumerate(folds):
        if len(set(test.group.tolist())) != 2 or len(set(train.group.tolist())) != 2:
            raise DataError(f"fold {k}: both groups must appear in training and test parts")
        per_fold.append(_audit_once(train, test, measures, replace(params, seed=params.seed + k)))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["measure", "L_A", "L_D", "F_L", "n_A", "n_D"])
        for j, m in enumerate(measures):
            res = [fold[j] for fold in per_fold]
            la = _mean([r.loss_advantaged for r in res])
            ld = _mean([r.loss_disadvantaged for r in res])
            gap = abs(la - ld) if math.isfinite(la) and math.isfinite(ld) else math.nan
            n_a = sum(r.group_sizes[0] for r in res)
            n_d = sum(r.group_sizes[1] for r in res)
            w.writerow([m, _f(la), _f(ld), _f(gap), n_a, n_d])
    log.info("groups: advantaged=%s disadvantaged=%s", labels[0], labels[1])
    return EXIT_OK


def _mean(v):
    a = np.asarray(v, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.mean()) if a.size else math.nan


def _f(x):
    return "nan" if math.isnan(x) else repr(float(x))


def _write_report(sweep: SweepResult, out_dir: str):
    report = build_report(sweep)
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    with open(os.path.join(out_dir, "report.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(report.to_jsonl())
    return report


def cmd_experiment(args, argv) -> int:
    measures = resolve_measures(args.measures)
    grid = parse_grid(args.grid)
    if not args.input and args.synth <= 0:
        raise UsageError("give --input files or --synth K")
    datasets = []
    failures = {}
    for path in args.input:
        did = os.path.splitext(os.path.basename(path))[0]
        try:
            datasets.append((did, load_csv(path, args.time_col, args.status_col, args.group_col)))
        except DataError as exc:
            failures[did] = str(exc)
    if args.synth > 0:
        cfg = _synth_config(args, args.synth_config)
        for k in range(args.synth):
            seed = int(np.random.SeedSequence([args.seed, 104729, k]).generate_state(1)[0])
            datasets.append((f"synth{k}", generate_synthetic(cfg, seed)))
    os.makedirs(args.out, exist_ok=True)
    sweep = sigma_sweep(
        datasets,
        grid=grid,
        measures=measures,
        method=args.method,
        learner_params=_learner(args),
        config=BiasRunConfig(repetitions=args.reps, folds=args.folds, seed=args.seed),
        jobs=args.jobs,
        keep_going=True,
    )
    failures.update(sweep.failures)
    sweep.to_csv(os.path.join(args.out, "sweep.csv"))
    if sweep.rows and len(grid) >= 3:
        _write_report(sweep, args.out)
    elif sweep.rows:
        log.warning("fewer than 3 sigma levels: statistics report skipped")
    for did, msg in sorted(failures.items()):
        print(f"survfair: dataset {did} failed: {msg}", file=sys.stderr)
    if failures:
        return EXIT_PARTIAL if sweep.rows else EXIT_DATA
    return EXIT_OK


def cmd_report(args, argv) -> int:
    sweep = SweepResult.from_csv(args.input)
    os.makedirs(args.out, exist_ok=True)
    _write_report(sweep, args.out)
    return EXIT_OK


COMMANDS = {"audit": cmd_audit, "experiment": cmd_experiment, "synth": cmd_synth, "report": cmd_report}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    for path_attr in ("input",):
        paths = getattr(args, path_attr, None)
        for p in [paths] if isinstance(paths, str) else paths or []:
            if not os.path.isfile(p):
                print(f"survfair: {p}: no such file", file=sys.stderr)
                return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, argv)
    except (UsageError, KeyError) as exc:
        print(f"survfair: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ReportError, ValueError) as exc:
        print(f"survfair: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
