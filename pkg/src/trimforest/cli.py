"""Command-line entry point: ``trimforest <command> [flags]``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .dataset import DataError, SyntheticSpec, generate, load_csv, save_csv
from .forest import (ForestConfig, ModelFormatError, UnknownAlphaError, alpha_grid, alpha_trim,
                     fit_forest, load_model, predict_forest, save_model)
from .tree import TreeConfig
from .trim import VarianceFloorError


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


def parse_alpha_grid(text: str) -> tuple:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise CliError(f"--alpha-grid expects start:stop:step, got {text!r}") from None
    try:
        return alpha_grid(start, stop, step)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def parse_int_list(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise CliError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise CliError("empty list")
    return vals


def _write_manifest(out: str, command: str, args: argparse.Namespace, extra=None) -> None:
    doc = {"command": command,
           "flags": {k: v for k, v in sorted(vars(args).items()) if k != "func"}}
    if extra:
        doc.update(extra)
    Path(f"{out}.manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def cmd_simulate(args):
    spec = SyntheticSpec(args.family, args.n, beta=args.beta, sigma2=args.sigma2, seed=args.seed)
    save_csv(generate(spec), args.out)
    print(f"wrote {args.n} rows to {args.out}")


def cmd_fit(args):
    data = load_csv(args.data, args.target)
    cfg = ForestConfig(args.trees, TreeConfig(args.min_node_size, args.mtry), (0.0,), args.seed)
    forest = fit_forest(data, cfg, target=args.target)
    save_model(forest, args.out)
    print(f"fitted {args.trees} trees on n={data.n}, d={data.d}; wrote {args.out}")


def cmd_trim(args):
    forest = load_model(args.model)
    data = load_csv(args.data, args.target or forest.target)
    if data.feature_names != forest.feature_names:
        raise DataError(f"feature columns {data.feature_names} do not match model {forest.feature_names}")
    grid = parse_alpha_grid(args.alpha_grid)
    forest = replace(forest, config=replace(forest.config, alpha_grid=grid))
    forest = alpha_trim(forest, data)
    save_model(forest, args.out)
    print(f"selected alpha {forest.selected_alpha!r} "
          f"(OOB MSE {forest.oob_by_alpha[forest.selected_alpha]!r}); wrote {args.out}")


def _read_features(path, names):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        missing = [c for c in names if c not in header]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        cols = [header.index(c) for c in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [float(row[j]) for j in cols]
            except (ValueError, IndexError):
                raise DataError(f"{path}: row {lineno}: non-numeric or missing feature cell") from None
            if not np.all(np.isfinite(vals)):
                raise DataError(f"{path}: row {lineno}: non-finite feature cell")
            rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(-1, len(names))


def cmd_predict(args):
    forest = load_model(args.model)
    X = _read_features(args.data, forest.feature_names)
    pred = predict_forest(forest, X)
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prediction"])
        for v in pred:
            w.writerow([repr(float(v))])
    print(f"wrote {len(pred)} predictions to {args.out}")


def cmd_bench_snr(args):
    nmins = parse_int_list(args.nmin_grid) if args.nmin_grid else harness.SNR_NMIN_GRID
    grid = parse_alpha_grid(args.alpha_grid)
    table = harness.run_snr_table(n_train=args.n, n_trees=args.trees, reps=args.reps, seed=args.seed,
                                  nmin_grid=nmins, alpha_grid=grid, mtry=args.mtry)
    table.write_csv(args.out)
    summary = str(Path(args.out).with_suffix("")) + ".summary.csv"
    table.write_summary_csv(summary)
    _write_manifest(args.out, "bench-snr", args, {"summary": summary})
    for r in table.summary():
        print(f"{r['dataset']:<10} {r['method']:<10} {r['mean']:.4f}")


def cmd_bench_cv(args):
    if args.data:
        data = load_csv(args.data, args.target)
        name = Path(args.data).stem
    elif args.family:
        data = generate(SyntheticSpec(args.family, args.n, beta=args.beta, sigma2=args.sigma2, seed=args.seed))
        name = args.family
    else:
        raise CliError("bench-cv needs --data or --family")
    nmins = parse_int_list(args.nmin_grid) if args.nmin_grid else None
    mtrys = (args.mtry,) if args.mtry else None
    table = harness.run_cv_compare(data, folds=args.folds, reps=args.reps, seed=args.seed,
                                   n_trees=args.trees, alpha_grid=parse_alpha_grid(args.alpha_grid),
                                   nmins=nmins, mtrys=mtrys, name=name)
    table.write_csv(args.out)
    summary = str(Path(args.out).with_suffix("")) + ".summary.csv"
    table.write_summary_csv(summary)
    _write_manifest(args.out, "bench-cv", args, {"summary": summary,
                                                 "resampling": "bootstrap full data, then k-fold"})
    for r in table.summary():
        ratio = f" ratio {r['ratio']:.4f} [{r['ratio_lo']:.4f}, {r['ratio_hi']:.4f}]" if "ratio" in r else ""
        print(f"{r['method']:<11} {r['mean']:.4f}{ratio}")


def cmd_verify(args):
    checks = harness.run_theory(props=(args.prop,), n=args.n, reps=args.reps, seed=args.seed)
    for c in checks:
        print(c.line())
    if args.out:
        harness.write_checks(args.out, checks)
    if not all(c.passed for c in checks):
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trimforest", description="Alpha-trimmed random forests.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic CSV")
    s.add_argument("--family", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--sigma2", type=float, default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit a forest of fully grown trees")
    s.add_argument("--data", required=True)
    s.add_argument("--target", default="y")
    s.add_argument("--trees", type=int, default=750)
    s.add_argument("--mtry", type=int, default=None)
    s.add_argument("--min-node-size", type=int, default=3)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("trim", help="alpha-trim a fitted model, selecting alpha by OOB error")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--target", default=None)
    s.add_argument("--alpha-grid", default="0:3:0.1")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_trim)

    s = sub.add_parser("predict", help="predict with a model (at its selected alpha, if trimmed)")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("bench-snr", help="SNR experiments (RMSPE table)")
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--trees", type=int, default=100)
    s.add_argument("--mtry", type=int, default=None)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--alpha-grid", default="0:3:0.1")
    s.add_argument("--nmin-grid", default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench_snr)

    s = sub.add_parser("bench-cv", help="repeated k-fold CV comparison")
    s.add_argument("--data", default=None)
    s.add_argument("--target", default="y")
    s.add_argument("--family", default=None)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--sigma2", type=float, default=None)
    s.add_argument("--trees", type=int, default=100)
    s.add_argument("--mtry", type=int, default=None)
    s.add_argument("--folds", type=int, default=6)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--alpha-grid", default="0:3:0.1")
    s.add_argument("--nmin-grid", default=None)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench_cv)

    s = sub.add_parser("verify", help="empirical checks of the theoretical results")
    s.add_argument("--prop", required=True, choices=["1", "2", "3", "4", "k"])
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args) or 0
    except (CliError, DataError, ModelFormatError, UnknownAlphaError, VarianceFloorError,
            ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, CliError) else 1


if __name__ == "__main__":
    sys.exit(main())
