"""Benchmark experiments: SNR table, repeated cross-validation, theory checks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .dataset import Dataset, SyntheticSpec, bootstrap_sample, generate, kfold
from .forest import DEFAULT_ALPHA_GRID, ForestConfig, alpha_trim, fit_forest, oob_error, predict_forest
from .tree import TreeConfig

SNR_NMIN_GRID = (5, 10, 20, 50, 100, 200, 300, 400, 500)

# (case name, family, beta)
SNR_CASES = (
    ("snr_zero", "linear_snr", 0.0),
    ("snr_low", "linear_snr", 0.5),
    ("snr_high", "linear_snr", 3.0),
    ("elbow", "elbow_snr", 0.0),
)

CV_METHODS = ("alpha_trim", "rf_default", "rf_tuned")
Z95 = 1.96


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0] >> 1)


def rmspe(pred: np.ndarray, y: np.ndarray) -> float:
    r = pred - y
    return math.sqrt(float(np.mean(r * r)))


@dataclass
class ResultTable:
    """Replicate-level RMSPE rows plus summaries derived from them."""

    rows: list = field(default_factory=list)
    baseline: str | None = None

    COLUMNS = ("dataset", "method", "replicate", "fold", "rmspe")

    def add(self, dataset, method, replicate, fold, value):
        if not value >= 0:
            raise ValueError(f"invalid RMSPE {value}")
        self.rows.append({"dataset": dataset, "method": method, "replicate": int(replicate),
                          "fold": int(fold), "rmspe": float(value)})

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r["dataset"], r["method"], r["replicate"], r["fold"]))

    def replicate_means(self) -> dict:
        """{(dataset, method): {replicate: mean RMSPE over folds}}"""
        acc = {}
        for r in self.rows:
            acc.setdefault((r["dataset"], r["method"]), {}).setdefault(r["replicate"], []).append(r["rmspe"])
        return {key: {rep: float(np.mean(v)) for rep, v in reps.items()} for key, reps in acc.items()}

    def summary(self) -> list:
        """Mean RMSPE with a z-interval per (dataset, method), and ratios to the baseline."""
        reps = self.replicate_means()
        out = []
        for (ds, method) in sorted(reps):
            vals = reps[(ds, method)]
            row = {"dataset": ds, "method": method, **_z_interval(list(vals.values()))}
            base = reps.get((ds, self.baseline)) if self.baseline else None
            if base is not None:
                common = sorted(set(vals) & set(base))
                ratio = _z_interval([vals[k] / base[k] for k in common])
                row.update({"ratio": ratio["mean"], "ratio_lo": ratio["lo"], "ratio_hi": ratio["hi"]})
            out.append(row)
        return out

    def mean(self, dataset: str, method: str) -> float:
        return float(np.mean(list(self.replicate_means()[(dataset, method)].values())))

    def write_csv(self, path) -> None:
        _write_csv(path, self.COLUMNS, self.sorted_rows())

    def write_summary_csv(self, path) -> None:
        cols = ["dataset", "method", "replicates", "mean", "sd", "lo", "hi"]
        if self.baseline:
            cols += ["ratio", "ratio_lo", "ratio_hi"]
        _write_csv(path, cols, self.summary())

    @classmethod
    def read_csv(cls, path, baseline=None) -> "ResultTable":
        table = cls(baseline=baseline)
        with Path(path).open(newline="") as fh:
            for r in csv.DictReader(fh):
                table.add(r["dataset"], r["method"], r["replicate"], r["fold"], float(r["rmspe"]))
        return table


def _z_interval(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    r = v.shape[0]
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if r > 1 else 0.0
    half = Z95 * sd / math.sqrt(r)
    return {"replicates": r, "mean": mean, "sd": sd, "lo": mean - half, "hi": mean + half}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


# -- SNR experiments ------------------------------------------------------------

def run_snr_table(cases=SNR_CASES, n_train: int = 500, n_test: int = 1500, n_trees: int = 100,
                  reps: int = 10, seed: int = 0, nmin_grid=SNR_NMIN_GRID,
                  alpha_grid=DEFAULT_ALPHA_GRID, alpha_nmin: int = 3,
                  mtry: int | None = None) -> ResultTable:
    """Test-set RMSPE of AlphaTrim, OOB-tuned RF and each fixed RF-x.

    Each replicate draws fresh train and test sets.  RF-tuned picks the
    RF-x with the smallest training OOB error.
    """
    table = ResultTable(baseline="AlphaTrim")
    for ci, (name, family, beta) in enumerate(cases):
        for r in range(reps):
            train = generate(SyntheticSpec(family, n_train, beta=beta, seed=derive_seed(seed, ci, r, 0)))
            test = generate(SyntheticSpec(family, n_test, beta=beta, seed=derive_seed(seed, ci, r, 1)))
            forest_seed = derive_seed(seed, ci, r, 2)

            forest = fit_forest(train, ForestConfig(n_trees, TreeConfig(alpha_nmin, mtry),
                                                    alpha_grid, forest_seed))
            forest = alpha_trim(forest, train)
            table.add(name, "AlphaTrim", r, 0, rmspe(predict_forest(forest, test.features), test.response))

            best = None
            for nmin in nmin_grid:
                rf = fit_forest(train, ForestConfig(n_trees, TreeConfig(nmin, mtry), (0.0,), forest_seed))
                score = rmspe(predict_forest(rf, test.features), test.response)
                table.add(name, f"RF-{nmin}", r, 0, score)
                err = oob_error(rf, train)
                if best is None or err < best[0]:
                    best = (err, score)
            table.add(name, "RF-tuned", r, 0, best[1])
    return table


# -- repeated cross-validation ----------------------------------------------------

def mtry_grid(d: int) -> tuple:
    vals = [1, math.isqrt(d), d // 3, (2 * d) // 3, d - 1]
    return tuple(sorted({v for v in vals if v >= 1}))


def nmin_grid(n: int, steps: int = 30) -> tuple:
    """Geometric node-size grid from 2 to n."""
    if n < 2:
        return (2,)
    vals = [int(math.floor(2.0 * (n / 2.0) ** (i / steps) + 1e-9)) for i in range(steps + 1)]
    vals[-1] = n
    return tuple(sorted(set(vals)))


def _fit_alpha_trim(train, n_trees, mtrys, alpha_grid, seed):
    best = None
    for mt in mtrys:
        f = alpha_trim(fit_forest(train, ForestConfig(n_trees, TreeConfig(3, mt), alpha_grid, seed)), train)
        err = f.oob_by_alpha[f.selected_alpha]
        if best is None or err < best[0]:
            best = (err, f)
    return best[1]


def _fit_rf_tuned(train, n_trees, mtrys, nmins, seed):
    best = None
    for mt in mtrys:
        for nm in nmins:
            f = fit_forest(train, ForestConfig(n_trees, TreeConfig(nm, mt), (0.0,), seed))
            err = oob_error(f, train)
            if best is None or err < best[0]:
                best = (err, f)
    return best[1]


def run_cv_compare(data: Dataset, methods=CV_METHODS, folds: int = 6, reps: int = 10, seed: int = 0,
                   n_trees: int = 100, alpha_grid=DEFAULT_ALPHA_GRID, nmins=None, mtrys=None,
                   name: str = "data") -> ResultTable:
    """k-fold CV RMSPE repeated on bootstrap resamples of ``data``.

    Each replicate bootstraps the full dataset and then partitions it into
    folds.  Ratios in the summary are relative to ``alpha_trim`` when it is
    among the methods.
    """
    methods = tuple(methods)
    unknown = set(methods) - set(CV_METHODS)
    if not methods or unknown:
        raise ValueError(f"methods must be a nonempty subset of {CV_METHODS}")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    mtrys = mtry_grid(data.d) if mtrys is None else tuple(mtrys)
    table = ResultTable(baseline="alpha_trim" if "alpha_trim" in methods else None)
    for r in range(reps):
        idx, _ = bootstrap_sample(data.n, derive_seed(seed, r, 0))
        boot = data.subset(idx)
        plan = kfold(boot.n, folds, derive_seed(seed, r, 1))
        for k in range(folds):
            train = boot.subset(plan.train_index(k))
            test = boot.subset(plan.test_index(k))
            fseed = derive_seed(seed, r, 2, k)
            for method in methods:
                if method == "alpha_trim":
                    forest = _fit_alpha_trim(train, n_trees, mtrys, alpha_grid, fseed)
                elif method == "rf_default":
                    forest = fit_forest(train, ForestConfig(n_trees, TreeConfig(5, max(1, data.d // 3)),
                                                            (0.0,), fseed))
                else:
                    grid = nmin_grid(train.n) if nmins is None else tuple(nmins)
                    forest = _fit_rf_tuned(train, n_trees, mtrys, grid, fseed)
                table.add(name, method, r, k, rmspe(predict_forest(forest, test.features), test.response))
    return table


# -- theory checks -------------------------------------------------------------------

@dataclass
class Check:
    check: str
    statistic: str
    value: float
    threshold: str
    passed: bool

    def line(self) -> str:
        return f"{self.check} {self.statistic}={self.value:.6g} ({self.threshold}) {'PASS' if self.passed else 'FAIL'}"


def run_theory(props=("1", "2", "3", "k", "4"), n: int = 2000, reps: int = 200, seed: int = 0,
               d: int = 2, mc_reps: int = 200_000) -> list:
    """Empirical checks of the consistency, MSPE, optimal-k and complexity results."""
    out = []
    for p in props:
        p = str(p)
        if p in ("1", "2"):
            truth = "root" if p == "1" else "stump"
            rate = theory.mc_consistency(truth, n, d, reps, seed)
            out.append(Check(f"prop{p}", "selection_rate", rate, ">= 0.95", rate >= 0.95))
        elif p == "3":
            for i, args in enumerate([(10, 5, 2.0, 1.0), (5, 20, 1.0, 4.0), (50, 2, 0.0, 1.0)]):
                spec = theory.MspeModelSpec(*args)
                est, se = theory.mspe_simulate(spec, mc_reps, derive_seed(seed, i))
                z = abs(est - theory.mspe_closed_form(spec)) / se
                out.append(Check(f"prop3[m={args[0]},k={args[1]},beta={args[2]},sigma2={args[3]}]",
                                 "abs_z", z, "<= 3", z <= 3.0))
        elif p == "k":
            ratio = theory.optimal_k(1.0, 6e6) / 100.0
            out.append(Check("optimal_k", "k/100", ratio, "in [0.999, 1.001]", 0.999 <= ratio <= 1.001))
            a = theory.optimal_k_for(2.0, 1.0, 1e5)
            b = theory.optimal_k_for(2.0 * 7.3, 7.3 ** 2, 1e5)
            rel = abs(a - b) / a
            out.append(Check("optimal_k_scaling", "rel_change", rel, "< 1e-12", rel < 1e-12))
        elif p == "4":
            bench = theory.complexity_bench(seed=seed)
            s = bench["prune_slope"]
            out.append(Check("prop4", "prune_slope", s, "in [0.7, 1.3]", 0.7 <= s <= 1.3))
            ratio = theory.prune_dimension_ratio(seed=seed)["ratio"]
            out.append(Check("prop4", "prune_time_ratio_2d_vs_d", ratio, "in [0.8, 1.2]", 0.8 <= ratio <= 1.2))
        else:
            raise ValueError(f"unknown check {p!r}; choose from 1, 2, 3, 4, k")
    return out


def write_checks(path, checks) -> None:
    _write_csv(path, ["check", "statistic", "value", "threshold", "passed"],
               [{"check": c.check, "statistic": c.statistic, "value": float(c.value),
                 "threshold": c.threshold, "passed": c.passed} for c in checks])
