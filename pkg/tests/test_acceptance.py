"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line; the lines are
repeated in the pytest terminal summary.
"""
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import OracleFloorError, oracle_merged, small_random_trees
from trimforest.cli import main
from trimforest.dataset import SyntheticSpec, generate
from trimforest.forest import (ForestConfig, alpha_grid, alpha_trim, fit_forest, load_model,
                               predict_forest, save_model)
from trimforest.harness import run_snr_table
from trimforest.theory import (MspeModelSpec, complexity_bench, mc_consistency, mspe_closed_form,
                               mspe_simulate, optimal_k, optimal_k_for, prune_dimension_ratio)
from trimforest.tree import TreeConfig
from trimforest.trim import VarianceFloorError, prune


def report(number, title, passed, detail, elapsed, limit):
    ok = passed and elapsed < limit
    line = (f"[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}; "
            f"runtime {elapsed:.1f}s (limit {limit:g}s)")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line
    assert elapsed < limit, line


def test_criterion_1_alpha_zero_identity():
    t0 = time.perf_counter()
    families = ["sine", "elbow", "logistic", "constant", "linear_snr"]
    mismatches = 0
    for i in range(20):
        fam = families[i % len(families)]
        data = generate(SyntheticSpec(fam, 300, beta=1.0, seed=1000 + i))
        X = np.random.default_rng(2000 + i).random((200, data.d))
        cfg = ForestConfig(25, TreeConfig(3), alpha_grid(0, 3, 0.1), i)
        raw = fit_forest(data, cfg)
        trimmed = alpha_trim(raw, data)
        mismatches += not np.array_equal(predict_forest(trimmed, X, 0.0), predict_forest(raw, X))
    report(1, "alpha=0 identity", mismatches == 0,
           f"{20 - mismatches}/20 forests bitwise identical on 200 points", time.perf_counter() - t0, 60)


def test_criterion_2_pruning_oracle():
    t0 = time.perf_counter()
    alphas = (0.0, 0.5, 1.0, 2.0)
    agree = total = floors = 0
    for tree, data, rows in small_random_trees(100, seed=2024):
        assert tree.K <= 6 and len(rows) <= 32
        for a in alphas:
            total += 1
            try:
                got = set(prune(tree, a).merged_ids())
            except VarianceFloorError:
                got = "floor"
            try:
                want = oracle_merged(tree, data.features, data.response, rows, a)
            except OracleFloorError:
                want = "floor"
            floors += want == "floor"
            agree += got == want
    report(2, "pruning oracle equivalence", agree == total,
           f"{agree}/{total} (tree, alpha) decisions agree ({floors} floor errors)", time.perf_counter() - t0, 60)


def test_criterion_3_consistency():
    t0 = time.perf_counter()
    root = mc_consistency("root", 2000, 2, 200, seed=11)
    stump = mc_consistency("stump", 2000, 2, 200, seed=11)
    trend = {}
    for truth in ("root", "stump"):
        small = np.mean([mc_consistency(truth, 100, 2, 200, seed=s) for s in range(5)])
        large = np.mean([mc_consistency(truth, 2000, 2, 200, seed=s) for s in range(5)])
        trend[truth] = (small, large)
    passed = root >= 0.95 and stump >= 0.95 and all(lg >= sm for sm, lg in trend.values())
    detail = (f"rate(root)={root:.3f}, rate(stump)={stump:.3f}; 5-seed mean n=100 vs 2000: "
              + ", ".join(f"{k} {v[0]:.3f}->{v[1]:.3f}" for k, v in trend.items()))
    report(3, "root/stump selection consistency", passed, detail, time.perf_counter() - t0, 120)


def test_criterion_4_mspe_formula():
    t0 = time.perf_counter()
    parts = []
    passed = True
    for i, args in enumerate([(10, 5, 2.0, 1.0), (5, 20, 1.0, 4.0), (50, 2, 0.0, 1.0)]):
        spec = MspeModelSpec(*args)
        est, se = mspe_simulate(spec, 200_000, seed=40 + i)
        z = abs(est - mspe_closed_form(spec)) / se
        passed &= z <= 3.0
        parts.append(f"{args}: |z|={z:.2f}")
    report(4, "cell-mean MSPE formula", passed, "; ".join(parts), time.perf_counter() - t0, 120)


def test_criterion_5_optimal_k():
    t0 = time.perf_counter()
    ratio = optimal_k(1.0, 6e6) / 100
    worst = 0.0
    for beta, sigma2, n in [(1.0, 1.0, 6e6), (2.0, 0.5, 1e4), (0.3, 3.0, 1e7)]:
        base = optimal_k_for(beta, sigma2, n)
        for c in (1e-3, 0.7, 3.0, 1e4):
            worst = max(worst, abs(optimal_k_for(c * beta, c * c * sigma2, n) - base) / base)
    passed = 0.999 <= ratio <= 1.001 and worst < 1e-12
    report(5, "optimal-k asymptotics", passed, f"k/100={ratio:.6f}, max scaling change {worst:.2e}",
           time.perf_counter() - t0, 1)


def test_criterion_6_snr_orderings():
    t0 = time.perf_counter()
    table = run_snr_table(n_train=500, n_test=1500, n_trees=100, reps=10, seed=0)
    m = table.mean
    rf_methods = sorted({r["method"] for r in table.rows if r["method"].startswith("RF-")
                         and r["method"] != "RF-tuned"})
    a = m("snr_zero", "RF-500") < m("snr_zero", "RF-5")
    b = m("snr_high", "RF-5") < 0.75 * m("snr_high", "RF-500")
    best_rf = min(m("elbow", k) for k in rf_methods)
    c = m("elbow", "AlphaTrim") <= 1.02 * best_rf
    cases = ("snr_zero", "snr_low", "snr_high", "elbow")
    d = all(m(cs, "AlphaTrim") <= 1.05 * m(cs, "RF-tuned") for cs in cases)
    detail = (f"(a) {m('snr_zero', 'RF-500'):.4f}<{m('snr_zero', 'RF-5'):.4f} {a}; "
              f"(b) {m('snr_high', 'RF-5'):.4f}<0.75*{m('snr_high', 'RF-500'):.4f} {b}; "
              f"(c) {m('elbow', 'AlphaTrim'):.4f}<=1.02*{best_rf:.4f} {c}; "
              f"(d) AlphaTrim/RF-tuned " + ",".join(f"{m(cs, 'AlphaTrim') / m(cs, 'RF-tuned'):.3f}"
                                                   for cs in cases) + f" {d}")
    report(6, "SNR table orderings", a and b and c and d, detail, time.perf_counter() - t0, 900)


@pytest.mark.slow
def test_criterion_7_prune_scaling():
    t0 = time.perf_counter()
    bench = complexity_bench(sizes=(1000, 4000, 16000, 64000), d=5, n_trees=4, seed=0)
    slope = bench["prune_slope"]
    ratio = prune_dimension_ratio(n=16000, d=5, seed=0)["ratio"]
    passed = 0.7 <= slope <= 1.3 and 0.8 <= ratio <= 1.2
    report(7, "pruning cost scaling", passed,
           f"prune slope {slope:.3f} (fit {bench['fit_slope']:.3f}), 2d/d time-per-split ratio {ratio:.3f}",
           time.perf_counter() - t0, 300)


def _digest(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(paths) if p.is_file()}


def test_criterion_8_cli_determinism(tmp_path, monkeypatch, capsys):
    t0 = time.perf_counter()
    monkeypatch.chdir(tmp_path)
    commands = [
        ["simulate", "--family", "elbow", "--n", "400", "--seed", "7", "--out", "elbow.csv"],
        ["fit", "--data", "elbow.csv", "--trees", "20", "--min-node-size", "3", "--seed", "1", "--out", "m.model"],
        ["trim", "--model", "m.model", "--data", "elbow.csv", "--alpha-grid", "0:3:0.1", "--out", "t.model"],
        ["predict", "--model", "t.model", "--data", "elbow.csv", "--out", "preds.csv"],
        ["bench-snr", "--n", "100", "--trees", "5", "--reps", "2", "--nmin-grid", "5,50",
         "--alpha-grid", "0:1:0.5", "--seed", "3", "--out", "snr.csv"],
        ["bench-cv", "--family", "sine", "--n", "120", "--trees", "5", "--folds", "3", "--reps", "2",
         "--nmin-grid", "2,30", "--alpha-grid", "0:1:0.5", "--seed", "4", "--out", "cv.csv"],
        ["verify", "--prop", "1", "--n", "300", "--reps", "30", "--seed", "5", "--out", "v1.csv"],
        ["verify", "--prop", "3", "--seed", "5", "--out", "v3.csv"],
        ["verify", "--prop", "k", "--seed", "5", "--out", "vk.csv"],
    ]
    failures = []
    for cmd in commands:
        before = set(Path(".").iterdir())
        outs = []
        for _ in range(2):
            code = main(cmd)
            stdout = capsys.readouterr().out
            files = set(Path(".").iterdir()) - before
            outs.append((code, stdout, _digest(files)))
        if outs[0] != outs[1] or outs[0][0] != 0:
            failures.append(cmd[0])
    report(8, "CLI determinism", not failures,
           f"{len(commands) - len(failures)}/{len(commands)} commands byte-identical on re-run"
           + (f"; differing: {failures}" if failures else ""), time.perf_counter() - t0, 120)


def test_criterion_9_model_round_trip(tmp_path):
    t0 = time.perf_counter()
    data = generate(SyntheticSpec("linear_snr", 400, beta=1.0, seed=9))
    forest = alpha_trim(fit_forest(data, ForestConfig(40, TreeConfig(3), alpha_grid(0, 3, 0.1), 9)), data)
    save_model(forest, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X = np.random.default_rng(9).random((100, data.d))
    bad = [a for a in forest.config.alpha_grid
           if not np.array_equal(predict_forest(forest, X, a), predict_forest(back, X, a))]
    same_default = np.array_equal(predict_forest(forest, X), predict_forest(back, X))
    passed = not bad and same_default and back.selected_alpha == forest.selected_alpha
    report(9, "model round trip", passed,
           f"{31 - len(bad)}/31 grid alphas bit-identical, selected alpha {back.selected_alpha}",
           time.perf_counter() - t0, 10)
