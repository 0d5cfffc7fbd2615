"""Root-vs-stump BIC, the cell-mean MSPE model and complexity timings.

These routines work on raw samples and do not go through the tree code,
so they double as independent checks of it.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .trim import VARIANCE_FLOOR

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BicSample:
    x: np.ndarray
    y: np.ndarray
    sigma2: float | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=np.float64)
        if x.shape[0] != y.shape[0] or y.ndim != 1:
            raise ValueError("x rows and y length differ")
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("x coordinates must lie in [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class MspeModelSpec:
    m: int
    k: int
    beta: float
    sigma2: float

    def __post_init__(self):
        if self.m < 1 or self.k < 1 or not self.sigma2 > 0:
            raise ValueError("need m >= 1, k >= 1 and sigma2 > 0")


def _variance(v: float) -> float:
    if v < VARIANCE_FLOOR:
        raise ArithmeticError(f"variance estimate {v:g} below {VARIANCE_FLOOR:g}")
    return v


def root_sse(y: np.ndarray) -> float:
    r = y - y.mean()
    return float(r @ r)


def min_two_segment_sse(x: np.ndarray, y: np.ndarray) -> tuple[float, int, int]:
    """Smallest two-segment SSE over every feature and left size n_L.

    Points are ordered by each coordinate (stable, so ties keep input order)
    and cut after position ``n_L``.  Ties go to the lowest feature, then the
    lowest ``n_L``.  Returns ``(sse, j, n_L)``.
    """
    n, d = x.shape
    if n < 2:
        raise ValueError("two segments need n >= 2")
    yc = y - y.mean()
    total = float(yc @ yc)
    # differences below this are rounding noise and count as ties
    tol = 1e-12 * total
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best = (math.inf, -1, -1)
    for j in range(d):
        ys = yc[np.argsort(x[:, j], kind="stable")]
        cs = np.cumsum(ys)
        s_left = cs[:-1]
        s_right = cs[-1] - s_left
        sse = np.maximum(total - s_left * s_left / nl - s_right * s_right / nr, 0.0)
        i = int(np.flatnonzero(sse <= sse.min() + tol)[0])
        if sse[i] < best[0] - tol:
            best = (float(sse[i]), j, i + 1)
    return best


def bic0(sample: BicSample, sigma2_hat: float | None = None) -> float:
    """Root-model BIC.

    Known variance (``sample.sigma2``) uses penalty ``log n``; otherwise the
    plug-in ``sigma2_hat`` (default: the root MLE) with penalty ``2 log n``.
    """
    n = sample.n
    sse = root_sse(sample.y)
    if sample.sigma2 is not None:
        s2 = float(sample.sigma2)
        return n * (LOG_2PI + math.log(s2)) + sse / s2 + math.log(n)
    s2 = _variance(sse / n if sigma2_hat is None else float(sigma2_hat))
    if sigma2_hat is None:
        return n * (LOG_2PI + math.log(s2)) + n + 2.0 * math.log(n)
    return n * (LOG_2PI + math.log(s2)) + sse / s2 + 2.0 * math.log(n)


def bic1(sample: BicSample, sigma2_hat: float | None = None) -> tuple[float, tuple[int, int]]:
    """Stump-model BIC with the split minimised over features and cut points.

    Known variance uses penalty ``4 log n``; otherwise ``5 log n`` with the
    plug-in ``sigma2_hat`` (default: SSE at the chosen split over n).
    Returns ``(value, (j, n_L))``.
    """
    n = sample.n
    sse, j, n_left = min_two_segment_sse(sample.x, sample.y)
    if sample.sigma2 is not None:
        s2 = float(sample.sigma2)
        return n * (LOG_2PI + math.log(s2)) + sse / s2 + 4.0 * math.log(n), (j, n_left)
    s2 = _variance(sse / n if sigma2_hat is None else float(sigma2_hat))
    resid = n if sigma2_hat is None else sse / s2
    return n * (LOG_2PI + math.log(s2)) + resid + 5.0 * math.log(n), (j, n_left)


def mc_consistency(truth: str, n: int, d: int, reps: int, seed: int,
                   mu1: float = 0.0, mu2: float = 2.0, feature: int = 0,
                   split: float = 0.5, sigma2: float = 1.0) -> float:
    """Fraction of replicates in which the BIC of the true model is smaller.

    Both criteria use the stump-fit variance MLE as plug-in estimate.
    ``truth`` is ``"root"`` (mean ``mu1`` everywhere) or ``"stump"``.
    """
    if truth not in ("root", "stump"):
        raise ValueError(f"truth must be 'root' or 'stump', got {truth!r}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if truth == "stump":
        if mu1 == mu2:
            raise ValueError("a stump truth needs mu1 != mu2")
        if not 0.0 < split < 1.0:
            raise ValueError("split location must lie in (0, 1)")
        if not 0 <= feature < d:
            raise ValueError("split feature out of range")
    sd = math.sqrt(sigma2)
    wins = 0
    for r in range(reps):
        rng = np.random.default_rng([seed, r])
        x = rng.uniform(0.0, 1.0, size=(n, d))
        if truth == "root":
            mu = np.full(n, mu1)
        else:
            mu = np.where(x[:, feature] < split, mu1, mu2)
        y = mu + sd * rng.standard_normal(n)
        s = BicSample(x, y)
        sse1, _, _ = min_two_segment_sse(s.x, s.y)
        s2 = sse1 / n
        b0 = bic0(s, sigma2_hat=s2)
        b1, _ = bic1(s, sigma2_hat=s2)
        wins += (b0 < b1) if truth == "root" else (b1 < b0)
    return wins / reps


def mspe_closed_form(spec: MspeModelSpec) -> float:
    """Expected squared error of the cell-mean estimator at a uniform point."""
    return spec.sigma2 / spec.m + (1.0 + 1.0 / spec.m) * spec.beta ** 2 / (12.0 * spec.k ** 2)


def mspe_simulate(spec: MspeModelSpec, reps: int, seed: int,
                  chunk: int = 50_000) -> tuple[float, float]:
    """Monte Carlo estimate of the cell-mean MSPE and its standard error.

    Each replicate draws ``m`` stratified points in a random cell, averages
    their responses, and scores the average at a fresh uniform point of the
    same cell.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    rng = np.random.default_rng(seed)
    m, k = spec.m, spec.k
    sd = math.sqrt(spec.sigma2)
    total = 0.0
    total2 = 0.0
    done = 0
    while done < reps:
        b = min(chunk, reps - done)
        cell = rng.integers(0, k, size=b)
        lo = cell / k
        x = lo[:, None] + rng.uniform(0.0, 1.0 / k, size=(b, m))
        y = spec.beta * x + sd * rng.standard_normal((b, m))
        est = y.mean(axis=1)
        x_test = lo + rng.uniform(0.0, 1.0 / k, size=b)
        err = (est - spec.beta * x_test) ** 2
        total += err.sum()
        total2 += (err * err).sum()
        done += b
    mean = total / reps
    var = (total2 - reps * mean * mean) / (reps - 1)
    return mean, math.sqrt(max(var, 0.0) / reps)


def optimal_k(gamma: float, n: float) -> float:
    """Cell count minimising the cell-mean MSPE for SNR ``gamma`` and size ``n``.

    Positive root of ``k^3 / (gamma^2 n) - k / (12 n) - 1/6``, with k treated
    as continuous.
    """
    if not gamma > 0 or n < 1:
        raise ValueError("need gamma > 0 and n >= 1")
    # scaled by gamma^2 n: k^3 - (gamma^2 / 12) k - gamma^2 n / 6
    g2 = gamma * gamma
    p = g2 / 12.0
    q = g2 * n / 6.0

    def f(k):
        return k * k * k - p * k - q

    hi = max(1.0, math.sqrt(p), q ** (1.0 / 3.0))
    while f(hi) <= 0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def optimal_k_for(beta: float, sigma2: float, n: float) -> float:
    return optimal_k(abs(beta) / math.sqrt(sigma2), n)


def optimal_k_asymptotic(gamma: float, n: float) -> float:
    return (gamma * gamma * n / 6.0) ** (1.0 / 3.0)


def loglog_slope(sizes, times) -> float:
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)[0])


def _median_time(fn, min_total: float = 0.05, rounds: int = 7) -> float:
    """Median per-call wall time, batching calls until a round lasts ``min_total``."""
    fn()
    reps = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        dt = time.perf_counter() - t0
        if dt >= min_total:
            break
        reps = max(reps * 2, int(reps * min_total / max(dt, 1e-9)) + 1)
    samples = [dt / reps]
    for _ in range(rounds - 1):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        samples.append((time.perf_counter() - t0) / reps)
    return float(np.median(samples))


def complexity_bench(sizes=(1000, 4000, 16000, 64000), d: int = 5, n_trees: int = 4,
                     rounds: int = 7, alpha: float = 1.0, seed: int = 0) -> dict:
    """Median wall times of fitting, pruning and OOB evaluation versus n.

    Returns a dict with a ``rows`` list (one per size) and the fitted log-log
    slope of each phase.
    """
    from .dataset import SyntheticSpec, generate
    from .forest import ForestConfig, _oob_errors, fit_forest
    from .trim import prune
    from .tree import TreeConfig

    sizes = list(sizes)
    if len(sizes) < 4:
        raise ValueError("need at least four sample sizes")
    rows = []
    for n in sizes:
        data = generate(SyntheticSpec("linear_snr", n, beta=1.0, d=d, seed=seed))
        cfg = ForestConfig(n_trees, TreeConfig(3, d), (alpha,), seed)
        t_fit = _median_time(lambda: fit_forest(data, cfg), rounds=3)
        forest = fit_forest(data, cfg)
        trees = forest.trees
        t_prune = _median_time(lambda: [prune(t, alpha) for t in trees], rounds=rounds) / n_trees
        merged = [[prune(t, alpha).merged for t in trees]]
        t_oob = _median_time(lambda: _oob_errors(forest, data, merged), rounds=3)
        rows.append({
            "n": n,
            "mean_splits": float(np.mean([t.K for t in trees])),
            "fit_seconds": t_fit,
            "prune_seconds": t_prune,
            "oob_seconds": t_oob,
        })
    return {
        "rows": rows,
        "fit_slope": loglog_slope(sizes, [r["fit_seconds"] for r in rows]),
        "prune_slope": loglog_slope(sizes, [r["prune_seconds"] for r in rows]),
        "oob_slope": loglog_slope(sizes, [r["oob_seconds"] for r in rows]),
    }


def prune_dimension_ratio(n: int = 16000, d: int = 5, n_trees: int = 4, alpha: float = 1.0,
                          seed: int = 0, rounds: int = 9) -> dict:
    """Prune time per split at ``2 d`` features divided by that at ``d``."""
    from .dataset import SyntheticSpec, generate
    from .forest import ForestConfig, fit_forest
    from .trim import prune
    from .tree import TreeConfig

    out = {}
    for dd in (d, 2 * d):
        data = generate(SyntheticSpec("linear_snr", n, beta=1.0, d=dd, seed=seed))
        trees = fit_forest(data, ForestConfig(n_trees, TreeConfig(3, dd), (alpha,), seed)).trees
        splits = sum(t.K for t in trees)
        t = _median_time(lambda: [prune(tr, alpha) for tr in trees], rounds=rounds)
        out[dd] = {"splits": splits, "seconds": t, "seconds_per_split": t / splits}
    out["ratio"] = out[2 * d]["seconds_per_split"] / out[d]["seconds_per_split"]
    return out
