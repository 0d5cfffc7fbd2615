"""Datasets, synthetic generators and resampling helpers."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FAMILIES = ("constant", "elbow", "logistic", "sine", "linear_snr", "elbow_snr")

# Noise variances of the four one-dimensional benchmark sets.
DEFAULT_SIGMA2 = {
    "constant": 1.0 / 1000,
    "elbow": 1.0 / 1000,
    "logistic": 0.005,
    "sine": 0.05,
    "linear_snr": 1.0,
    "elbow_snr": 1.0,
}


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass
class Dataset:
    """Numeric regression sample.

    Parameters
    ----------
    features : (n, d) ndarray
    response : (n,) ndarray
    feature_names : list of str
    """

    features: np.ndarray
    response: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.response = np.ascontiguousarray(self.response, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-d array")
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise DataError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
        if self.response.shape != (n,):
            raise DataError(
                f"response length {self.response.shape[0]} != {n} feature rows"
            )
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.response))):
            raise DataError("all entries must be finite")
        if not self.feature_names:
            self.feature_names = [f"x{j + 1}" for j in range(d)]
        if len(self.feature_names) != d:
            raise DataError("feature_names length does not match d")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.response[idx], list(self.feature_names))


@dataclass(frozen=True)
class SyntheticSpec:
    family: str
    n: int
    beta: float = 0.0
    sigma2: float | None = None
    d: int | None = None
    normalize: bool | None = None
    seed: int = 0

    def resolved(self) -> "SyntheticSpec":
        """Fill family defaults for sigma2, d and normalize."""
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        sigma2 = DEFAULT_SIGMA2[self.family] if self.sigma2 is None else float(self.sigma2)
        multi = self.family in ("linear_snr", "elbow_snr")
        d = (5 if multi else 1) if self.d is None else int(self.d)
        normalize = (not multi) if self.normalize is None else bool(self.normalize)
        if not sigma2 > 0:
            raise DataError("sigma2 must be positive")
        if self.n < 2:
            raise DataError("n must be at least 2")
        if d < 1:
            raise DataError("d must be at least 1")
        return SyntheticSpec(self.family, int(self.n), float(self.beta), sigma2, d,
                             normalize, int(self.seed))


def mean_function(family: str, X: np.ndarray, beta: float = 0.0) -> np.ndarray:
    """True regression function of a synthetic family evaluated on X."""
    x = X[:, 0]
    if family == "constant":
        return np.zeros(X.shape[0])
    if family == "elbow":
        return np.where(x < 0.5, 0.0, x - 0.5)
    if family == "logistic":
        return 1.0 / (1.0 + np.exp(15.0 - 30.0 * x))
    if family == "sine":
        return np.sin(2.0 * np.pi * x)
    if family == "linear_snr":
        return beta * X.sum(axis=1)
    if family == "elbow_snr":
        return 10.0 * (x - 0.5) * (x >= 0.5)
    raise DataError(f"unknown family {family!r}")


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw a synthetic dataset; deterministic in ``spec.seed``."""
    spec = spec.resolved()
    rng = np.random.default_rng(spec.seed)
    X = rng.uniform(0.0, 1.0, size=(spec.n, spec.d))
    y = mean_function(spec.family, X, spec.beta) + math.sqrt(spec.sigma2) * rng.standard_normal(spec.n)
    if spec.normalize:
        y = normalize_response(y)
    return Dataset(X, y)


def normalize_response(y: np.ndarray) -> np.ndarray:
    """Center to mean 0 and scale to unit population variance."""
    y = y - y.mean()
    sd = math.sqrt(np.mean(y * y))
    if sd == 0.0:
        raise DataError("cannot normalize a constant response")
    y = y / sd
    # second pass removes the residual rounding in the mean
    return y - y.mean()


def load_csv(path, target: str) -> Dataset:
    """Read a header-first numeric CSV, using column ``target`` as response."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target not in header:
            raise DataError(f"{path}: target column {target!r} not found in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col!r}: non-numeric cell {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col!r}: non-finite cell {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    t = header.index(target)
    keep = [j for j in range(len(header)) if j != t]
    if not keep:
        raise DataError(f"{path}: no feature columns besides {target!r}")
    return Dataset(table[:, keep], table[:, t], [header[j] for j in keep])


def save_csv(data: Dataset, path, target: str = "y") -> None:
    """Write ``data`` as CSV with the response as the last column."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.feature_names) + [target])
        for row, yi in zip(data.features, data.response):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])


def bootstrap_sample(data, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` indices with replacement; ``data`` is a Dataset or a count.

    Returns
    -------
    indices : (n,) int64 ndarray, sorted
    oob_mask : (n,) bool ndarray, True where the index was never drawn
    """
    n = data.n if isinstance(data, Dataset) else int(data)
    if n < 1:
        raise DataError("bootstrap needs n >= 1")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.integers(0, n, size=n))
    oob = np.bincount(idx, minlength=n) == 0
    return idx, oob


@dataclass(frozen=True)
class FoldPlan:
    assignments: np.ndarray
    k: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def kfold(n: int, k: int, seed) -> FoldPlan:
    """Random balanced partition of ``range(n)`` into ``k`` folds."""
    if k < 2:
        raise DataError(f"need at least 2 folds, got {k}")
    if k > n:
        raise DataError(f"cannot make {k} folds from {n} points")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(assignments, k)
