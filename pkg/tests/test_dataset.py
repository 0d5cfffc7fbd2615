import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trimforest.dataset import (FAMILIES, DataError, Dataset, SyntheticSpec, bootstrap_sample,
                                generate, kfold, load_csv, save_csv)


def write(path, text):
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    data = load_csv(p, "y")
    assert (data.n, data.d) == (3, 2)
    assert data.feature_names == ["a", "b"]
    np.testing.assert_array_equal(data.response, [3, 6, 9])
    np.testing.assert_array_equal(data.features[:, 1], [2, 5, 8])


def test_load_csv_target_in_middle_keeps_order(tmp_path):
    p = write(tmp_path / "d.csv", "a,y,b\n1,2,3\n")
    data = load_csv(p, "y")
    assert data.feature_names == ["a", "b"]
    np.testing.assert_array_equal(data.features, [[1, 3]])


def test_load_csv_missing_target(tmp_path):
    p = write(tmp_path / "d.csv", "a,b\n1,2\n")
    with pytest.raises(DataError, match="target"):
        load_csv(p, "target")


def test_load_csv_nan_cell_reports_location(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,y\n1,2,3\n4,NaN,6\n")
    with pytest.raises(DataError, match=r"row 3.*b|b.*row 3"):
        load_csv(p, "y")


def test_load_csv_non_numeric(tmp_path):
    p = write(tmp_path / "d.csv", "a,y\nfoo,1\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(p, "y")


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", "y")


def test_csv_round_trip_exact(tmp_path):
    data = generate(SyntheticSpec("sine", 50, seed=3))
    save_csv(data, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", "y")
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.response, data.response)


def test_dataset_rejects_nonfinite():
    with pytest.raises(DataError):
        Dataset(np.array([[1.0], [np.inf]]), np.array([0.0, 1.0]), ["x"])
    with pytest.raises(DataError):
        Dataset(np.array([[1.0], [2.0]]), np.array([0.0]), ["x"])


@pytest.mark.parametrize("family", ["constant", "elbow", "logistic", "sine"])
def test_generate_normalized(family):
    data = generate(SyntheticSpec(family, 1000, seed=11))
    y = data.response
    assert abs(y.mean()) < 1e-12
    assert abs(y.var() - 1.0) < 1e-12


def test_generate_linear_beta_zero_is_noise():
    n, sigma2 = 5000, 1.0
    data = generate(SyntheticSpec("linear_snr", n, beta=0.0, sigma2=sigma2, seed=5))
    assert data.d == 5
    assert abs(data.response.mean()) < 4 * math.sqrt(sigma2) / math.sqrt(n)


def test_generate_deterministic():
    a = generate(SyntheticSpec("elbow", 300, seed=9))
    b = generate(SyntheticSpec("elbow", 300, seed=9))
    c = generate(SyntheticSpec("elbow", 300, seed=10))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.response, b.response)
    assert not np.array_equal(a.response, c.response)


def test_generate_features_uniform_unit_interval():
    data = generate(SyntheticSpec("linear_snr", 2000, beta=1.0, seed=1))
    assert data.features.min() >= 0 and data.features.max() < 1


def test_generate_invalid():
    with pytest.raises(ValueError):
        generate(SyntheticSpec("banana", 10))
    with pytest.raises(ValueError):
        generate(SyntheticSpec("sine", 1))
    with pytest.raises(ValueError):
        generate(SyntheticSpec("sine", 10, sigma2=0.0))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([f for f in FAMILIES if f not in ("linear_snr", "elbow_snr")]),
       st.integers(2, 400), st.integers(0, 2**63 - 1))
def test_normalization_property(family, n, seed):
    y = generate(SyntheticSpec(family, n, seed=seed)).response
    assert abs(y.mean()) < 1e-12
    assert abs(y.var() - 1.0) < 1e-12


def test_bootstrap_single_point():
    idx, oob = bootstrap_sample(1, seed=0)
    assert idx.tolist() == [0]
    assert oob.tolist() == [False]


def test_bootstrap_oob_fraction():
    idx, oob = bootstrap_sample(10000, seed=4)
    assert idx.shape == (10000,)
    assert abs(oob.mean() - (1 - 1 / 10000) ** 10000) < 0.03


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**32))
def test_bootstrap_partition_and_determinism(n, seed):
    idx, oob = bootstrap_sample(n, seed)
    idx2, oob2 = bootstrap_sample(n, seed)
    np.testing.assert_array_equal(idx, idx2)
    np.testing.assert_array_equal(oob, oob2)
    in_bag = set(idx.tolist())
    assert in_bag | set(np.flatnonzero(oob).tolist()) == set(range(n))
    assert in_bag.isdisjoint(np.flatnonzero(oob).tolist())


def test_kfold_loo():
    plan = kfold(6, 6, seed=0)
    assert sorted(np.bincount(plan.assignments, minlength=6).tolist()) == [1] * 6


def test_kfold_unbalanced():
    plan = kfold(7, 6, seed=0)
    assert sorted(np.bincount(plan.assignments, minlength=6).tolist()) == [1, 1, 1, 1, 1, 2]


def test_kfold_errors():
    with pytest.raises(ValueError):
        kfold(3, 5, seed=0)
    with pytest.raises(ValueError):
        kfold(3, 1, seed=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.data())
def test_kfold_balance_property(n, data):
    k = data.draw(st.integers(2, n))
    plan = kfold(n, k, seed=data.draw(st.integers(0, 1000)))
    sizes = np.bincount(plan.assignments, minlength=k)
    assert sizes.min() >= 1 and sizes.max() - sizes.min() <= 1
    for f in range(k):
        test, train = plan.test_index(f), plan.train_index(f)
        assert sorted(np.concatenate([test, train]).tolist()) == list(range(n))
