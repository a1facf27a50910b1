import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from incctr.embedding import EmbeddingTable, InitConfig, cold_start, field_embed, warm_start
from incctr.errors import DimensionError, IdLookupError, ShrinkError


def test_warm_start_inherits_and_draws():
    cfg = InitConfig(k=4, seed=3)
    prev = cold_start(10, cfg)
    out = warm_start(prev, 13, InitConfig(k=4, seed=9))
    assert np.array_equal(out.rows[:10], prev.rows)
    assert out.new_ids == {10, 11, 12}
    assert np.all(np.abs(out.rows[10:]) <= cfg.scale)
    assert not np.array_equal(out.rows[10], out.rows[11])


def test_warm_start_without_new_features_is_identity():
    prev = cold_start(6, InitConfig(k=3, seed=1))
    out = warm_start(prev, 6, InitConfig(k=3, seed=2))
    assert np.array_equal(out.rows, prev.rows)
    assert out.new_ids == set()
    assert out.rows is not prev.rows


def test_warm_start_is_seeded():
    prev = cold_start(4, InitConfig(k=2, seed=0))
    a = warm_start(prev, 9, InitConfig(k=2, seed=5))
    b = warm_start(prev, 9, InitConfig(k=2, seed=5))
    assert np.array_equal(a.rows, b.rows)


def test_warm_start_errors():
    prev = cold_start(5, InitConfig(k=2))
    with pytest.raises(DimensionError):
        warm_start(prev, 6, InitConfig(k=3))
    with pytest.raises(ShrinkError):
        warm_start(prev, 4, InitConfig(k=2))


def test_partition_of_ids():
    prev = cold_start(5, InitConfig(k=2))
    out = warm_start(prev, 8, InitConfig(k=2, seed=1))
    inherited = set(range(prev.size))
    assert out.new_ids.isdisjoint(inherited)
    assert out.new_ids | inherited == set(range(out.size))


def test_cold_start_range_and_reproducibility():
    cfg = InitConfig(k=5, random_scale=0.3, seed=42)
    t = cold_start(20, cfg)
    assert t.rows.shape == (20, 5)
    assert np.all(np.abs(t.rows) <= 0.3)
    assert t.new_ids == set(range(20))
    assert np.array_equal(t.rows, cold_start(20, cfg).rows)


def test_cold_start_mean_is_near_zero():
    cfg = InitConfig(k=16, seed=7)
    t = cold_start(1000, cfg)
    n = t.rows.size
    sigma = cfg.scale / np.sqrt(3.0)
    assert abs(t.rows.mean()) < 3 * sigma / np.sqrt(n)


def test_field_embed():
    rows = np.arange(12, dtype=float).reshape(6, 2)
    rows[4] = -rows[3]
    t = EmbeddingTable(rows, np.zeros(6, dtype=bool))
    out = field_embed(t, [{2}, {3, 4}], 2)
    assert np.array_equal(out[0], rows[2])
    assert np.array_equal(out[1], np.zeros(2))


def test_field_embed_mean_matches_elementwise_average(rng):
    rows = rng.normal(size=(10, 3))
    t = EmbeddingTable(rows, np.zeros(10, dtype=bool))
    ids = [1, 5, 7]
    out = field_embed(t, [ids], 1)
    for j in range(3):
        assert out[0, j] == pytest.approx((rows[1, j] + rows[5, j] + rows[7, j]) / 3, abs=1e-15)


def test_field_embed_out_of_range():
    t = cold_start(3, InitConfig(k=2))
    with pytest.raises(IdLookupError):
        field_embed(t, [{3}], 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 40), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_warm_start_property(n_prev, n_extra, k, seed):
    prev = cold_start(n_prev, InitConfig(k=k, seed=seed))
    cfg = InitConfig(k=k, seed=seed + 1)
    out = warm_start(prev, n_prev + n_extra, cfg)
    assert out.rows.shape == (n_prev + n_extra, k)
    assert np.array_equal(out.rows[:n_prev], prev.rows)
    assert out.new_ids == set(range(n_prev, n_prev + n_extra))
    assert np.all(np.abs(out.rows[n_prev:]) <= cfg.scale)
