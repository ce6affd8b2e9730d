import numpy as np
import pytest

from dcdm.attention import (
    PairCounter,
    ShotLayout,
    SummaryPolicy,
    build_global_cache,
    build_pattern_mask,
    count_attention_pairs,
    dense_attention,
    masked_dense_oracle,
    select_summary,
    shot_key_indices,
    sparse_shot_attention,
    windowed_cross_attention,
)
from dcdm.benchmark import bench_rows, random_instance, run_oracle_suite
from dcdm.errors import InternalError, LayoutError, MaskError, PolicyError, ShapeError


def _qkv(rng, n, d=8, heads=None):
    shape = (n, d) if heads is None else (heads, n, d)
    return tuple(rng.standard_normal(shape).astype(np.float32) for _ in range(3))


def test_layout_validation():
    layout = ShotLayout.from_frames([2, 1, 3], 4)
    assert layout.total == 24 and layout.num_shots == 3 and layout.frames == 6
    assert layout.ranges() == [(0, 8), (8, 12), (12, 24)]
    assert layout.frame_ranges() == [(0, 2), (2, 3), (3, 6)]
    assert ShotLayout.even(5, 2, 1).shot_lengths == (3, 2)
    for bad in [((), 4), ((3,), 4), ((8, 6), 4), ((4,), 0)]:
        with pytest.raises(LayoutError):
            ShotLayout(*bad)
    with pytest.raises(LayoutError):
        ShotLayout.even(2, 3, 1)


def test_select_summary():
    layout = ShotLayout((10, 6), 2)
    sets = select_summary(layout, SummaryPolicy(2))
    assert [list(s) for s in sets] == [[0, 1], [10, 11]]
    assert all(s.size == 0 for s in select_summary(layout, SummaryPolicy(0)))
    assert [len(s) for s in select_summary(layout, SummaryPolicy())] == [2, 2]
    with pytest.raises(PolicyError):
        select_summary(layout, SummaryPolicy(3))
    with pytest.raises(PolicyError):
        select_summary(layout, SummaryPolicy(-1))


def test_global_cache(rng):
    layout = ShotLayout((4, 4, 4), 2)
    q, k, v = _qkv(rng, 12)
    cache = build_global_cache(k, v, select_summary(layout, SummaryPolicy(1)))
    assert cache.rows == 3
    assert np.array_equal(cache.k, k[[0, 4, 8]])
    gk, gv = cache.view_excluding(1)
    assert np.array_equal(gk, k[[0, 8]]) and np.array_equal(gv, v[[0, 8]])
    assert list(cache.indices_excluding(1)) == [0, 8]

    single = build_global_cache(k, v, select_summary(ShotLayout((12,), 2), SummaryPolicy(2)))
    assert single.view_excluding(0)[0].shape == (0, 8)

    with pytest.raises(InternalError):
        build_global_cache(k, v, [np.array([12])])


def test_shot_keys_have_no_duplicates():
    layout = ShotLayout((8, 4, 12), 4)
    keys = shot_key_indices(layout, SummaryPolicy(3))
    for idx in keys:
        assert len(set(idx.tolist())) == len(idx)
    assert list(keys[1]) == [0, 1, 2, 12, 13, 14, 8, 9, 10, 11]


def test_single_shot_is_dense_attention(rng):
    q, k, v = _qkv(rng, 16)
    out = sparse_shot_attention(q, k, v, ShotLayout((16,), 4), SummaryPolicy(2))
    assert out.dtype == np.float32
    assert np.max(np.abs(out - dense_attention(q, k, v))) <= 1e-6


def test_three_shot_example_matches_the_oracle(rng):
    layout = ShotLayout((8, 8, 8), 4)
    policy = SummaryPolicy(2)
    q, k, v = _qkv(rng, 24)
    out = sparse_shot_attention(q, k, v, layout, policy)
    ref = masked_dense_oracle(q, k, v, build_pattern_mask(layout, policy))
    assert np.max(np.abs(out - ref)) <= 1e-5


def test_oracle_equivalence_on_random_instances(rng):
    for _ in range(200):
        layout, policy, q, k, v = random_instance(rng)
        out = sparse_shot_attention(q, k, v, layout, policy)
        ref = masked_dense_oracle(q, k, v, build_pattern_mask(layout, policy))
        assert np.max(np.abs(out - ref)) <= 1e-5


def test_oracle_suite_report():
    report = run_oracle_suite(50, seed=1)
    assert report.trials == 50
    assert report.max_delta <= 1e-5 and report.max_dense_delta <= 1e-6
    assert report.counter_mismatches == 0


def test_multi_head_matches_per_head(rng):
    layout = ShotLayout((4, 8), 4)
    policy = SummaryPolicy(2)
    q, k, v = _qkv(rng, 12, heads=3)
    out = sparse_shot_attention(q, k, v, layout, policy)
    for h in range(3):
        assert np.array_equal(out[h], sparse_shot_attention(q[h], k[h], v[h], layout, policy))


def test_identical_values_are_reproduced_exactly(rng):
    layout = ShotLayout((8, 4, 8), 4)
    q, k, _ = _qkv(rng, 20)
    v = np.tile(np.array([0.5, -2.0, 1.0, 0.25], dtype=np.float32), (20, 1))
    out = sparse_shot_attention(q, k, v, layout, SummaryPolicy(2))
    assert np.array_equal(out, v)


def test_rows_stay_in_the_convex_hull(rng):
    layout = ShotLayout((6, 6, 6), 3)
    policy = SummaryPolicy(1)
    q, k, _ = _qkv(rng, 18)
    v = np.eye(18, dtype=np.float32)
    out = sparse_shot_attention(q, k, v, layout, policy)
    mask = build_pattern_mask(layout, policy)
    assert np.all(out >= 0) and np.allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(out[~mask] == 0)


def test_pattern_mask():
    assert build_pattern_mask(ShotLayout((8,), 4), SummaryPolicy(2)).all()
    mask = build_pattern_mask(ShotLayout((4, 4), 2), SummaryPolicy(0))
    assert np.array_equal(mask, np.kron(np.eye(2, dtype=bool), np.ones((4, 4), dtype=bool)))
    mask = build_pattern_mask(ShotLayout((4, 4), 4), SummaryPolicy(1))
    assert list(np.flatnonzero(mask[0])) == [0, 1, 2, 3, 4]
    assert list(np.flatnonzero(mask[5])) == [0, 4, 5, 6, 7]


def test_oracle_edge_cases(rng):
    q, k, v = _qkv(rng, 16)
    assert np.max(np.abs(masked_dense_oracle(q, k, v, np.ones((16, 16), bool)) - dense_attention(q, k, v))) <= 1e-6

    perm = rng.permutation(16)
    one = np.zeros((16, 16), dtype=bool)
    one[np.arange(16), perm] = True
    assert np.array_equal(masked_dense_oracle(q, k, v, one), v[perm])

    with pytest.raises(MaskError):
        masked_dense_oracle(q, k, v, np.zeros((16, 16), dtype=bool))
    with pytest.raises(ShapeError):
        masked_dense_oracle(q, k, v, np.ones((8, 8), dtype=bool))


def test_oracle_against_a_row_loop(rng):
    q, k, v = _qkv(rng, 16, d=4)
    mask = rng.random((16, 16)) < 0.4
    mask[np.arange(16), np.arange(16)] = True
    out = masked_dense_oracle(q, k, v, mask)
    q, k, v = q.astype(np.float64), k.astype(np.float64), v.astype(np.float64)
    for i in range(16):
        cols = np.flatnonzero(mask[i])
        logits = k[cols] @ q[i] / 2.0
        w = np.exp(logits - logits.max())
        w /= w.sum()
        assert np.max(np.abs(out[i] - w @ v[cols])) <= 1e-6


def test_shape_errors(rng):
    q, k, v = _qkv(rng, 12)
    with pytest.raises(ShapeError):
        sparse_shot_attention(q, k, v, ShotLayout((8,), 4), SummaryPolicy(1))
    with pytest.raises(ShapeError):
        sparse_shot_attention(q, k[:, :4], v, ShotLayout((12,), 4), SummaryPolicy(1))


def test_windowed_cross_attention_isolates_shots(rng):
    layout = ShotLayout((4, 8, 4), 4)
    q = rng.standard_normal((16, 8)).astype(np.float32)
    keys = [rng.standard_normal((3, 8)) for _ in range(3)]
    values = [rng.standard_normal((3, 5)) for _ in range(3)]
    out = windowed_cross_attention(q, keys, values, layout)
    assert out.shape == (16, 5)

    keys2 = list(keys)
    values2 = list(values)
    keys2[2] = rng.standard_normal((7, 8))
    values2[2] = rng.standard_normal((7, 5))
    out2 = windowed_cross_attention(q, keys2, values2, layout)
    assert np.array_equal(out[:12], out2[:12])
    assert not np.array_equal(out[12:], out2[12:])


def test_windowed_cross_attention_single_token(rng):
    layout = ShotLayout((4, 4), 2)
    q = rng.standard_normal((8, 6)).astype(np.float32)
    values = [np.full((1, 3), 1.5), np.full((1, 3), -0.5)]
    keys = [rng.standard_normal((1, 6)) for _ in range(2)]
    out = windowed_cross_attention(q, keys, values, layout)
    assert np.all(out[:4] == np.float32(1.5)) and np.all(out[4:] == np.float32(-0.5))


def test_windowed_cross_attention_single_shot(rng):
    layout = ShotLayout((8,), 4)
    q = rng.standard_normal((8, 4))
    k = rng.standard_normal((5, 4))
    v = rng.standard_normal((5, 3))
    out = windowed_cross_attention(q, k, v, layout)
    logits = q @ k.T / 2.0
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    assert np.allclose(out, w @ v, atol=1e-6)


def test_windowed_cross_attention_needs_one_text_per_shot(rng):
    layout = ShotLayout((4, 4), 2)
    q = rng.standard_normal((8, 4))
    with pytest.raises(LayoutError):
        windowed_cross_attention(q, [np.ones((1, 4))] * 3, [np.ones((1, 4))] * 3, layout)


@pytest.mark.parametrize(
    "lengths, tpf, S, dense, sparse",
    [
        ((16,) * 4, 8, 2, 4096, 1408),
        ((64,) * 8, 64, 4, 512 ** 2, 8 * 64 * (64 + 28)),
        ((12, 20), 4, 0, 32 ** 2, 12 ** 2 + 20 ** 2),
        ((24,), 4, 4, 576, 576),
    ],
)
def test_pair_counts(rng, lengths, tpf, S, dense, sparse):
    layout = ShotLayout(lengths, tpf)
    policy = SummaryPolicy(S)
    cost = count_attention_pairs(layout, policy)
    assert (cost.dense_pairs, cost.sparse_pairs) == (dense, sparse)
    q, k, v = _qkv(rng, layout.total, d=4)
    counter = PairCounter()
    sparse_shot_attention(q, k, v, layout, policy, counter)
    assert counter.pairs == sparse


def test_cost_is_monotone():
    base = [count_attention_pairs(ShotLayout((8, 8, 8), 4), SummaryPolicy(S)).sparse_pairs for S in range(5)]
    assert base == sorted(base)
    longer = [count_attention_pairs(ShotLayout((8, l, 8), 4), SummaryPolicy(2)).sparse_pairs for l in (4, 8, 12, 16)]
    assert longer == sorted(longer)


def test_bench_rows():
    rows = bench_rows([1, 2], [8], [0, 2], tokens_per_frame=4, dim=4, repeats=1)
    assert len(rows) == 4
    row = next(r for r in rows if r["N_s"] == 2 and r["S"] == 2)
    assert row["sparse_pairs"] == 2 * 8 * (8 + 2) and row["dense_pairs"] == 256
    assert row["ratio"] == "{:.6f}".format(160 / 256)
