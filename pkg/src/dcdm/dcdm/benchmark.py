"""
Checks and timings of the sparse shot attention against its dense references.
"""
import csv
import logging
import time
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from .attention import (
    PairCounter,
    ShotLayout,
    SummaryPolicy,
    build_pattern_mask,
    count_attention_pairs,
    dense_attention,
    masked_dense_oracle,
    sparse_shot_attention,
)
from .errors import InternalError
from .tensor import RngStream


logger = logging.getLogger(__name__)


BENCH_COLUMNS = (
    "N_s", "L_shot", "S", "sparse_pairs", "dense_pairs", "ratio", "wall_ms_sparse", "wall_ms_dense",
)


@dataclass(frozen=True)
class OracleReport:

    trials: int
    max_delta: float
    max_dense_delta: float
    counter_mismatches: int


def random_instance(rng):
    """
    A random (layout, policy, q, k, v) with 1..6 shots of 4..32 tokens,
    S in 0..tokens_per_frame and head dim in {4, 8, 16}.
    """
    tpf = int(rng.choice([1, 2, 4]))
    shots = int(rng.integers(1, 7))
    frames = rng.integers(-(-4 // tpf), 32 // tpf + 1, size=shots)
    layout = ShotLayout.from_frames([int(f) for f in frames], tpf)
    policy = SummaryPolicy(int(rng.integers(0, tpf + 1)))
    d = int(rng.choice([4, 8, 16]))
    q, k, v = (rng.standard_normal((layout.total, d)).astype(np.float32) for _ in range(3))
    return layout, policy, q, k, v


def run_oracle_suite(trials, seed, progress=False):
    """
    Compare the sparse attention with the masked dense oracle on `trials`
    random instances, and single-shot layouts with plain dense attention.
    The instrumented pair count is checked against the closed form.
    """
    rng = RngStream(seed, "attn_check").generator()
    max_delta = max_dense = 0.0
    mismatches = 0
    for _ in tqdm(range(trials), desc="oracle check", disable=not progress):
        layout, policy, q, k, v = random_instance(rng)
        counter = PairCounter()
        out = sparse_shot_attention(q, k, v, layout, policy, counter)
        ref = masked_dense_oracle(q, k, v, build_pattern_mask(layout, policy))
        max_delta = max(max_delta, float(np.max(np.abs(out - ref))))
        if counter.pairs != count_attention_pairs(layout, policy).sparse_pairs:
            mismatches += 1

        single = ShotLayout((layout.total,), layout.tokens_per_frame)
        out = sparse_shot_attention(q, k, v, single, policy)
        max_dense = max(max_dense, float(np.max(np.abs(out - dense_attention(q, k, v)))))
    return OracleReport(trials, max_delta, max_dense, mismatches)


def _wall_ms(fn, repeats):
    fn()
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) * 1000 / repeats


def bench_rows(shot_counts, shot_lengths, summaries, tokens_per_frame, dim=16, repeats=3, seed=0):
    """
    One row per (N_s, L_shot, S) combination, with closed-form pair counts
    checked against the instrumented counter and wall-clock timings.
    """
    rows = []
    for Ns in shot_counts:
        for L in shot_lengths:
            for S in summaries:
                layout = ShotLayout((L,) * Ns, tokens_per_frame)
                policy = SummaryPolicy(S)
                cost = count_attention_pairs(layout, policy)
                rng = RngStream(seed, "attn_bench", Ns * 1000003 + L * 1009 + S).generator()
                q, k, v = (rng.standard_normal((layout.total, dim)).astype(np.float32) for _ in range(3))
                counter = PairCounter()
                sparse_shot_attention(q, k, v, layout, policy, counter)
                if counter.pairs != cost.sparse_pairs:
                    raise InternalError(
                        "pair counter {} != closed form {} for {}".format(
                            counter.pairs, cost.sparse_pairs, layout
                        )
                    )
                mask = build_pattern_mask(layout, policy)
                rows.append({
                    "N_s": Ns,
                    "L_shot": L,
                    "S": S,
                    "sparse_pairs": cost.sparse_pairs,
                    "dense_pairs": cost.dense_pairs,
                    "ratio": "{:.6f}".format(cost.ratio),
                    "wall_ms_sparse": "{:.3f}".format(
                        _wall_ms(lambda: sparse_shot_attention(q, k, v, layout, policy), repeats)
                    ),
                    "wall_ms_dense": "{:.3f}".format(
                        _wall_ms(lambda: masked_dense_oracle(q, k, v, mask), repeats)
                    ),
                })
                logger.debug("bench row %s", rows[-1])
    return rows


def write_csv(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def plot_ratios(rows, path):
    """Plot the sparse/dense pair ratio against the shot count, one line per S.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for S in sorted({r["S"] for r in rows}):
        pts = sorted((r["N_s"], float(r["ratio"])) for r in rows if r["S"] == S)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label="S = {}".format(S))
    ax.set_xlabel("shots")
    ax.set_ylabel("sparse / dense pairs")
    ax.legend()
    fig.savefig(path, dpi=100)
    plt.close(fig)
