"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Sparse inter-shot attention and its references
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

A token sequence of length N is split into N_s contiguous shots. Inside a
shot attention is dense. Across shots information only flows through a small
global cache: every shot exposes the keys/values of its first S tokens
(taken from its first frame), and the queries of shot i attend to

    [global cache without shot i's own rows, K_i], [..., V_i].

Shot i's own summary rows are left out of its global view because they
already appear in K_i.

The masked dense oracle computes the same thing with an explicit N x N mask,
excluding masked logits from the softmax instead of adding a large negative
constant. Both run in float64 and cast back to the input dtype.

Arrays are (N, d) for one head or (h, N, d) for h heads, the attention
pattern is the same for every head.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import InternalError, LayoutError, MaskError, PolicyError, ShapeError


@dataclass(frozen=True)
class ShotLayout:

    shot_lengths: tuple
    tokens_per_frame: int

    def __post_init__(self):
        lengths = tuple(int(x) for x in self.shot_lengths)
        object.__setattr__(self, "shot_lengths", lengths)
        if self.tokens_per_frame < 1:
            raise LayoutError("tokens_per_frame must be >= 1")
        if not lengths:
            raise LayoutError("a layout needs at least one shot")
        for i, l in enumerate(lengths):
            if l < self.tokens_per_frame or l % self.tokens_per_frame:
                raise LayoutError(
                    "shot {} has {} tokens, not a positive multiple of {}".format(
                        i, l, self.tokens_per_frame
                    )
                )

    @classmethod
    def from_frames(cls, frames_per_shot, tokens_per_frame):
        """A layout whose shots are runs of whole frames.
        """
        return cls(tuple(f * tokens_per_frame for f in frames_per_shot), tokens_per_frame)

    @classmethod
    def even(cls, frames, shots, tokens_per_frame):
        """Split `frames` frames into `shots` runs, the earlier ones one frame
        longer when the split is not even.
        """
        if not 1 <= shots <= frames:
            raise LayoutError("cannot split {} frames into {} shots".format(frames, shots))
        q, r = divmod(frames, shots)
        return cls.from_frames([q + (i < r) for i in range(shots)], tokens_per_frame)

    @property
    def num_shots(self):
        return len(self.shot_lengths)

    @property
    def total(self):
        return sum(self.shot_lengths)

    @property
    def frames(self):
        return self.total // self.tokens_per_frame

    def ranges(self):
        """Return the [start, stop) token range of every shot."""
        stops = np.cumsum(self.shot_lengths)
        return [(int(b - l), int(b)) for b, l in zip(stops, self.shot_lengths)]

    def frame_ranges(self):
        return [(a // self.tokens_per_frame, b // self.tokens_per_frame) for a, b in self.ranges()]


@dataclass(frozen=True)
class SummaryPolicy:

    """`tokens` summary tokens per shot, None means the whole first frame."""

    tokens: int = None

    def resolve(self, layout):
        S = layout.tokens_per_frame if self.tokens is None else int(self.tokens)
        if S < 0:
            raise PolicyError("summary size must be >= 0, got {}".format(S))
        if S > layout.tokens_per_frame:
            raise PolicyError(
                "summary size {} exceeds tokens_per_frame {}".format(S, layout.tokens_per_frame)
            )
        return S


@dataclass(frozen=True)
class AttentionCost:

    sparse_pairs: int
    dense_pairs: int

    @property
    def ratio(self):
        return self.sparse_pairs / self.dense_pairs


class PairCounter:

    """Counts the (query, key) pairs actually scored, once per head group."""

    def __init__(self):
        self.pairs = 0

    def add(self, queries, keys):
        self.pairs += int(queries) * int(keys)


class GlobalCache:

    """
    The concatenated summary rows of all shots, in ascending shot order.
    `spans[j]` is the row range of shot j inside the cache.
    """

    def __init__(self, k, v, indices, spans):
        self.k = k
        self.v = v
        self.indices = indices
        self.spans = spans

    @property
    def rows(self):
        return self.k.shape[-2]

    def _keep(self, i):
        a, b = self.spans[i]
        return np.r_[0:a, b : self.rows]

    def view_excluding(self, i):
        """Return (k, v) of the cache with shot i's own rows left out.
        """
        keep = self._keep(i)
        return self.k[..., keep, :], self.v[..., keep, :]

    def indices_excluding(self, i):
        """The global token indices of `view_excluding(i)`, in row order."""
        return self.indices[self._keep(i)]


def select_summary(layout, policy):
    """Return one index array per shot: the first S token indices of the shot.
    """
    S = policy.resolve(layout)
    return [np.arange(a, a + S) for a, _ in layout.ranges()]


def build_global_cache(k, v, summaries):
    """
    Gather the summary rows of `k` and `v` (shape (..., N, d)) in ascending
    shot order.
    """
    n = k.shape[-2]
    for idx in summaries:
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InternalError("summary index out of range for {} tokens".format(n))
    indices = np.concatenate(summaries).astype(np.int64) if summaries else np.zeros(0, np.int64)
    stops = np.cumsum([len(s) for s in summaries])
    spans = [(int(b - len(s)), int(b)) for b, s in zip(stops, summaries)]
    return GlobalCache(k[..., indices, :], v[..., indices, :], indices, spans)


def shot_key_indices(layout, policy):
    """
    For every shot, the global key indices its queries attend to, in the
    order the sparse pattern uses: foreign summary tokens then local tokens.
    No index repeats within a shot.
    """
    summaries = select_summary(layout, policy)
    indices = np.concatenate(summaries).astype(np.int64)
    stops = np.cumsum([len(s) for s in summaries])
    out = []
    for i, (a, b) in enumerate(layout.ranges()):
        lo, hi = stops[i] - len(summaries[i]), stops[i]
        foreign = np.concatenate([indices[:lo], indices[hi:]])
        out.append(np.concatenate([foreign, np.arange(a, b)]))
    return out


def softmax_attend(q, k, v, scale):
    """
    Scaled dot-product attention of one block, returning (out, weights).
    Shapes (..., n, d), (..., m, d), (..., m, e).
    """
    w = softmax((q @ np.swapaxes(k, -1, -2)) * scale, axis=-1)
    return w @ v, w


def softmax_attend_backward(dout, q, k, v, w, scale):
    """Gradients (dq, dk, dv) of `softmax_attend` given the saved weights `w`.
    """
    dv = np.swapaxes(w, -1, -2) @ dout
    dw = dout @ np.swapaxes(v, -1, -2)
    ds = w * (dw - np.sum(dw * w, axis=-1, keepdims=True))
    dq = (ds @ k) * scale
    dk = (np.swapaxes(ds, -1, -2) @ q) * scale
    return dq, dk, dv


def _check_qkv(q, k, v):
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    if q.ndim not in (2, 3) or k.ndim != q.ndim or v.ndim != q.ndim:
        raise ShapeError("q, k, v must all be (N, d) or (h, N, d)")
    if k.shape != q.shape or v.shape[:-1] != q.shape[:-1]:
        raise ShapeError(
            "mismatched shapes q {}, k {}, v {}".format(q.shape, k.shape, v.shape)
        )
    return q, k, v


def dense_attention(q, k, v):
    """Plain dense softmax attention over the whole sequence.
    """
    q, k, v = _check_qkv(q, k, v)
    out, _ = softmax_attend(
        q.astype(np.float64), k.astype(np.float64), v.astype(np.float64), 1.0 / np.sqrt(q.shape[-1])
    )
    return out.astype(np.result_type(q, np.float32))


def sparse_shot_attention(q, k, v, layout, policy, counter=None):
    """
    Sparse shot attention: each shot attends densely to itself and to the
    summary rows of all other shots.

    :param q, k, v: (N, d) or (h, N, d) arrays.
    :param layout: a `ShotLayout` with layout.total == N.
    :param policy: a `SummaryPolicy`.
    :param counter: optional `PairCounter` that receives every scored pair.
    """
    q, k, v = _check_qkv(q, k, v)
    if q.shape[-2] != layout.total:
        raise ShapeError(
            "{} tokens but the layout covers {}".format(q.shape[-2], layout.total)
        )
    dtype = np.result_type(q, np.float32)
    q64, k64, v64 = q.astype(np.float64), k.astype(np.float64), v.astype(np.float64)
    scale = 1.0 / np.sqrt(q.shape[-1])

    cache = build_global_cache(k64, v64, select_summary(layout, policy))
    out = np.empty(v64.shape[:-2] + (q.shape[-2], v.shape[-1]))
    for i, (a, b) in enumerate(layout.ranges()):
        gk, gv = cache.view_excluding(i)
        keys = np.concatenate([gk, k64[..., a:b, :]], axis=-2)
        values = np.concatenate([gv, v64[..., a:b, :]], axis=-2)
        out[..., a:b, :], _ = softmax_attend(q64[..., a:b, :], keys, values, scale)
        if counter is not None:
            counter.add(b - a, keys.shape[-2])
    return out.astype(dtype)


def build_pattern_mask(layout, policy):
    """
    The N x N boolean mask of the sparse pattern: query q may attend to key
    k iff k lies in q's shot or k is a summary token of another shot.
    """
    N = layout.total
    mask = np.zeros((N, N), dtype=bool)
    summaries = select_summary(layout, policy)
    for i, (a, b) in enumerate(layout.ranges()):
        mask[a:b, a:b] = True
        for j, idx in enumerate(summaries):
            if j != i:
                mask[a:b, idx] = True
    return mask


def masked_dense_oracle(q, k, v, mask):
    """
    Dense attention restricted to the permitted columns of `mask`. The
    softmax is taken over the permitted logits only.
    """
    q, k, v = _check_qkv(q, k, v)
    mask = np.asarray(mask, dtype=bool)
    N = q.shape[-2]
    if mask.shape != (N, N):
        raise ShapeError("mask is {} but there are {} tokens".format(mask.shape, N))
    empty = ~mask.any(axis=1)
    if empty.any():
        raise MaskError("mask row {} permits no key".format(int(np.flatnonzero(empty)[0])))

    q64, k64, v64 = q.astype(np.float64), k.astype(np.float64), v.astype(np.float64)
    logits = (q64 @ np.swapaxes(k64, -1, -2)) / np.sqrt(q.shape[-1])
    top = np.max(logits, axis=-1, keepdims=True, where=mask, initial=-np.inf)
    w = np.where(mask, np.exp(np.where(mask, logits - top, 0.0)), 0.0)
    w /= w.sum(axis=-1, keepdims=True)
    return (w @ v64).astype(np.result_type(q, np.float32))


def shot_text_tokens(text, layout):
    """
    Normalize the text conditioning into one (M_i, e) or (h, M_i, e) array
    per shot. A single array is shared by all shots.
    """
    if isinstance(text, np.ndarray):
        text = [text] * layout.num_shots
    text = list(text)
    if len(text) != layout.num_shots:
        raise LayoutError(
            "{} text sequences for {} shots".format(len(text), layout.num_shots)
        )
    out = []
    for t in text:
        t = np.asarray(t)
        out.append(t[None, :] if t.ndim == 1 else t)
    return out


def windowed_cross_attention(q, keys, values, layout):
    """
    Cross-attention where the tokens of shot i only see shot i's text tokens.

    :param q: (N, d) or (h, N, d) queries.
    :param keys, values: sequences with one (M_i, d) / (h, M_i, d) array per shot.
    """
    q = np.asarray(q)
    if q.shape[-2] != layout.total:
        raise ShapeError("{} tokens but the layout covers {}".format(q.shape[-2], layout.total))
    keys = shot_text_tokens(keys, layout)
    values = shot_text_tokens(values, layout)
    dtype = np.result_type(q, np.float32)
    scale = 1.0 / np.sqrt(q.shape[-1])

    out = None
    for (a, b), kt, vt in zip(layout.ranges(), keys, values):
        if kt.shape[-1] != q.shape[-1] or kt.shape[:-1] != vt.shape[:-1]:
            raise ShapeError("text keys {} and values {} do not fit queries {}".format(
                kt.shape, vt.shape, q.shape))
        o, _ = softmax_attend(q[..., a:b, :].astype(np.float64), kt.astype(np.float64), vt.astype(np.float64), scale)
        if out is None:
            out = np.empty(o.shape[:-2] + (q.shape[-2], o.shape[-1]))
        out[..., a:b, :] = o
    return out.astype(dtype)


def count_attention_pairs(layout, policy):
    """Closed-form pair counts: dense N^2, sparse sum_i l_i (l_i + (N_s - 1) S).
    """
    S = policy.resolve(layout)
    N, Ns = layout.total, layout.num_shots
    sparse = sum(l * (l + (Ns - 1) * S) for l in layout.shot_lengths)
    return AttentionCost(sparse_pairs=sparse, dense_pairs=N * N)
