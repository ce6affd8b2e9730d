"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
A tiny shot-aware transformer noise predictor
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Every latent pixel of every frame is one token, its C channels are the
token features. The network is

    h = x W_in + b_in + (sinusoid(t) W_time + b_time)
    repeat `blocks` times:
        h += SelfAttn(LN(h))      sparse shot attention, see attention.py
        h += CrossAttn(LN(h))     windowed, shot i only sees its own text
        h += MLP(LN(h))           SiLU, one hidden layer
    eps_hat = LN(h) W_out + b_out

The backward pass is written out by hand; `training_loss` returns the mean
squared error together with the gradient of every parameter.
"""
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import expit

from . import utils
from .attention import (
    ShotLayout,
    SummaryPolicy,
    shot_key_indices,
    shot_text_tokens,
    softmax_attend,
    softmax_attend_backward,
)
from .diffusion import forward_noise
from .errors import ConfigError, NumericError, ShapeError
from .tensor import LatentGrid, RngStream


logger = logging.getLogger(__name__)


LN_EPS = 1e-5
INIT_STD = 0.02


@dataclass(frozen=True)
class DenoiserConfig:

    channels: int = 4
    width: int = 32
    heads: int = 2
    text_dim: int = 64
    time_dim: int = 32
    mlp_hidden: int = 64
    blocks: int = 2
    summary_tokens: int = None
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("channels", "width", "heads", "text_dim", "time_dim", "mlp_hidden", "blocks"):
            if getattr(self, name) < 1:
                raise ConfigError("{} must be >= 1".format(name))
        if self.width % self.heads:
            raise ConfigError("width {} is not divisible by {} heads".format(self.width, self.heads))
        if self.time_dim % 2:
            raise ConfigError("time_dim must be even")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError("unknown denoiser keys: {}".format(", ".join(sorted(unknown))))
        return cls(**data)

    def policy(self):
        return SummaryPolicy(self.summary_tokens)


def parameter_shapes(config):
    """The ordered list of (name, shape) of all parameters."""
    C, D, E = config.channels, config.width, config.text_dim
    shapes = [
        ("in.w", (C, D)),
        ("in.b", (D,)),
        ("time.w", (config.time_dim, D)),
        ("time.b", (D,)),
    ]
    for i in range(config.blocks):
        p = "blocks.{}.".format(i)
        shapes += [
            (p + "ln1.g", (D,)),
            (p + "ln1.b", (D,)),
            (p + "attn.wq", (D, D)),
            (p + "attn.wk", (D, D)),
            (p + "attn.wv", (D, D)),
            (p + "attn.wo", (D, D)),
            (p + "ln2.g", (D,)),
            (p + "ln2.b", (D,)),
            (p + "cross.wq", (D, D)),
            (p + "cross.wk", (E, D)),
            (p + "cross.wv", (E, D)),
            (p + "cross.wo", (D, D)),
            (p + "ln3.g", (D,)),
            (p + "ln3.b", (D,)),
            (p + "mlp.w1", (D, config.mlp_hidden)),
            (p + "mlp.b1", (config.mlp_hidden,)),
            (p + "mlp.w2", (config.mlp_hidden, D)),
            (p + "mlp.b2", (D,)),
        ]
    shapes += [
        ("out.ln.g", (D,)),
        ("out.ln.b", (D,)),
        ("out.w", (D, C)),
        ("out.b", (C,)),
    ]
    return shapes


class DenoiserParams:

    """Named weight arrays plus one gradient buffer per weight."""

    def __init__(self, config, weights):
        expected = parameter_shapes(config)
        if set(weights) != {name for name, _ in expected}:
            raise ConfigError("parameter names do not match the config")
        dtype = np.dtype(config.dtype)
        self.config = config
        self.weights = {}
        for name, shape in expected:
            w = np.array(weights[name], dtype=dtype)
            if w.shape != tuple(shape):
                raise ShapeError("{} has shape {}, expected {}".format(name, w.shape, shape))
            self.weights[name] = w
        self.grads = {name: np.zeros_like(w) for name, w in self.weights.items()}

    @classmethod
    def init(cls, config, seed, std=INIT_STD):
        """
        Draw every projection from N(0, std^2), biases zero, norm gains one.
        """
        rng = RngStream(seed, "params").generator()
        weights = {}
        for name, shape in parameter_shapes(config):
            if name.endswith(".g"):
                weights[name] = np.ones(shape)
            elif name.endswith(".b") or name.endswith(".b1") or name.endswith(".b2"):
                weights[name] = np.zeros(shape)
            else:
                weights[name] = std * rng.standard_normal(shape)
        return cls(config, weights)

    @classmethod
    def zeros(cls, config):
        return cls(config, {name: np.zeros(shape) for name, shape in parameter_shapes(config)})

    def names(self):
        return [name for name, _ in parameter_shapes(self.config)]

    def count(self):
        return sum(w.size for w in self.weights.values())

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def copy(self):
        return DenoiserParams(self.config, self.weights)

    def astype(self, dtype):
        config = DenoiserConfig.from_dict(dict(self.config.to_dict(), dtype=np.dtype(dtype).name))
        return DenoiserParams(config, self.weights)

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0

    def __eq__(self, other):
        if not isinstance(other, DenoiserParams):
            return NotImplemented
        return self.config == other.config and all(
            np.array_equal(self.weights[n], other.weights[n]) for n in self.names()
        )


@dataclass(frozen=True)
class TrainingExample:

    x0: LatentGrid
    t: int
    eps: LatentGrid
    c_text: object


def time_embedding(t, dim):
    """Sinusoidal embedding of a diffusion step, sin half then cos half."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = float(t) * freqs
    return np.concatenate([np.sin(args), np.cos(args)])


def text_tokens(c_text, layout, config):
    """Per-shot (M_i, text_dim) arrays from an embedding, an array or a per-shot list.
    """
    if hasattr(c_text, "vector"):
        c_text = c_text.vector
    elif isinstance(c_text, (list, tuple)):
        c_text = [getattr(c, "vector", c) for c in c_text]
    tokens = shot_text_tokens(c_text, layout)
    for tok in tokens:
        if tok.ndim != 2 or tok.shape[-1] != config.text_dim:
            raise ShapeError(
                "text tokens {} do not match text_dim {}".format(tok.shape, config.text_dim)
            )
    return tokens


def _split(x, heads):
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge(x):
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _layer_norm(x, g, b):
    xc = x - x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _layer_norm_backward(dy, cache):
    xhat, inv, g = cache
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


class _Context:

    """Everything one forward pass needs and keeps for the backward pass."""

    def __init__(self, params, layout, policy, text):
        self.w = params.weights
        self.config = params.config
        self.heads = params.config.heads
        self.scale = 1.0 / np.sqrt(params.config.width // params.config.heads)
        self.ranges = layout.ranges()
        self.key_index = shot_key_indices(layout, policy)
        self.text = [t.astype(params.dtype) for t in text]
        self.saved = []


def _self_attention(a, ctx, p):
    w = ctx.w
    q = _split(a @ w[p + "attn.wq"], ctx.heads)
    k = _split(a @ w[p + "attn.wk"], ctx.heads)
    v = _split(a @ w[p + "attn.wv"], ctx.heads)
    o = np.empty_like(q)
    probs = []
    for (s0, s1), idx in zip(ctx.ranges, ctx.key_index):
        o[:, s0:s1], pr = softmax_attend(q[:, s0:s1], k[:, idx], v[:, idx], ctx.scale)
        probs.append(pr)
    m = _merge(o)
    return m @ w[p + "attn.wo"], (a, q, k, v, m, probs)


def _self_attention_backward(dy, cache, ctx, p, grads):
    a, q, k, v, m, probs = cache
    w = ctx.w
    grads[p + "attn.wo"] += m.T @ dy
    do = _split(dy @ w[p + "attn.wo"].T, ctx.heads)
    dq, dk, dv = np.zeros_like(q), np.zeros_like(k), np.zeros_like(v)
    for (s0, s1), idx, pr in zip(ctx.ranges, ctx.key_index, probs):
        gq, gk, gv = softmax_attend_backward(
            do[:, s0:s1], q[:, s0:s1], k[:, idx], v[:, idx], pr, ctx.scale
        )
        dq[:, s0:s1] = gq
        # key indices never repeat within a shot
        dk[:, idx] += gk
        dv[:, idx] += gv
    da = np.zeros_like(a)
    for name, d in (("attn.wq", dq), ("attn.wk", dk), ("attn.wv", dv)):
        d = _merge(d)
        grads[p + name] += a.T @ d
        da += d @ w[p + name].T
    return da


def _cross_attention(a, ctx, p):
    w = ctx.w
    q = _split(a @ w[p + "cross.wq"], ctx.heads)
    o = np.empty_like(q)
    saved = []
    for (s0, s1), tok in zip(ctx.ranges, ctx.text):
        kt = _split(tok @ w[p + "cross.wk"], ctx.heads)
        vt = _split(tok @ w[p + "cross.wv"], ctx.heads)
        o[:, s0:s1], pr = softmax_attend(q[:, s0:s1], kt, vt, ctx.scale)
        saved.append((kt, vt, pr))
    m = _merge(o)
    return m @ w[p + "cross.wo"], (a, q, m, saved)


def _cross_attention_backward(dy, cache, ctx, p, grads):
    a, q, m, saved = cache
    w = ctx.w
    grads[p + "cross.wo"] += m.T @ dy
    do = _split(dy @ w[p + "cross.wo"].T, ctx.heads)
    dq = np.zeros_like(q)
    for (s0, s1), tok, (kt, vt, pr) in zip(ctx.ranges, ctx.text, saved):
        gq, gk, gv = softmax_attend_backward(do[:, s0:s1], q[:, s0:s1], kt, vt, pr, ctx.scale)
        dq[:, s0:s1] = gq
        grads[p + "cross.wk"] += tok.T @ _merge(gk)
        grads[p + "cross.wv"] += tok.T @ _merge(gv)
    dq = _merge(dq)
    grads[p + "cross.wq"] += a.T @ dq
    return dq @ w[p + "cross.wq"].T


def _mlp(a, ctx, p):
    w = ctx.w
    z = a @ w[p + "mlp.w1"] + w[p + "mlp.b1"]
    s = expit(z)
    u = z * s
    return u @ w[p + "mlp.w2"] + w[p + "mlp.b2"], (a, z, s, u)


def _mlp_backward(dy, cache, ctx, p, grads):
    a, z, s, u = cache
    w = ctx.w
    grads[p + "mlp.w2"] += u.T @ dy
    grads[p + "mlp.b2"] += dy.sum(axis=0)
    dz = (dy @ w[p + "mlp.w2"].T) * s * (1.0 + z * (1.0 - s))
    grads[p + "mlp.w1"] += a.T @ dz
    grads[p + "mlp.b1"] += dz.sum(axis=0)
    return dz @ w[p + "mlp.w1"].T


_SUBLAYERS = (
    ("ln1", _self_attention, _self_attention_backward),
    ("ln2", _cross_attention, _cross_attention_backward),
    ("ln3", _mlp, _mlp_backward),
)


def _forward(params, x, t, ctx):
    """
    Run the network on one (T, H, W, C) array, return the (N, C) prediction.
    Intermediate values are kept in `ctx.saved`.
    """
    w = ctx.w
    dtype = params.dtype
    tokens = np.asarray(x, dtype=dtype).reshape(-1, params.config.channels)
    temb = time_embedding(t, params.config.time_dim).astype(dtype)

    h = tokens @ w["in.w"] + w["in.b"] + (temb @ w["time.w"] + w["time.b"])
    ctx.saved = [("input", tokens, temb)]
    for i in range(params.config.blocks):
        p = "blocks.{}.".format(i)
        for ln, layer, _ in _SUBLAYERS:
            a, ln_cache = _layer_norm(h, w[p + ln + ".g"], w[p + ln + ".b"])
            y, cache = layer(a, ctx, p)
            ctx.saved.append((p, ln, ln_cache, cache))
            h = h + y
    a, ln_cache = _layer_norm(h, w["out.ln.g"], w["out.ln.b"])
    ctx.saved.append(("out", a, ln_cache))
    return a @ w["out.w"] + w["out.b"]


def _backward(dout, ctx, grads):
    """Accumulate the gradients of one forward pass into `grads`.
    """
    w = ctx.w
    backward = {ln: bw for ln, _, bw in _SUBLAYERS}

    _, a, ln_cache = ctx.saved[-1]
    grads["out.w"] += a.T @ dout
    grads["out.b"] += dout.sum(axis=0)
    dh, dg, db = _layer_norm_backward(dout @ w["out.w"].T, ln_cache)
    grads["out.ln.g"] += dg
    grads["out.ln.b"] += db

    for p, ln, ln_cache, cache in reversed(ctx.saved[1:-1]):
        da = backward[ln](dh, cache, ctx, p, grads)
        dx, dg, db = _layer_norm_backward(da, ln_cache)
        grads[p + ln + ".g"] += dg
        grads[p + ln + ".b"] += db
        dh = dh + dx

    _, tokens, temb = ctx.saved[0]
    grads["in.w"] += tokens.T @ dh
    grads["in.b"] += dh.sum(axis=0)
    de = dh.sum(axis=0)
    grads["time.w"] += np.outer(temb, de)
    grads["time.b"] += de


def _check_layout(x, layout):
    n = int(np.prod(x.shape[:3]))
    if n != layout.total:
        raise ShapeError("{} latent tokens but the layout covers {}".format(n, layout.total))


def predict_noise(params, x_t, t, c_text, layout, policy=None):
    """Like `denoiser_forward` but return the raw (T, H, W, C) array in the params dtype.
    """
    x = x_t.data if isinstance(x_t, LatentGrid) else np.asarray(x_t)
    _check_layout(x, layout)
    policy = policy or params.config.policy()
    ctx = _Context(params, layout, policy, text_tokens(c_text, layout, params.config))
    return _forward(params, x, t, ctx).reshape(x.shape)


def denoiser_forward(params, x_t, t, c_text, layout, policy=None):
    """
    Predict the noise in `x_t` at step `t`.

    :param params: a `DenoiserParams`.
    :param x_t: the noisy `LatentGrid`, one token per latent pixel.
    :param c_text: a `TextEmbedding`, a (text_dim,) or (M, text_dim) array,
        or one of these per shot.
    :param layout: the `ShotLayout` of the T*H*W tokens.
    :param policy: a `SummaryPolicy`, defaults to the config's summary size.
    """
    eps = predict_noise(params, x_t, t, c_text, layout, policy)
    utils.check_finite(eps, "denoiser output at step {}".format(t))
    return LatentGrid(eps)


def training_loss(params, batch, layout, schedule, policy=None):
    """
    Mean squared error between the true and predicted noise over a batch of
    `TrainingExample`, and the gradient of every parameter. The gradients
    are also left in `params.grads`.
    """
    if not batch:
        raise ShapeError("empty training batch")
    policy = policy or params.config.policy()
    params.zero_grads()
    total = sum(ex.x0.size for ex in batch)
    loss = 0.0
    for ex in batch:
        x_t = forward_noise(ex.x0, ex.t, ex.eps, schedule)
        _check_layout(x_t.data, layout)
        ctx = _Context(params, layout, policy, text_tokens(ex.c_text, layout, params.config))
        pred = _forward(params, x_t.data, ex.t, ctx)
        diff = pred - ex.eps.data.reshape(pred.shape).astype(params.dtype)
        loss += float(np.sum(diff.astype(np.float64) ** 2))
        if not np.isfinite(loss):
            raise NumericError(
                "non-finite loss at step t={} (max |prediction| {})".format(
                    ex.t, np.nanmax(np.abs(pred))
                )
            )
        _backward((2.0 / total) * diff, ctx, params.grads)
    return loss / total, params.grads
