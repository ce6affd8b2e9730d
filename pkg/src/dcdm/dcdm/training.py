"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Moving-sinusoid toy data and a training loop
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Each toy video is a sum of three plane waves, periodic on the H x W
torus, seen through the camera template of a randomly drawn motion
category: pixel p of frame t shows the frame-0 pattern at the backward
source of p, so a pan by an integer speed is an exact circular shift.
Every sample is paired with the embedding of a fixed prompt describing
its camera motion.

Training is plain full-precision gradient descent with a fixed learning
rate, one seeded stream for the batch order and one for the noise.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from .attention import ShotLayout
from .camera import (
    DEFAULT_PAN_SPEED,
    DEFAULT_ZOOM_SPEED,
    MotionCategory,
    compose_transitions,
    template_from_category,
)
from .denoiser import DenoiserConfig, DenoiserParams, TrainingExample, training_loss
from .diffusion import DiffusionSchedule
from .errors import NumericError, TrainingError, ValidationError
from .prompts import embed_text, extend_prompt
from .tensor import LatentGrid, RngStream, check_shape


logger = logging.getLogger(__name__)


DIVERGENCE_LOSS = 1e3
LOG_EVERY = 100

CATEGORY_PROMPTS = {
    MotionCategory.LEFT: "the camera pans left across rippled stripes",
    MotionCategory.RIGHT: "the camera pans right across rippled stripes",
    MotionCategory.UPWARD: "the camera tilts up over rippled stripes",
    MotionCategory.DOWNWARD: "the camera tilts down over rippled stripes",
    MotionCategory.ZOOM_IN: "the camera zooms in on rippled stripes",
    MotionCategory.ZOOM_OUT: "the camera zooms out from rippled stripes",
    MotionCategory.STATIC: "rippled stripes under a still camera",
}


@dataclass(frozen=True)
class ToyDatasetConfig:

    shape: tuple = (8, 16, 16, 4)
    sample_count: int = 64
    seed: int = 0
    shots: int = 2
    pan_speed: float = DEFAULT_PAN_SPEED
    zoom_speed: float = DEFAULT_ZOOM_SPEED
    text_dim: int = 64
    categories: tuple = tuple(MotionCategory)

    def __post_init__(self):
        check_shape(self.shape)
        if self.sample_count < 1:
            raise ValidationError("sample_count must be >= 1")
        if not 1 <= self.shots <= self.shape[0]:
            raise ValidationError("cannot split {} frames into {} shots".format(self.shape[0], self.shots))

    def layout(self):
        T, H, W, _ = self.shape
        return ShotLayout.even(T, self.shots, H * W)


@dataclass(frozen=True)
class ToySample:

    video: LatentGrid
    category: MotionCategory
    prompt: object
    embedding: object = field(repr=False)


@dataclass
class TrainingLog:

    losses: list = field(default_factory=list)
    every: int = LOG_EVERY

    def window_mean(self, start, stop):
        return float(np.mean(self.losses[start:stop]))

    def lines(self):
        """One "step=<n> loss=<mean of the last window>" line per window."""
        out = []
        for n in range(self.every, len(self.losses) + 1, self.every):
            out.append("step={} loss={:.6f}".format(n, self.window_mean(n - self.every, n)))
        return out


def prompt_embedding(category, dim):
    ext = extend_prompt(CATEGORY_PROMPTS[category])
    return ext, embed_text(ext, dim)


def sinusoid_video(category, shape, rng, pan_speed=DEFAULT_PAN_SPEED, zoom_speed=DEFAULT_ZOOM_SPEED):
    """Render one moving-sinusoid video as a float64 (T, H, W, C) array.
    """
    T, H, W, C = shape
    speed = 0.0 if category is MotionCategory.STATIC else (
        zoom_speed if category.is_zoom else pan_speed
    )
    template = template_from_category(category, speed, T, dims=(H, W))

    # (1, 0) and (0, 1) pin the correlation peak to a single shift
    u = rng.integers(-2, 3, size=2)
    if not u.any():
        u[0] = 2
    waves = np.array([[1, 0], [0, 1], u], dtype=float)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    amp = np.sqrt(2.0 / len(waves))

    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    video = np.empty(shape)
    for t in range(T):
        sx, sy = compose_transitions(template, 0, t)(xs, ys)
        for c in range(C):
            arg = 2 * np.pi * (waves[:, 0, None, None] * sx / W + waves[:, 1, None, None] * sy / H)
            video[t, ..., c] = amp * np.sin(arg + phases[:, None, None] + 0.5 * c).sum(axis=0)
    return video


def make_toy_dataset(cfg, seed=None):
    """
    Return the list of `ToySample`. Sample i only depends on (seed, i).
    """
    seed = cfg.seed if seed is None else seed
    embeddings = {c: prompt_embedding(c, cfg.text_dim) for c in cfg.categories}
    samples = []
    for i in range(cfg.sample_count):
        rng = RngStream(seed, "dataset", i).generator()
        category = cfg.categories[int(rng.integers(len(cfg.categories)))]
        video = sinusoid_video(category, cfg.shape, rng, cfg.pan_speed, cfg.zoom_speed)
        prompt, emb = embeddings[category]
        samples.append(ToySample(LatentGrid(video), category, prompt, emb))
    return samples


def default_denoiser_config(cfg):
    T, H, W, C = cfg.shape
    return DenoiserConfig(channels=C, text_dim=cfg.text_dim, summary_tokens=min(16, H * W))


def train_toy(
    cfg,
    steps,
    lr,
    seed,
    denoiser_config=None,
    schedule=None,
    batch_size=1,
    dataset=None,
    progress=False,
):
    """
    Train a fresh denoiser on the toy dataset.

    :param cfg: a `ToyDatasetConfig`.
    :param steps: number of gradient steps, 0 returns the initialization.
    :param lr: the fixed learning rate.
    :param seed: seeds the initialization, the batch order and the noise.
    :return: (params, `TrainingLog`).
    """
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    schedule = schedule or DiffusionSchedule()
    denoiser_config = denoiser_config or default_denoiser_config(cfg)
    dataset = dataset if dataset is not None else make_toy_dataset(cfg)
    layout = cfg.layout()

    params = DenoiserParams.init(denoiser_config, seed)
    log = TrainingLog()
    order = RngStream(seed, "train").generator()
    T, H, W, C = cfg.shape
    logger.info(
        "training %d parameters for %d steps on %d samples", params.count(), steps, len(dataset)
    )

    for step in tqdm(range(1, steps + 1), desc="training", disable=not progress):
        batch = []
        for j in range(batch_size):
            sample = dataset[int(order.integers(len(dataset)))]
            t = int(order.integers(1, schedule.steps + 1))
            eps = RngStream(seed, "train_eps", (step - 1) * batch_size + j).normal((T, H, W, C))
            batch.append(TrainingExample(sample.video, t, LatentGrid(eps), sample.embedding))
        try:
            loss, grads = training_loss(params, batch, layout, schedule)
        except NumericError as e:
            raise TrainingError("training diverged at step {}: {}".format(step, e), step=step)
        if loss > DIVERGENCE_LOSS:
            raise TrainingError(
                "training diverged at step {} (loss {:.3g})".format(step, loss), step=step
            )
        for name in params.names():
            params.weights[name] -= lr * grads[name]
        log.losses.append(loss)
        if step % log.every == 0:
            logger.info(log.lines()[-1])
    return params, log
