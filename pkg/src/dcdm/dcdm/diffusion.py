"""
Variance-preserving forward corruption with a linear beta schedule:

    x_t = sqrt(abar_t) * x_0 + sqrt(1 - abar_t) * eps,    abar_t = prod_{s<=t} (1 - beta_s)

Steps are numbered 1..T, and abar_0 = 1 stands for the clean sample.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import utils
from .errors import ScheduleError, ShapeError
from .tensor import LatentGrid


@dataclass(frozen=True)
class DiffusionSchedule:

    steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.steps < 1:
            raise ScheduleError("a schedule needs at least one step")
        if not 0 < self.beta_start < 1 or not 0 < self.beta_end < 1:
            raise ScheduleError("betas must lie in (0, 1)")

    @cached_property
    def betas(self):
        return np.linspace(self.beta_start, self.beta_end, self.steps)

    @cached_property
    def alphas(self):
        return 1.0 - self.betas

    @cached_property
    def alpha_bars(self):
        """abar_0 .. abar_T, with abar_0 = 1."""
        return np.concatenate([[1.0], np.cumprod(self.alphas)])

    def alpha_bar(self, t):
        if not 0 <= t <= self.steps:
            raise ScheduleError("step {} outside 0..{}".format(t, self.steps))
        return float(self.alpha_bars[t])

    def check_step(self, t):
        if not 1 <= t <= self.steps:
            raise ScheduleError("step {} outside 1..{}".format(t, self.steps))
        return int(t)

    def timesteps(self, sub_steps):
        """
        Descending sampling steps, T first, evenly spaced down to 1.
        """
        if not 1 <= sub_steps <= self.steps:
            raise ScheduleError(
                "sub_steps must lie in 1..{}, got {}".format(self.steps, sub_steps)
            )
        ts = np.round(np.linspace(self.steps, 1, sub_steps)).astype(int)
        return [int(t) for t in dict.fromkeys(ts)]


def forward_noise(x0, t, eps, schedule):
    """Corrupt a clean grid `x0` to step `t` with the noise grid `eps`.
    """
    t = schedule.check_step(t)
    x0 = x0.data if isinstance(x0, LatentGrid) else np.asarray(x0)
    eps = eps.data if isinstance(eps, LatentGrid) else np.asarray(eps)
    if x0.shape != eps.shape:
        raise ShapeError("x0 shape {} does not match noise {}".format(x0.shape, eps.shape))
    abar = schedule.alpha_bar(t)
    xt = np.sqrt(abar) * x0.astype(np.float64) + np.sqrt(1.0 - abar) * eps.astype(np.float64)
    utils.check_finite(xt, "x_{}".format(t))
    return LatentGrid(xt)
