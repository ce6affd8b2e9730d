"""
Deterministic DDIM sampling (eta = 0):

    x0_hat = (x_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)
    x_prev = sqrt(abar_prev) * x0_hat + sqrt(1 - abar_prev) * eps_hat

The only randomness is the initial latent x_T, so replacing it with a
structured noise volume steers the whole trajectory.
"""
import logging
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from .denoiser import predict_noise
from .errors import NumericError, ShapeError
from .noise import inject_initial_noise
from .tensor import LatentGrid, RngStream, check_shape


logger = logging.getLogger(__name__)


@dataclass
class SamplerState:

    """
    The sampler's current latent and step. `initial_reads` counts how often
    the initial latent has been handed to the update loop.
    """

    latent: LatentGrid
    schedule: object
    c_text: object = None
    step: int = None
    injected: bool = False
    initial_reads: int = 0

    def __post_init__(self):
        if self.step is None:
            self.step = self.schedule.steps

    def read_initial(self):
        self.initial_reads += 1
        return self.latent


def create_sampler(shape, schedule, c_text, seed):
    """A sampler state starting from fresh normals of stream ("sample", t).
    """
    T, H, W, C = check_shape(shape)
    frames = [RngStream(seed, "sample", t).normal((H, W, C)) for t in range(T)]
    return SamplerState(LatentGrid.from_frames(frames), schedule, c_text)


def run_sampler(params, state, layout, sub_steps, policy=None, progress=False):
    """
    Run the DDIM loop from `state`, return the final clean `LatentGrid`.
    The state is updated in place.
    """
    schedule = state.schedule
    steps = schedule.timesteps(sub_steps)
    shape = state.latent.shape

    x = state.read_initial().data.astype(np.float64)
    for i, t in enumerate(tqdm(steps, desc="sampling", disable=not progress)):
        t_prev = steps[i + 1] if i + 1 < len(steps) else 0
        abar, abar_prev = schedule.alpha_bar(t), schedule.alpha_bar(t_prev)

        eps = predict_noise(params, x.astype(np.float32), t, state.c_text, layout, policy)
        eps = eps.astype(np.float64)
        x0_hat = (x - np.sqrt(1.0 - abar) * eps) / np.sqrt(abar)
        x = np.sqrt(abar_prev) * x0_hat + np.sqrt(1.0 - abar_prev) * eps
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite latent at sampling step t={}".format(t))
        if x.shape != shape:
            raise ShapeError("latent shape changed at step t={}".format(t))
        state.latent = LatentGrid(x)
        state.step = t_prev
        logger.debug("step %d -> %d, |x| max %.3f", t, t_prev, np.abs(x).max())
    return state.latent


def ddim_sample(
    params, schedule, init, c_text, layout, sub_steps, seed=0, shape=None, policy=None, progress=False
):
    """
    Sample a video latent.

    :param init: a `StructuredNoise` to inject as x_T, or None for fresh
        normals of shape `shape` drawn from `seed`.
    :param c_text: text conditioning, see `denoiser.denoiser_forward`.
    :param layout: a `ShotLayout` of the latent tokens.
    :param sub_steps: number of DDIM updates, 1..schedule.steps.
    """
    if init is None:
        if shape is None:
            raise ShapeError("sampling from fresh noise needs a latent shape")
        state = create_sampler(shape, schedule, c_text, seed)
    else:
        state = inject_initial_noise(create_sampler(init.shape, schedule, c_text, seed), init)
    return run_sampler(params, state, layout, sub_steps, policy, progress)
