"""
Train the toy denoiser, then check that camera-structured initial noise
steers the motion of the sampled videos. Takes several minutes.
"""
import numpy as np
import pytest

from dcdm.camera import MotionCategory, default_speed, template_from_category
from dcdm.diffusion import DiffusionSchedule
from dcdm.evaluation import estimate_displacement, mean_displacement
from dcdm.noise import BlendConfig, generate_camera_noise
from dcdm.sampler import ddim_sample
from dcdm.training import ToyDatasetConfig, prompt_embedding, train_toy


VIDEOS = 50
# the static set only serves as the median baseline
STATIC_VIDEOS = 25


@pytest.fixture(scope="module")
def trained():
    cfg = ToyDatasetConfig()
    params, log = train_toy(cfg, 2000, 0.05, seed=0)
    return cfg, params, log


def _sample_displacements(cfg, params, category, videos=VIDEOS):
    T, H, W, _ = cfg.shape
    template = template_from_category(category, default_speed(category), T, dims=(H, W))
    _, embedding = prompt_embedding(category, cfg.text_dim)
    schedule = DiffusionSchedule()
    out = []
    for i in range(videos):
        noise = generate_camera_noise(template, cfg.shape, BlendConfig(lam=0.9), seed=1000 + i)
        video = ddim_sample(params, schedule, noise, embedding, cfg.layout(), sub_steps=20)
        out.append(mean_displacement(estimate_displacement(video)))
    return out


@pytest.mark.slow
def test_training_reduces_the_loss(trained):
    _, _, log = trained
    assert len(log.losses) == 2000 and len(log.lines()) == 20
    assert log.window_mean(1900, 2000) <= 0.7 * log.window_mean(0, 100)


@pytest.mark.slow
def test_left_noise_steers_samples_left(trained):
    cfg, params, _ = trained
    left = _sample_displacements(cfg, params, MotionCategory.LEFT)
    static = _sample_displacements(cfg, params, MotionCategory.STATIC, STATIC_VIDEOS)
    assert np.mean([dx < 0 for dx, _ in left]) >= 0.7
    assert np.median([np.hypot(*d) for d in static]) < np.median([np.hypot(*d) for d in left])
