import numpy as np
import pytest

from dcdm.camera import MotionCategory, template_from_category
from dcdm.denoiser import DenoiserParams
from dcdm.diffusion import DiffusionSchedule
from dcdm.errors import ScheduleError, ShapeError
from dcdm.noise import BlendConfig, StructuredNoise, generate_camera_noise, inject_initial_noise
from dcdm.sampler import create_sampler, ddim_sample, run_sampler


SHAPE = (4, 2, 2, 2)


@pytest.fixture
def schedule():
    return DiffusionSchedule(steps=100)


@pytest.fixture
def text(rng):
    return [rng.standard_normal((1, 8)) for _ in range(2)]


def _noise(seed=0):
    tpl = template_from_category(MotionCategory.LEFT, 1.0, SHAPE[0], dims=SHAPE[1:3])
    return generate_camera_noise(tpl, SHAPE, BlendConfig(), seed)


def test_sampling_is_deterministic(tiny_params, tiny_layout, schedule, text):
    noise = _noise()
    a = ddim_sample(tiny_params, schedule, noise, text, tiny_layout, sub_steps=5)
    b = ddim_sample(tiny_params, schedule, noise, text, tiny_layout, sub_steps=5)
    assert a == b and a.shape == SHAPE


def test_initial_noise_steers_the_result(tiny_params, tiny_layout, schedule, text):
    a = ddim_sample(tiny_params, schedule, _noise(0), text, tiny_layout, sub_steps=5)
    b = ddim_sample(tiny_params, schedule, _noise(1), text, tiny_layout, sub_steps=5)
    assert a != b


def test_fresh_noise_equals_injecting_the_same_latent(tiny_params, tiny_layout, schedule, text):
    fresh = ddim_sample(tiny_params, schedule, None, text, tiny_layout, 4, seed=3, shape=SHAPE)
    own = create_sampler(SHAPE, schedule, text, seed=3).latent
    injected = ddim_sample(tiny_params, schedule, StructuredNoise(own), text, tiny_layout, 4, seed=99)
    assert fresh == injected


def test_initial_latent_is_read_once(tiny_params, tiny_layout, schedule, text):
    noise = _noise()
    state = inject_initial_noise(create_sampler(SHAPE, schedule, text, seed=0), noise)
    assert state.injected and state.latent == noise.grid
    run_sampler(tiny_params, state, tiny_layout, sub_steps=6)
    assert state.initial_reads == 1
    assert state.step == 0


def test_zero_network_single_step(tiny_config, tiny_layout, schedule, text):
    params = DenoiserParams.zeros(tiny_config)
    noise = _noise()
    out = ddim_sample(params, schedule, noise, text, tiny_layout, sub_steps=1)
    expected = (noise.grid.data.astype(np.float64) / np.sqrt(schedule.alpha_bar(schedule.steps)))
    assert np.array_equal(out.data, expected.astype(np.float32))


def test_sampler_errors(tiny_params, tiny_layout, schedule, text):
    with pytest.raises(ShapeError):
        ddim_sample(tiny_params, schedule, None, text, tiny_layout, 4)
    with pytest.raises(ScheduleError):
        ddim_sample(tiny_params, schedule, _noise(), text, tiny_layout, 0)
    with pytest.raises(ShapeError):
        ddim_sample(tiny_params, schedule, None, text, tiny_layout, 4, shape=(4, 4, 4, 2))
