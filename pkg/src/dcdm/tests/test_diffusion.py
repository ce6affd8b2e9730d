import numpy as np
import pytest

from dcdm.diffusion import DiffusionSchedule, forward_noise
from dcdm.errors import ScheduleError, ShapeError
from dcdm.tensor import LatentGrid, gaussian_grid


def test_schedule_is_monotone():
    s = DiffusionSchedule()
    abar = s.alpha_bars
    assert len(abar) == s.steps + 1
    assert abar[0] == 1.0
    assert np.all(np.diff(abar) < 0)
    assert 0 < s.alpha_bar(s.steps) < 1e-4
    assert np.isclose(s.alpha_bar(1), 1 - 1e-4)


def test_bad_schedules():
    with pytest.raises(ScheduleError):
        DiffusionSchedule(steps=0)
    with pytest.raises(ScheduleError):
        DiffusionSchedule(beta_end=1.5)
    with pytest.raises(ScheduleError):
        DiffusionSchedule().check_step(0)
    with pytest.raises(ScheduleError):
        DiffusionSchedule().alpha_bar(1001)


def test_timesteps():
    s = DiffusionSchedule()
    assert s.timesteps(1) == [1000]
    ts = s.timesteps(50)
    assert ts[0] == 1000 and ts[-1] == 1
    assert len(ts) == 50 and all(a > b for a, b in zip(ts, ts[1:]))
    assert s.timesteps(1000) == list(range(1000, 0, -1))
    for bad in (0, 1001):
        with pytest.raises(ScheduleError):
            s.timesteps(bad)


def test_forward_noise_limits():
    s = DiffusionSchedule()
    x0 = LatentGrid(np.full((1, 4, 4, 2), 3.0))
    eps = gaussian_grid((1, 4, 4, 2), seed=0)
    early = forward_noise(x0, 1, eps, s).data
    assert np.allclose(early, 3.0, atol=0.05)
    late = forward_noise(x0, s.steps, eps, s).data
    assert np.allclose(late, eps.data, atol=0.05)


def test_forward_noise_variance():
    s = DiffusionSchedule()
    x0 = gaussian_grid((1, 128, 128, 4), seed=1)
    eps = gaussian_grid((1, 128, 128, 4), seed=2)
    xt = forward_noise(x0, 500, eps, s).data.astype(np.float64)
    n = xt.size
    assert abs(xt.var() - 1.0) < 5 * np.sqrt(2.0 / n)


def test_forward_noise_errors():
    s = DiffusionSchedule()
    x0 = LatentGrid.zeros((1, 2, 2, 1))
    with pytest.raises(ShapeError):
        forward_noise(x0, 5, LatentGrid.zeros((1, 2, 2, 2)), s)
    with pytest.raises(ScheduleError):
        forward_noise(x0, 0, x0, s)
