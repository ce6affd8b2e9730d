import numpy as np
import pytest

from dcdm.camera import MotionCategory
from dcdm.errors import ShapeError
from dcdm.evaluation import (
    Displacement,
    estimate_displacement,
    frame_shift,
    mean_displacement,
    motion_agreement,
    sign_agrees,
)


@pytest.mark.parametrize("dx, dy", [(-1, 0), (1, 0), (0, -2), (0, 1), (3, -2), (0, 0)])
def test_frame_shift_of_a_circular_roll(rng, dx, dy):
    f = rng.standard_normal((16, 20))
    g = np.roll(f, (dy, dx), axis=(0, 1))
    d = frame_shift(f, g)
    assert (d.dx, d.dy) == (dx, dy) and d.confident


def test_flat_frames_are_not_confident():
    d = frame_shift(np.ones((4, 4)), np.ones((4, 4)))
    assert (d.dx, d.dy, d.confident) == (0, 0, False)


def test_estimate_displacement(rng):
    frame = rng.standard_normal((8, 8, 3))
    video = np.stack([np.roll(frame, -t, axis=1) for t in range(4)])
    ds = estimate_displacement(video)
    assert [(d.dx, d.dy) for d in ds] == [(-1, 0)] * 3
    assert mean_displacement(ds) == (-1.0, 0.0)
    assert motion_agreement(ds, MotionCategory.LEFT) == 1.0
    assert motion_agreement(ds, "right") == 0.0
    with pytest.raises(ShapeError):
        estimate_displacement(video[:1])


def test_sign_agreement():
    assert sign_agrees(-2, 1, MotionCategory.LEFT)
    assert not sign_agrees(0, 0, MotionCategory.LEFT)
    assert sign_agrees(0, 3, MotionCategory.DOWNWARD)
    assert sign_agrees(0, 0, MotionCategory.STATIC)
    assert not sign_agrees(1, 0, MotionCategory.ZOOM_IN)


def test_agreement_ignores_unconfident_transitions():
    ds = [Displacement(1, 0), Displacement(0, 0, confident=False), Displacement(-1, 0)]
    assert motion_agreement(ds, MotionCategory.RIGHT) == 0.5
    assert mean_displacement(ds) == (0.0, 0.0)
    assert motion_agreement([Displacement(0, 0, confident=False)], MotionCategory.STATIC) == 0.0
    assert Displacement(3, 4).magnitude == 5.0


def test_unrelated_frames_give_bounded_shifts(rng):
    mags = [frame_shift(rng.standard_normal((16, 16)), rng.standard_normal((16, 16))).magnitude for _ in range(100)]
    assert np.median(mags) <= 8
    assert max(mags) <= np.hypot(8, 8)
