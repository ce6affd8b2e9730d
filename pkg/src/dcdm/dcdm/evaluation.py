"""
Frame-to-frame displacement of a video by circular cross-correlation.

For consecutive channel-averaged frames f and g the correlation surface

    c = ifft2(fft2(g) * conj(fft2(f)))

peaks at the integer shift d with g(p) ~ f(p - d), i.e. at the displacement
of the content. Shifts are reported in (-W/2, W/2] x (-H/2, H/2].
"""
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .camera import MotionCategory, expected_displacement
from .errors import ShapeError
from .tensor import LatentGrid


# surface values this close to the maximum count as ties
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Displacement:

    dx: int
    dy: int
    confident: bool = True

    @property
    def magnitude(self):
        return float(np.hypot(self.dx, self.dy))


def _signed(i, n):
    return i - n if i > n // 2 else i


def frame_shift(f, g):
    """The integer content displacement from frame `f` to frame `g` (both (H, W)).
    """
    f = f - f.mean()
    g = g - g.mean()
    if not (np.any(f) and np.any(g)):
        return Displacement(0, 0, confident=False)

    H, W = f.shape
    c = fft.ifft2(fft.fft2(g) * np.conj(fft.fft2(f))).real
    top = c.max()
    ys, xs = np.nonzero(c >= top - TIE_RTOL * abs(top))
    candidates = [(_signed(x, W), _signed(y, H)) for y, x in zip(ys, xs)]
    dx, dy = min(candidates, key=lambda d: (d[0] ** 2 + d[1] ** 2, d[0], d[1]))
    return Displacement(int(dx), int(dy))


def estimate_displacement(video):
    """
    Return one `Displacement` per transition of a (T, H, W, C) video, T >= 2.
    """
    data = video.data if isinstance(video, LatentGrid) else np.asarray(video)
    if data.ndim != 4 or data.shape[0] < 2:
        raise ShapeError("need a (T, H, W, C) video with T >= 2, got {}".format(data.shape))
    frames = data.astype(np.float64).mean(axis=-1)
    return [frame_shift(frames[t - 1], frames[t]) for t in range(1, len(frames))]


def mean_displacement(displacements):
    """The mean (dx, dy) over the confident transitions, (0, 0) if there are none."""
    good = [d for d in displacements if d.confident]
    if not good:
        return 0.0, 0.0
    return float(np.mean([d.dx for d in good])), float(np.mean([d.dy for d in good]))


def sign_agrees(dx, dy, category):
    """
    Whether a displacement points the way `category` moves the content. Pans
    compare the sign of the moving axis, the other categories expect no shift.
    """
    ex, ey = expected_displacement(category)
    if not category.is_pan:
        return dx == 0 and dy == 0
    if ex:
        return np.sign(dx) == np.sign(ex)
    return np.sign(dy) == np.sign(ey)


def motion_agreement(displacements, category):
    """The fraction of confident transitions whose displacement agrees with `category`.
    """
    if isinstance(category, str):
        category = MotionCategory.parse(category)
    good = [d for d in displacements if d.confident]
    if not good:
        return 0.0
    hits = sum(bool(sign_agrees(d.dx, d.dy, category)) for d in good)
    return hits / len(good)
