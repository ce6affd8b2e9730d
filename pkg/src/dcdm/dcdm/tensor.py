"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Latent grids and reproducible Gaussian noise streams
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

A `LatentGrid` is an immutable T x H x W x C array of float32 values
stored in row-major [t][h][w][c] order. It holds clean video latents,
noisy latents and the per-frame noise volumes alike.

Random numbers never come from a global generator. Each draw is made
from an `RngStream` identified by (master seed, purpose tag, frame index);
the triple is hashed into the key of a counter-based Philox generator,
so frame t of a grid is the same no matter in which order, or on which
thread, the frames are generated.
"""
from dataclasses import dataclass

import numpy as np

from . import utils
from .errors import CapacityError, ShapeError


MAX_ELEMENTS = 2 ** 28


class LatentGrid:

    """
    A read-only (T, H, W, C) float32 array with a few convenience accessors.
    Construction validates the shape, the element cap and finiteness, so
    every grid that exists satisfies the invariants.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        data = np.array(data, dtype=np.float32, copy=True, order="C")
        if data.ndim != 4:
            raise ShapeError("a latent grid must have 4 axes, got shape {}".format(data.shape))
        check_shape(data.shape)
        utils.check_finite(data, "latent grid")
        data.setflags(write=False)
        self._data = data

    @classmethod
    def zeros(cls, shape):
        check_shape(shape)
        return cls(np.zeros(shape, dtype=np.float32))

    @classmethod
    def from_frames(cls, frames):
        """Stack a list of (H, W, C) frames into a grid.
        """
        return cls(np.stack([np.asarray(f, dtype=np.float32) for f in frames]))

    @property
    def data(self):
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def frames(self):
        return self._data.shape[0]

    @property
    def height(self):
        return self._data.shape[1]

    @property
    def width(self):
        return self._data.shape[2]

    @property
    def channels(self):
        return self._data.shape[3]

    @property
    def size(self):
        return self._data.size

    def frame(self, t):
        """Return the read-only (H, W, C) slice of frame `t` (0-based).
        """
        return self._data[t]

    def tokens(self):
        """Return the grid as a (T*H*W, C) token matrix, one token per latent pixel.
        """
        return self._data.reshape(-1, self.channels)

    def astype(self, dtype):
        return self._data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, LatentGrid):
            return NotImplemented
        return self.shape == other.shape and self._data.tobytes() == other._data.tobytes()

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return "LatentGrid(shape={})".format(self.shape)


def check_shape(shape):
    """Validate a (T, H, W, C) shape against the element cap.
    """
    shape = tuple(int(x) for x in shape)
    if len(shape) != 4:
        raise ShapeError("expected a (T, H, W, C) shape, got {}".format(shape))
    if any(x < 1 for x in shape):
        raise ShapeError("all dimensions must be >= 1, got {}".format(shape))
    total = int(np.prod(shape, dtype=object))
    if total > MAX_ELEMENTS:
        raise CapacityError(
            "shape {} has {} elements, the cap is {}".format(shape, total, MAX_ELEMENTS)
        )
    return shape


@dataclass(frozen=True)
class RngStream:

    """
    A labelled random stream. Identical (seed, tag, index) always yields the
    identical sequence; distinct labels yield independent streams.
    """

    seed: int
    tag: str
    index: int = 0

    def generator(self):
        key = utils.digest_int(int(self.seed), self.tag, int(self.index))
        return np.random.Generator(np.random.Philox(key=key))

    def normal(self, shape):
        """Draw a float32 array of independent standard normals.
        """
        return self.generator().standard_normal(shape, dtype=np.float32)


def frame_noise(seed, tag, index, frame_shape):
    """Draw one (H, W, C) frame of standard normals from stream (seed, tag, index).
    """
    return RngStream(seed, tag, index).normal(tuple(frame_shape))


def gaussian_grid(shape, seed):
    """
    Return a grid of independent standard normal draws. Frame t is drawn
    from stream ("init", t), so the result does not depend on the order in
    which frames are produced.
    """
    T, H, W, C = check_shape(shape)
    return LatentGrid(np.stack([frame_noise(seed, "init", t, (H, W, C)) for t in range(T)]))
