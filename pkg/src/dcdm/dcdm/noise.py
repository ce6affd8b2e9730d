"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Camera-structured initial noise for video diffusion sampling
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

The noise volume {z_1, ..., z_T} is built frame by frame:

    z_1 ~ N(0, I)
    z~_t = W_{t<-t-1}(z_{t-1})                  (pull-warp, see camera.py)
    z_t = sqrt(lam) * z~_t + sqrt(1 - lam) * eps_t

Pixels whose source falls outside the previous frame are refilled with
fresh normals from stream ("boundary", t) before blending; eps_t comes from
stream ("blend", t). Both keep every element exactly unit variance.

With the nearest warp mode each pixel copies one source value, so the
marginals stay exactly N(0, 1). Plain bilinear interpolation would shrink
the variance to sum(w_i^2) < 1, hence the bilinear mode divides by
sqrt(sum(w_i^2)).
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError
from .camera import build_warp_field
from .tensor import LatentGrid, check_shape, frame_noise, gaussian_grid


logger = logging.getLogger(__name__)


DEFAULT_LAMBDA = 0.9


class WarpMode(Enum):

    NEAREST = "nearest"
    BILINEAR = "bilinear"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower()
        if key in ("bilinear_renormalized", "bilinearrenormalized"):
            key = "bilinear"
        try:
            return cls(key)
        except ValueError:
            raise ConfigError("unknown warp mode {!r}, expected nearest or bilinear".format(text))


@dataclass(frozen=True)
class BlendConfig:

    lam: float = DEFAULT_LAMBDA
    warp_mode: WarpMode = WarpMode.NEAREST

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must lie in [0, 1], got {}".format(self.lam))


@dataclass(frozen=True)
class StructuredNoise:

    grid: LatentGrid
    provenance: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.grid.shape


def warp_noise(prev, field_t, mode, seed, t):
    """
    Pull-warp one (H, W, C) noise frame through a transition of a warp field.

    :param prev: the previous frame z_{t-1}.
    :param field_t: (sx, sy, in_bounds) arrays of shape (H, W).
    :param mode: a `WarpMode`.
    :param seed, t: label of the stream ("boundary", t) that refills the
        out-of-bounds pixels.
    """
    prev = np.asarray(prev)
    sx, sy, inside = field_t
    H, W, C = prev.shape
    if sx.shape != (H, W):
        raise ShapeError(
            "frame is {}x{} but the warp field is {}x{}".format(H, W, *sx.shape)
        )

    src = prev.astype(np.float64)
    out = np.empty((H, W, C), dtype=np.float64)

    if mode is WarpMode.NEAREST:
        # round half up, in bounds by construction
        ix = np.clip(np.floor(sx + 0.5).astype(np.int64), 0, W - 1)
        iy = np.clip(np.floor(sy + 0.5).astype(np.int64), 0, H - 1)
        out[...] = src[iy, ix]
    else:
        x0 = np.clip(np.floor(sx).astype(np.int64), 0, W - 1)
        y0 = np.clip(np.floor(sy).astype(np.int64), 0, H - 1)
        x1 = np.minimum(x0 + 1, W - 1)
        y1 = np.minimum(y0 + 1, H - 1)
        fx = np.clip(sx - x0, 0.0, 1.0)
        fy = np.clip(sy - y0, 0.0, 1.0)
        w00 = (1 - fx) * (1 - fy)
        w01 = fx * (1 - fy)
        w10 = (1 - fx) * fy
        w11 = fx * fy
        acc = (
            w00[..., None] * src[y0, x0]
            + w01[..., None] * src[y0, x1]
            + w10[..., None] * src[y1, x0]
            + w11[..., None] * src[y1, x1]
        )
        # neighbours that coincide (at the last row/column) add their weights
        same_x = x0 == x1
        same_y = y0 == y1
        norm = np.where(
            same_x & same_y,
            (w00 + w01 + w10 + w11) ** 2,
            np.where(
                same_x,
                (w00 + w01) ** 2 + (w10 + w11) ** 2,
                np.where(
                    same_y,
                    (w00 + w10) ** 2 + (w01 + w11) ** 2,
                    w00 ** 2 + w01 ** 2 + w10 ** 2 + w11 ** 2,
                ),
            ),
        )
        out[...] = acc / np.sqrt(norm)[..., None]

    if not np.all(inside):
        fresh = frame_noise(seed, "boundary", t, (H, W, C))
        out[~inside] = fresh[~inside]

    return out.astype(np.float32)


def blend(warped, cfg, seed, t):
    """z_t = sqrt(lam) * warped + sqrt(1 - lam) * eps_t, eps_t from stream ("blend", t).
    """
    warped = np.asarray(warped)
    if cfg.lam == 1.0:
        return warped.astype(np.float32, copy=True)
    eps = frame_noise(seed, "blend", t, warped.shape)
    if cfg.lam == 0.0:
        return eps
    z = np.sqrt(cfg.lam) * warped.astype(np.float64) + np.sqrt(1.0 - cfg.lam) * eps.astype(np.float64)
    return z.astype(np.float32)


def generate_camera_noise(template, shape, cfg, seed):
    """
    Return the `StructuredNoise` volume for a camera template.

    :param template: a `CameraTemplate` with T frames.
    :param shape: (T, H, W, C) of the latent.
    :param cfg: a `BlendConfig`.
    :param seed: master seed of all streams.
    """
    T, H, W, C = check_shape(shape)
    warp = build_warp_field(template, (T, H, W))

    frames = [gaussian_grid((1, H, W, C), seed).frame(0)]
    for t in range(1, T):
        warped = warp_noise(frames[-1], warp.transition(t), cfg.warp_mode, seed, t)
        frames.append(blend(warped, cfg, seed, t))
        logger.debug(
            "frame %d: %.2f%% pixels refreshed at the boundary",
            t, 100 * warp.out_of_bounds_fraction(t),
        )

    provenance = {
        "template": template.summary(),
        "lambda": cfg.lam,
        "seed": int(seed),
        "warp_mode": cfg.warp_mode.value,
    }
    return StructuredNoise(LatentGrid.from_frames(frames), provenance)


def inject_initial_noise(state, noise):
    """Replace the initial latent x_T of a sampler with a structured noise volume.
    """
    if noise.shape != state.latent.shape:
        raise ShapeError(
            "noise shape {} does not match the sampler latent {}".format(
                noise.shape, state.latent.shape
            )
        )
    return replace(state, latent=noise.grid, injected=True, initial_reads=0)
