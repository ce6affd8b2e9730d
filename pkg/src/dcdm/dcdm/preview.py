"""
Image files: animated GIF previews of noise volumes, and the metadata
record of reference images.
"""
import hashlib
from dataclasses import asdict, dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ValidationError


PREVIEW_RANGE = 3.0


@dataclass(frozen=True)
class ReferenceImage:

    path: str
    width: int
    height: int
    mode: str
    sha256: str

    def to_dict(self):
        return asdict(self)


def load_reference_image(path):
    """Open an image with pillow and record its size, mode and content hash.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
        with Image.open(path) as img:
            img.verify()
        with Image.open(path) as img:
            width, height = img.size
            mode = img.mode
    except (OSError, UnidentifiedImageError, SyntaxError) as e:
        raise FormatError("cannot read image {}: {}".format(path, e))
    return ReferenceImage(str(path), width, height, mode, hashlib.sha256(raw).hexdigest())


def to_gray(frame):
    """Map values in [-3, 3] to gray levels 0..255, clipping outside."""
    x = (np.asarray(frame, dtype=np.float64) + PREVIEW_RANGE) / (2 * PREVIEW_RANGE)
    return np.uint8(np.round(255 * np.clip(x, 0.0, 1.0)))


def save_noise_preview(grid, path, channel=0, scale=4, duration=120):
    """
    Write one channel of a latent grid as an animated GIF, one image per frame.

    :param scale: integer upscaling factor of every frame.
    :param duration: display time of each frame in milliseconds.
    """
    if not 0 <= channel < grid.channels:
        raise ValidationError("channel {} out of range 0..{}".format(channel, grid.channels - 1))
    images = []
    for t in range(grid.frames):
        img = Image.fromarray(to_gray(grid.frame(t)[..., channel]))
        if scale > 1:
            img = img.resize((grid.width * scale, grid.height * scale), Image.Resampling.NEAREST)
        images.append(img)
    images[0].save(
        path, save_all=True, append_images=images[1:], duration=duration, loop=0
    )
