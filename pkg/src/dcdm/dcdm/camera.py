"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Camera templates and per-frame backward warp fields
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

A camera template is a list of T-1 backward homographies, the k-th one
maps a pixel center of frame k to the point of frame k-1 whose content
it shows. Warping is always a "pull": every target pixel looks up its
source, so the warped frame has no holes.

The scene is assumed to be a fronto-parallel plane at depth d, which makes
the reprojection between two camera poses the closed-form homography

    H = K (R + t n^T / d) K^{-1}.

Sign convention: a motion category names the direction in which the image
content travels, per frame and per unit of speed:

    category    content displacement    backward source of pixel (x, y)
    --------    --------------------    -------------------------------
    left        (-s, 0)                 (x + s, y)
    right       (+s, 0)                 (x - s, y)
    upward      (0, -s)                 (x, y + s)
    downward    (0, +s)                 (x, y - s)
    zoom_in     scale about (cx, cy)    c + (p - c) * (1 + s)
    zoom_out    scale about (cx, cy)    c + (p - c) / (1 + s)
    static      none                    (x, y)

Image y grows downward, integer coordinates are pixel centers.
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import utils
from .errors import ConfigError, DcdmError, ParseError, ShapeError, ValidationError
from .homography import Homography


logger = logging.getLogger(__name__)


class MotionCategory(Enum):

    LEFT = "left"
    RIGHT = "right"
    UPWARD = "upward"
    DOWNWARD = "downward"
    ZOOM_IN = "zoom_in"
    ZOOM_OUT = "zoom_out"
    STATIC = "static"

    @classmethod
    def parse(cls, text):
        """Parse a category name, e.g. "left", "Zoom In", "zoom_out".
        """
        key = str(text).strip().lower().replace(" ", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ParseError(
                "unknown motion category {!r}, expected one of: {}".format(
                    text, ", ".join(m.value for m in cls)
                )
            )

    @property
    def is_pan(self):
        return self in PAN_DIRECTIONS

    @property
    def is_zoom(self):
        return self in (MotionCategory.ZOOM_IN, MotionCategory.ZOOM_OUT)


# content displacement per frame for a unit speed
PAN_DIRECTIONS = {
    MotionCategory.LEFT: (-1, 0),
    MotionCategory.RIGHT: (1, 0),
    MotionCategory.UPWARD: (0, -1),
    MotionCategory.DOWNWARD: (0, 1),
}


DEFAULT_PAN_SPEED = 1.0
DEFAULT_ZOOM_SPEED = 0.1


def expected_displacement(category, speed=1.0):
    """The (dx, dy) content displacement per frame for a pan, (0, 0) otherwise.
    """
    dx, dy = PAN_DIRECTIONS.get(category, (0, 0))
    return dx * speed, dy * speed


def default_speed(category):
    if category is MotionCategory.STATIC:
        return 0.0
    return DEFAULT_ZOOM_SPEED if category.is_zoom else DEFAULT_PAN_SPEED


@dataclass(frozen=True)
class CameraIntrinsics:

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive, got fx={}, fy={}".format(self.fx, self.fy))

    @classmethod
    def default(cls, height, width):
        """fx = fy = max(H, W) with the principal point at the image center.
        """
        f = float(max(height, width))
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class CameraPose:

    """Relative motion between two consecutive frames.
    `rotation` is 9 floats row-major, `translation` 3 floats in scene units.
    """

    rotation: tuple = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if R.size != 9 or len(self.translation) != 3:
            raise ValidationError("a pose needs 9 rotation and 3 translation entries")
        R = R.reshape(3, 3)
        if np.max(np.abs(R.T @ R - np.eye(3))) >= 1e-6:
            raise ValidationError("rotation is not orthonormal")
        if np.linalg.det(R) <= 0:
            raise ValidationError("rotation has det <= 0")


@dataclass(frozen=True)
class PlaneAssumption:

    depth: float = 1.0
    normal: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.depth > 0:
            raise ValidationError("plane depth must be positive, got {}".format(self.depth))
        if not utils.equal(float(np.linalg.norm(self.normal)), 1.0, 1e-9):
            raise ValidationError("plane normal must have unit length")


@dataclass(frozen=True)
class CameraTemplate:

    category: MotionCategory
    transitions: tuple
    speed: float = 0.0
    intrinsics: CameraIntrinsics = None
    from_poses: bool = False

    def __post_init__(self):
        if self.category is MotionCategory.STATIC and not self.from_poses:
            if not all(H.is_identity() for H in self.transitions):
                raise ValidationError("a static template must only hold identities")

    @property
    def frames(self):
        return len(self.transitions) + 1

    def summary(self):
        """A JSON-friendly description, used as provenance in metadata files.
        """
        return {
            "category": self.category.value,
            "speed": self.speed,
            "frames": self.frames,
            "from_poses": self.from_poses,
        }


@dataclass(frozen=True)
class WarpField:

    """
    Backward source coordinates for every transition and pixel:
    `sx[k, y, x]`, `sy[k, y, x]` is where pixel (x, y) of frame k+1 pulls
    its value from in frame k. `in_bounds` marks sources inside the image.
    """

    sx: np.ndarray
    sy: np.ndarray
    in_bounds: np.ndarray = field(repr=False)

    @property
    def transitions(self):
        return self.sx.shape[0]

    @property
    def dims(self):
        """(T, H, W) of the video this field belongs to."""
        n, H, W = self.sx.shape
        return n + 1, H, W

    def transition(self, k):
        """Return (sx, sy, in_bounds) for the transition into frame k (1-based).
        """
        return self.sx[k - 1], self.sy[k - 1], self.in_bounds[k - 1]

    def out_of_bounds_fraction(self, k):
        return 1.0 - float(np.mean(self.in_bounds[k - 1]))


def homography_from_pose(K, pose, plane):
    """The forward homography H = K (R + t n^T / d) K^{-1}, normalized so H[2][2] = 1.
    """
    return Homography.from_pose(K, pose, plane)


def template_from_category(category, speed, frames, K=None, dims=None):
    """
    Return the `CameraTemplate` of a motion category.

    :param category: a `MotionCategory`.
    :param speed: pixels per frame for pans, scale rate per frame for zooms.
    :param frames: number of frames T >= 1.
    :param K: camera intrinsics, used for the zoom center. Defaults to the
        image center of `dims`.
    :param dims: (H, W), only needed when `K` is not given.
    """
    if frames < 1:
        raise ValidationError("a template needs at least one frame")
    if speed < 0:
        raise ValidationError("speed must be non-negative, got {}".format(speed))
    if speed == 0 and category is not MotionCategory.STATIC:
        raise ValidationError("speed 0 is only allowed for the static category")
    if K is None:
        if dims is None:
            raise ValidationError("either intrinsics or image dims must be given")
        K = CameraIntrinsics.default(*dims)

    if category is MotionCategory.STATIC:
        step = Homography.identity()
    elif category.is_pan:
        dx, dy = expected_displacement(category, speed)
        step = Homography.translation(-dx, -dy)
    elif category is MotionCategory.ZOOM_IN:
        step = Homography.scaling(1.0 + speed, K.cx, K.cy)
    else:
        step = Homography.scaling(1.0 / (1.0 + speed), K.cx, K.cy)

    return CameraTemplate(
        category=category,
        transitions=tuple(step for _ in range(frames - 1)),
        speed=float(speed) if category is not MotionCategory.STATIC else 0.0,
        intrinsics=K,
    )


def template_from_poses(poses, K, plane, category=MotionCategory.STATIC):
    """
    Build a template from T-1 relative poses. Each pose gives the forward
    homography of its transition, the template stores the inverse.
    """
    transitions = tuple(homography_from_pose(K, pose, plane).inv for pose in poses)
    return CameraTemplate(
        category=category, transitions=transitions, intrinsics=K, from_poses=True
    )


def homography_along_path(K, poses, plane):
    """The forward homography from frame 0 to frame len(poses), as the
    product of the per-step homographies.
    """
    H = Homography.identity()
    for pose in poses:
        H = homography_from_pose(K, pose, plane).compose(H)
    return H


def compose_transitions(template, start, stop):
    """
    Return the backward map carrying pixel centers of frame `stop` to their
    sources in frame `start` (0-based, start <= stop).
    """
    if not 0 <= start <= stop < template.frames:
        raise ValidationError("invalid frame range [{}, {}]".format(start, stop))
    H = Homography.identity()
    for k in range(start + 1, stop + 1):
        H = H.compose(template.transitions[k - 1])
    return H


def build_warp_field(template, dims):
    """
    Evaluate every backward homography at every pixel center.

    :param template: a `CameraTemplate` with T-1 transitions.
    :param dims: (T, H, W) of the video.
    """
    T, H, W = dims
    if template.frames != T:
        raise ShapeError(
            "template has {} frames but the video has {}".format(template.frames, T)
        )
    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    n = T - 1
    sx = np.empty((n, H, W))
    sy = np.empty((n, H, W))
    for k, Hk in enumerate(template.transitions):
        if Hk.is_identity():
            sx[k], sy[k] = xs, ys
        else:
            sx[k], sy[k] = Hk(xs, ys)
    in_bounds = (sx >= 0) & (sx <= W - 1) & (sy >= 0) & (sy <= H - 1)
    return WarpField(sx, sy, in_bounds)


def _template_field(data, key, convert, default=None):
    if key not in data:
        if default is None:
            raise ConfigError("template is missing '{}'".format(key))
        return default
    try:
        return convert(data[key])
    except DcdmError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("bad template field '{}': {!r} ({})".format(key, data[key], e))


def _pose(p):
    try:
        rotation = tuple(float(x) for x in p["rotation"])
        translation = tuple(float(x) for x in p["translation"])
    except KeyError as e:
        raise KeyError("pose has no {}".format(e))
    return CameraPose(rotation, translation)


def parse_template(data, dims, frames=None):
    """
    Build a template from a parsed template JSON object.

    :param data: dict with keys "category", "speed", "frames", and the
        optional "intrinsics", "poses", "plane_depth".
    :param dims: (H, W) of the video, used for the default intrinsics.
    :param frames: if given, overrides the "frames" entry.
    """
    if not isinstance(data, dict):
        raise ConfigError("a template must be a JSON object")
    known = {"category", "speed", "frames", "intrinsics", "poses", "plane_depth"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError("unknown template keys: {}".format(", ".join(sorted(unknown))))

    if frames is None:
        if "frames" not in data:
            raise ConfigError("template does not give a frame count")
        frames = _template_field(data, "frames", int)
    elif "frames" in data and _template_field(data, "frames", int) != frames:
        logger.info("template frames %s overridden by %s", data["frames"], frames)

    if "intrinsics" in data:
        K = _template_field(
            data, "intrinsics", lambda d: CameraIntrinsics(**{k: float(v) for k, v in d.items()})
        )
    else:
        K = CameraIntrinsics.default(*dims)

    category = _template_field(data, "category", MotionCategory.parse, MotionCategory.STATIC)

    if "poses" in data:
        poses = _template_field(data, "poses", lambda ps: [_pose(p) for p in ps])
        if len(poses) != frames - 1:
            raise ConfigError(
                "template has {} poses, {} frames need {}".format(len(poses), frames, frames - 1)
            )
        plane = PlaneAssumption(depth=_template_field(data, "plane_depth", float, 1.0))
        return template_from_poses(poses, K, plane, category)

    if "speed" not in data:
        raise ConfigError("template needs a speed when no poses are given")
    return template_from_category(category, _template_field(data, "speed", float), frames, K)


def load_template(path, dims, frames=None):
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise ConfigError("{}: {}".format(path, e))
    return parse_template(data, dims, frames)
