import numpy as np

from . import utils
from .errors import DegenerateGeometryError


class Homography(np.ndarray):

    """A planar projective transformation represented as a 3x3 float64 matrix

        |h00, h01, h02|
        |h10, h11, h12|
        |h20, h21, h22|

    acting on pixel centers (x, y, 1), normalized so that h22 = 1.
    """

    def __new__(cls, data=(1, 0, 0, 0, 1, 0, 0, 0, 1)):
        m = np.array(data, dtype=float).reshape(3, 3).view(cls)
        if utils.iszero(m.det):
            raise DegenerateGeometryError(
                "singular homography (|det| = {:.3e})".format(abs(m.det))
            )
        if utils.nonzero(m[2, 2]):
            m /= m[2, 2]
        return m

    def __array_finalize__(self, obj):
        pass

    def __str__(self):
        rows = np.round(np.asarray(self), 6)
        return "\n".join(" ".join("{:>12}".format(x) for x in row) for row in rows)

    def __call__(self, x, y):
        """Map pixel coordinates (x, y), scalars or arrays, through this transformation.
        """
        m = np.asarray(self)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = m[0, 0] * x + m[0, 1] * y + m[0, 2]
        v = m[1, 0] * x + m[1, 1] * y + m[1, 2]
        w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        return u / w, v / w

    @property
    def det(self):
        return float(np.linalg.det(np.asarray(self)))

    @property
    def inv(self):
        """Return the inverse transformation.
        """
        return Homography(np.linalg.inv(np.asarray(self)))

    def compose(self, other):
        """Return the transformation `self` applied after `other`.
        """
        return Homography(np.asarray(self) @ np.asarray(other))

    def is_identity(self, tol=0.0):
        return bool(np.all(np.abs(np.asarray(self) - np.eye(3)) <= tol))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def translation(cls, dx, dy):
        """Return the map (x, y) --> (x + dx, y + dy).
        """
        return cls([1, 0, dx, 0, 1, dy, 0, 0, 1])

    @classmethod
    def scaling(cls, scale, cx, cy):
        """Return the map p --> c + scale * (p - c) about the center c = (cx, cy).
        """
        return cls([scale, 0, cx * (1 - scale), 0, scale, cy * (1 - scale), 0, 0, 1])

    @classmethod
    def from_pose(cls, K, pose, plane):
        """
        Return the homography induced by the plane n.X = d between two camera
        frames related by (R, t), mapping frame t-1 pixels to frame t:

            H = K (R + t n^T / d) K^{-1}

        :param K: a `CameraIntrinsics` instance.
        :param pose: a `CameraPose` instance (relative motion of the frame).
        :param plane: a `PlaneAssumption` instance.
        """
        Km = K.matrix()
        R = np.asarray(pose.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(pose.translation, dtype=float).reshape(3, 1)
        n = np.asarray(plane.normal, dtype=float).reshape(1, 3)
        H = Km @ (R + t @ n / plane.depth) @ np.linalg.inv(Km)
        if abs(np.linalg.det(H)) < 1e-12:
            raise DegenerateGeometryError(
                "pose {} gives a singular plane homography".format(pose)
            )
        return cls(H)
