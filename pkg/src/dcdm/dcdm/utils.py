"""
Small numeric helpers shared by the geometry and statistics code.
"""
import hashlib

import numpy as np

from .errors import NumericError, ValidationError


epsilon = 1e-12


def iszero(x, tol=epsilon):
    return abs(x) < tol


def nonzero(x, tol=epsilon):
    return not iszero(x, tol)


def equal(x, y, tol=epsilon):
    return iszero(x - y, tol)


def digest_int(*parts, nbytes=16):
    """Hash a tuple of ints/strings into a non-negative integer.

    The parts are joined with a separator that cannot occur in their
    decimal/utf-8 form, so ("a", 12) and ("a1", 2) never collide.
    """
    h = hashlib.blake2b(digest_size=nbytes)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def check_finite(array, what):
    """Raise `NumericError` naming `what` if `array` holds NaN/Inf.
    """
    array = np.asarray(array)
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NumericError("{} has {} non-finite element(s)".format(what, bad))
    return array


def parse_shape(text):
    """Parse a "TxHxWxC" string, e.g. "8x16x16x4" -> (8, 16, 16, 4).
    """
    try:
        dims = tuple(int(s) for s in text.lower().split("x"))
    except ValueError:
        raise ValidationError("invalid shape {!r}, expected TxHxWxC".format(text))
    if len(dims) != 4:
        raise ValidationError("invalid shape {!r}, expected TxHxWxC".format(text))
    return dims
