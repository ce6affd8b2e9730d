"""
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Binary containers for grids and weights
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Structure of a .dcdn noise-grid file (all integers little-endian):
    1. bytes 0-3: the magic "DCDN".
    2. bytes 4-7: format version, a u32 (=1).
    3. bytes 8-23: four u32 dimensions T, H, W, C.
    4. then T*H*W*C IEEE-754 binary32 values in [t][h][w][c] order.
There is no padding and nothing after the payload.

Structure of a .dcdp checkpoint:
    1. bytes 0-3: the magic "DCDP".
    2. bytes 4-7: format version, a u32 (=1).
    3. bytes 8-11: length of the JSON manifest in bytes, a u32.
    4. the UTF-8 JSON manifest: the model config and, for every parameter,
       its name, shape, byte offset (relative to the start of the data block)
       and byte count.
    5. the raw float32 little-endian parameter data.
"""
import json
from struct import calcsize, pack, unpack_from

import numpy as np

from .errors import CapacityError, FormatError, LengthError
from .tensor import MAX_ELEMENTS, LatentGrid


GRID_MAGIC = b"DCDN"
CHECKPOINT_MAGIC = b"DCDP"
VERSION = 1

_GRID_HEADER = "<4s5I"
_CHECKPOINT_HEADER = "<4s2I"


def grid_header(shape):
    """The 24 header bytes of a .dcdn file for a grid of `shape`.
    """
    return pack(_GRID_HEADER, GRID_MAGIC, VERSION, *shape)


def encode_grid(grid):
    return grid_header(grid.shape) + grid.data.astype("<f4", copy=False).tobytes()


def decode_grid(buf):
    """Parse the bytes of a .dcdn file back into a `LatentGrid`.
    """
    size = calcsize(_GRID_HEADER)
    if len(buf) < 4:
        raise LengthError("file is too short to hold a header ({} bytes)".format(len(buf)))
    if bytes(buf[:4]) != GRID_MAGIC:
        raise FormatError("bad magic {!r}, expected {!r}".format(bytes(buf[:4]), GRID_MAGIC))
    if len(buf) < size:
        raise LengthError("truncated header: {} of {} bytes".format(len(buf), size))

    _, version, *dims = unpack_from(_GRID_HEADER, buf)
    if version != VERSION:
        raise FormatError("unsupported version {}".format(version))
    if any(d < 1 for d in dims):
        raise FormatError("zero dimension in header {}".format(tuple(dims)))

    # python ints, so the product cannot wrap around
    count = dims[0] * dims[1] * dims[2] * dims[3]
    if count > MAX_ELEMENTS:
        raise CapacityError("header declares {} elements, the cap is {}".format(count, MAX_ELEMENTS))

    payload = len(buf) - size
    if payload != 4 * count:
        raise LengthError(
            "payload has {} bytes, the header declares {}".format(payload, 4 * count)
        )
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=size)
    return LatentGrid(data.reshape(dims))


def save_grid(grid, path):
    with open(path, "wb") as f:
        f.write(encode_grid(grid))


def load_grid(path):
    with open(path, "rb") as f:
        return decode_grid(f.read())


def save_checkpoint(params, path):
    """Write a `DenoiserParams` instance as a .dcdp container.
    """
    entries = []
    blobs = []
    offset = 0
    for name in params.names():
        blob = params.weights[name].astype("<f4").tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(params.weights[name].shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)

    manifest = json.dumps(
        {"config": params.config.to_dict(), "parameters": entries}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(pack(_CHECKPOINT_HEADER, CHECKPOINT_MAGIC, VERSION, len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Read a .dcdp container, return a float32 `DenoiserParams`.
    """
    from .denoiser import DenoiserConfig, DenoiserParams

    with open(path, "rb") as f:
        buf = f.read()

    size = calcsize(_CHECKPOINT_HEADER)
    if len(buf) < size:
        raise LengthError("checkpoint is too short ({} bytes)".format(len(buf)))
    magic, version, mlen = unpack_from(_CHECKPOINT_HEADER, buf)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError("bad magic {!r}, expected {!r}".format(magic, CHECKPOINT_MAGIC))
    if version != VERSION:
        raise FormatError("unsupported version {}".format(version))
    if len(buf) < size + mlen:
        raise LengthError("truncated manifest")

    try:
        manifest = json.loads(buf[size : size + mlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise FormatError("unreadable manifest: {}".format(e))

    data = memoryview(buf)[size + mlen :]
    expected = sum(e["nbytes"] for e in manifest["parameters"])
    if len(data) != expected:
        raise LengthError("parameter block has {} bytes, manifest declares {}".format(len(data), expected))

    weights = {}
    for e in manifest["parameters"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        if 4 * count != e["nbytes"]:
            raise FormatError("entry {} has inconsistent size".format(e["name"]))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=e["offset"])
        weights[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)

    config = DenoiserConfig.from_dict(manifest["config"])
    return DenoiserParams(config, weights)
