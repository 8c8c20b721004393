"""FQF1 binary field snapshots.

Layout: a 32-byte little-endian header

    offset 0   4 bytes  magic b"FQF1"
    offset 4   u32      ndim
    offset 8   3 x u32  points per axis (0 for unused axes)
    offset 20  u8       kind: 0 real, 1 complex, 2 spinor
    offset 21  11 bytes zero padding

followed by float64 values in row-major order. Complex values are stored
as interleaved (re, im) pairs; a spinor stores component 1 then component 2.
"""

import struct

import numpy as np

from .errors import InputError

MAGIC = b"FQF1"
HEADER = struct.Struct("<4sI3IB11x")
KINDS = {"real": 0, "complex": 1, "spinor": 2}
_KIND_NAMES = {v: k for k, v in KINDS.items()}


def field_kind(values, ndim):
    values = np.asarray(values)
    if values.ndim == ndim:
        return "complex" if np.iscomplexobj(values) else "real"
    if values.ndim == ndim + 1 and values.shape[0] == 2:
        return "spinor"
    raise InputError(f"cannot store array of shape {values.shape} as a {ndim}D field")


def encode(values, ndim):
    """Serialize a field to FQF1 bytes."""
    values = np.asarray(values)
    kind = field_kind(values, ndim)
    shape = values.shape[-ndim:]
    counts = list(shape) + [0] * (3 - ndim)
    header = HEADER.pack(MAGIC, ndim, *counts, KINDS[kind])
    if kind == "real":
        body = np.ascontiguousarray(values, dtype="<f8")
    else:
        body = np.ascontiguousarray(values, dtype=np.complex128).view("<f8")
    return header + body.tobytes()


def decode(data):
    """Parse FQF1 bytes into ``(kind, array)``."""
    if len(data) < HEADER.size:
        raise InputError("truncated FQF1 header")
    magic, ndim, n0, n1, n2, code = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputError(f"bad magic {magic!r}")
    if not 1 <= ndim <= 3 or code not in _KIND_NAMES:
        raise InputError("corrupt FQF1 header")
    shape = (n0, n1, n2)[:ndim]
    kind = _KIND_NAMES[code]
    flat = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    n = int(np.prod(shape))
    expected = {"real": n, "complex": 2 * n, "spinor": 4 * n}[kind]
    if flat.size != expected:
        raise InputError(f"expected {expected} float64 values, found {flat.size}")
    if kind == "real":
        return kind, flat.reshape(shape).astype(np.float64)
    values = flat.view(np.complex128).astype(np.complex128)
    if kind == "spinor":
        return kind, values.reshape((2,) + shape)
    return kind, values.reshape(shape)


def write_snapshot(path, values, ndim):
    with open(path, "wb") as fh:
        fh.write(encode(values, ndim))


def read_snapshot(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
