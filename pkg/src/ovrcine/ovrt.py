"""OVRT tensor file format.

Little-endian binary layout:

    magic   4 bytes  b"OVRT"
    version u32      currently 1
    dtype   u32      1=complex128, 2=complex64, 3=float64, 4=uint8
    ndim    u32
    dims    ndim * u64
    payload row-major (C-order) array data

Used for every intermediate pipeline artifact so stages can be cached,
diffed, and replayed byte-for-byte.
"""

import struct

import numpy as np

__all__ = ["write_ovrt", "read_ovrt", "OvrtError"]

MAGIC = b"OVRT"
VERSION = 1

_CODE_TO_DTYPE = {
    1: np.dtype("<c16"),
    2: np.dtype("<c8"),
    3: np.dtype("<f8"),
    4: np.dtype("u1"),
}
_DTYPE_TO_CODE = {v: k for k, v in _CODE_TO_DTYPE.items()}

_MAX_NDIM = 16


class OvrtError(ValueError):
    """Raised for malformed or unsupported OVRT files."""


def write_ovrt(path, arr):
    """Serialize an array to an OVRT file.

    Supported dtypes: complex128, complex64, float64, uint8. Anything else
    is rejected rather than silently cast.
    """
    arr = np.asarray(arr)
    key = arr.dtype.newbyteorder("<") if arr.dtype.kind in "cf" else arr.dtype
    code = _DTYPE_TO_CODE.get(key)
    if code is None:
        raise OvrtError(f"unsupported dtype {arr.dtype} for OVRT")
    arr = np.ascontiguousarray(arr, dtype=_CODE_TO_DTYPE[code])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_ovrt(path):
    """Read an OVRT file back into a numpy array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise OvrtError(f"{path}: not an OVRT file")
    version, code, ndim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise OvrtError(f"{path}: unsupported OVRT version {version}")
    dtype = _CODE_TO_DTYPE.get(code)
    if dtype is None:
        raise OvrtError(f"{path}: unknown dtype code {code}")
    if ndim > _MAX_NDIM:
        raise OvrtError(f"{path}: implausible ndim {ndim}")
    header_end = 16 + 8 * ndim
    if len(blob) < header_end:
        raise OvrtError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 16)
    count = int(np.prod(dims, dtype=np.uint64)) if ndim else 1
    expected = header_end + count * dtype.itemsize
    if len(blob) != expected:
        raise OvrtError(f"{path}: payload size {len(blob) - header_end} != expected {count * dtype.itemsize}")
    arr = np.frombuffer(blob[header_end:], dtype=dtype, count=count)
    return arr.reshape(dims).copy()
