"""Flat binary checkpoint container shared by the critic and the policy.

Layout: magic (4 bytes), format version u32, number of dims u32, each dim
u32, K u32, then the flat float64 parameter vector. All integers and floats
are little-endian. Round trips are bitwise exact.
"""

from __future__ import annotations

import struct

import numpy as np

FORMAT_VERSION = 1

_HEAD = struct.Struct("<4sII")
_U32 = struct.Struct("<I")


class ContainerError(ValueError):
    """Raised on malformed or mismatched checkpoint files."""


def save_container(path, magic: bytes, layer_dims, k: int, flat_params: np.ndarray) -> None:
    if len(magic) != 4:
        raise ContainerError("magic must be exactly 4 bytes")
    params = np.ascontiguousarray(flat_params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(magic, FORMAT_VERSION, len(layer_dims)))
        for d in layer_dims:
            fh.write(_U32.pack(int(d)))
        fh.write(_U32.pack(int(k)))
        fh.write(params.tobytes())


def load_container(path, magic: bytes):
    """Returns (layer_dims, k, flat_params)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise ContainerError(f"{path}: truncated header")
        got_magic, version, n_dims = _HEAD.unpack(head)
        if got_magic != magic:
            raise ContainerError(
                f"{path}: bad magic {got_magic!r}, expected {magic!r}")
        if version != FORMAT_VERSION:
            raise ContainerError(f"{path}: unsupported format version {version}")
        dims = []
        for _ in range(n_dims):
            raw = fh.read(_U32.size)
            if len(raw) < _U32.size:
                raise ContainerError(f"{path}: truncated dims")
            dims.append(_U32.unpack(raw)[0])
        raw = fh.read(_U32.size)
        if len(raw) < _U32.size:
            raise ContainerError(f"{path}: truncated header (missing K)")
        k = _U32.unpack(raw)[0]
        body = fh.read()
    if len(body) % 8 != 0:
        raise ContainerError(f"{path}: parameter section not a whole number of float64s")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return tuple(dims), k, params
