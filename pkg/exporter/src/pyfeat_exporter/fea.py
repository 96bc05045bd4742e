"""The FEA1 binary feature format.

Layout: 4-byte magic "FEA1", little-endian u32 frame count, u32 dimension
count, 4 reserved zero bytes, then frame-major float32 values.  This is an
independent implementation of the shared format contract; conformance is
pinned by a checked-in reference file.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FEA1"
HEADER = struct.Struct("<4sII4s")


class FeaFormatError(Exception):
    """Malformed FEA1 file."""


def write_fea(frames: np.ndarray, path) -> None:
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise ValueError(f"frames must be 2-d, got shape {frames.shape}")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, frames.shape[0], frames.shape[1], b"\0" * 4))
        fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_fea(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER.size:
        raise FeaFormatError(f"{path}: truncated header")
    magic, n_frames, n_dims, reserved = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FeaFormatError(f"{path}: bad magic {magic!r}")
    if reserved != b"\0" * 4:
        raise FeaFormatError(f"{path}: nonzero reserved bytes")
    expected = HEADER.size + 4 * n_frames * n_dims
    if len(blob) != expected:
        raise FeaFormatError(
            f"{path}: expected {expected} bytes for {n_frames}x{n_dims}, "
            f"got {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=HEADER.size)
    return data.reshape(n_frames, n_dims).copy()
