"""Binary snapshot format for metric states.

Little-endian layout: magic "YMHF", version u32, n u32, R u32, t f64, then
row-major per-site R x R complex h entries as f64 pairs.  Round-trips are
bit-exact.
"""

import struct
import numpy as np

from .bundle import MetricState
from .constants import SNAPSHOT_MAGIC, SNAPSHOT_VERSION
from .errors import ConfigurationError

_HEADER = struct.Struct("<4sIIId")


def save_snapshot(path, state):
    n, _, R, _ = state.h.shape
    data = np.ascontiguousarray(state.h, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n, R, state.t))
        fh.write(data.tobytes())


def load_snapshot(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ConfigurationError(f"{path}: truncated snapshot header")
        magic, version, n, R, t = _HEADER.unpack(head)
        if magic != SNAPSHOT_MAGIC:
            raise ConfigurationError(f"{path}: bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise ConfigurationError(f"{path}: unsupported version {version}")
        raw = fh.read(n * n * R * R * 16)
        if len(raw) != n * n * R * R * 16:
            raise ConfigurationError(f"{path}: truncated snapshot payload")
    h = np.frombuffer(raw, dtype="<c16").reshape(n, n, R, R).copy()
    return MetricState(t, h)
