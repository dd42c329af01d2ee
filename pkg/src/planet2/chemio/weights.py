"""Binary weights container.

Layout (all integers little-endian):

    magic   4 bytes  b"PLN2"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor:
        name_len u16, name utf-8 bytes
        ndim     u8  (0..3)
        dims     u32 * ndim
        payload  float32 * prod(dims), row-major

Reading then writing reproduces the byte stream exactly; tensor names must
be unique and payload lengths must match the declared shapes.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import WeightsError

MAGIC = b"PLN2"
VERSION = 1
_MAX_NAME = 4096
_MAX_ELEMENTS = 1 << 28


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise WeightsError(f"truncated container while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_tensor_table(data: bytes) -> tuple[int, dict[str, np.ndarray]]:
    """Decode (version, {name: float32 array}) from container bytes."""
    cur = _Cursor(data)
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise WeightsError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = cur.u32("version")
    if version != VERSION:
        raise WeightsError(f"unsupported format version {version}")
    count = cur.u32("tensor count")
    table: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = cur.u16("name length")
        if name_len == 0 or name_len > _MAX_NAME:
            raise WeightsError(f"implausible tensor name length {name_len}")
        try:
            name = cur.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise WeightsError("tensor name is not valid utf-8") from None
        if name in table:
            raise WeightsError(f"duplicate tensor name {name!r}")
        ndim = cur.u8(f"rank of {name!r}")
        if ndim > 3:
            raise WeightsError(f"tensor {name!r} has unsupported rank {ndim}")
        dims = tuple(cur.u32(f"dim of {name!r}") for _ in range(ndim))
        numel = 1
        for d in dims:
            numel *= d
        if numel > _MAX_ELEMENTS:
            raise WeightsError(f"tensor {name!r} element count {numel} too large")
        payload = cur.take(4 * numel, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        table[name] = arr
    if cur.pos != len(data):
        raise WeightsError(f"{len(data) - cur.pos} trailing bytes after last tensor")
    return version, table


def write_tensor_table(table: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(table))]
    for name, arr in table.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        if arr.ndim > 3:
            raise WeightsError(f"tensor {name!r} has unsupported rank {arr.ndim}")
        encoded = name.encode("utf-8")
        if not encoded or len(encoded) > _MAX_NAME:
            raise WeightsError(f"bad tensor name {name!r}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            parts.append(struct.pack("<I", d))
        parts.append(arr.tobytes())
    return b"".join(parts)


def read_weights(data: bytes):
    """Decode container bytes into ModelParams."""
    from ..network import ModelParams

    _, table = read_tensor_table(data)
    return ModelParams.from_tensor_table(table)


def write_weights(params) -> bytes:
    return write_tensor_table(params.to_tensor_table())
