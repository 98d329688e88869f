"""Binary container for named numeric arrays (SOSM1 format).

Layout, all little-endian:
    8 bytes   magic  b"SOSM1\\x00\\x00\\x00"
    u32       version (currently 1)
    u32       array count
    per array:
        u16      name length (bytes)
        bytes    UTF-8 name
        u8       dtype code (0=f32, 1=u32, 2=i32)
        u8       rank
        u64[r]   dims
        bytes    raw array data, C order

Text payloads (JSON metadata, name tables) are stored as rank-1 u32 arrays
of UTF-8 byte values so the format needs no extra dtype codes.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

MAGIC = b"SOSM1\x00\x00\x00"
VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<u4"), 2: np.dtype("<i4")}
_CODE_FOR_KIND = {"f": 0, "u": 1, "i": 2}


class ContainerError(ValueError):
    """Malformed or truncated container stream."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _coerce(arr: np.ndarray) -> tuple[int, np.ndarray]:
    arr = np.asarray(arr)
    kind = arr.dtype.kind
    if kind not in _CODE_FOR_KIND:
        raise ContainerError(f"unsupported dtype {arr.dtype}")
    code = _CODE_FOR_KIND[kind]
    return code, np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code])


def write_container(arrays: dict[str, np.ndarray]) -> bytes:
    """Serialize named arrays; insertion order is preserved byte-for-byte."""
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<II", VERSION, len(arrays)))
    for name, arr in arrays.items():
        code, data = _coerce(arr)
        name_b = name.encode("utf-8")
        out.write(struct.pack("<H", len(name_b)))
        out.write(name_b)
        out.write(struct.pack("<BB", code, data.ndim))
        out.write(struct.pack(f"<{data.ndim}Q", *data.shape))
        out.write(data.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ContainerError(f"truncated while reading {what}", offset=self.pos)
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk


def read_container(stream: bytes) -> dict[str, np.ndarray]:
    """Parse a container; raises ContainerError with the failing byte offset."""
    r = _Reader(bytes(stream))
    magic = r.take(8, "magic")
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}", offset=0)
    (version, count) = struct.unpack("<II", r.take(8, "header"))
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}", offset=8)
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, "name length"))
        name = r.take(name_len, "name").decode("utf-8")
        code, rank = struct.unpack("<BB", r.take(2, f"dtype/rank of '{name}'"))
        if code not in _DTYPE_CODES:
            raise ContainerError(f"unknown dtype code {code} for '{name}'", offset=r.pos - 2)
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank, f"dims of '{name}'"))
        dtype = _DTYPE_CODES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        if rank == 0:
            dims = ()
            nbytes = dtype.itemsize
        raw = r.take(nbytes, f"data of '{name}'")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    return arrays


def pack_text(text: str) -> np.ndarray:
    """Encode a UTF-8 string as a rank-1 u32 array (one byte per element)."""
    data = text.encode("utf-8")
    return np.frombuffer(data, dtype=np.uint8).astype(np.uint32)


def unpack_text(arr: np.ndarray) -> str:
    return bytes(np.asarray(arr, dtype=np.uint32).astype(np.uint8)).decode("utf-8")


def pack_json(obj) -> np.ndarray:
    return pack_text(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def unpack_json(arr: np.ndarray):
    return json.loads(unpack_text(arr))
