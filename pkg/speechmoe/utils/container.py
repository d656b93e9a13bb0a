"""
Binary tensor container.

Layout (all integers little-endian):

    magic        4 bytes  b"MOET"
    version      u16
    count        u32
    count × entry:
        name_len u32, name (UTF-8)
        dtype    u8   (1 = f64)
        rank     u8
        dims     rank × u64
        data     prod(dims) × f64, C order
"""

import math
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from speechmoe.constants import CONTAINER_MAGIC, CONTAINER_VERSION, DTYPE_F64
from speechmoe.errors import ContainerError
from speechmoe.logger import get_logger
from speechmoe.utils.path import ensure_parent

_logger = get_logger()

_F64 = np.dtype("<f8")


def encode_container(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [CONTAINER_MAGIC, struct.pack("<HI", CONTAINER_VERSION, len(tensors))]
    for name, value in tensors.items():
        array = np.ascontiguousarray(value, dtype=_F64)
        encoded = name.encode("utf-8")
        if array.ndim > 255:
            raise ContainerError(f"tensor {name!r}: rank {array.ndim} is not representable")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", DTYPE_F64, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise ContainerError(
                f"{self.source}: truncated while reading {what} "
                f"(need {size} bytes at offset {self.offset}, have {len(self.payload) - self.offset})"
            )
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_container(payload: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    """
    Parse container bytes into name -> array, in stored order.

    Raises:
        ContainerError: bad magic, unknown version or dtype, size mismatch, duplicate name
    """
    reader = _Reader(payload, source)
    magic = reader.take(len(CONTAINER_MAGIC), "magic")
    if magic != CONTAINER_MAGIC:
        raise ContainerError(f"{source}: not a tensor container (magic {magic!r})")
    version, count = reader.unpack("<HI", "header")
    if version != CONTAINER_VERSION:
        raise ContainerError(f"{source}: unsupported container version {version}")

    tensors: dict[str, np.ndarray] = {}
    for index in range(count):
        (name_len,) = reader.unpack("<I", f"entry {index} name length")
        try:
            name = reader.take(name_len, f"entry {index} name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise ContainerError(f"{source}: entry {index} name is not UTF-8: {e}")
        dtype, rank = reader.unpack("<BB", f"entry {name!r} header")
        if dtype != DTYPE_F64:
            raise ContainerError(f"{source}: entry {name!r} has unknown dtype code {dtype}")
        dims = reader.unpack(f"<{rank}Q", f"entry {name!r} dims")
        size = math.prod(dims) * _F64.itemsize
        remaining = len(payload) - reader.offset
        if size > remaining:
            raise ContainerError(
                f"{source}: truncated entry {name!r}: dims {list(dims)} need {size} bytes, "
                f"only {remaining} remain"
            )
        data = reader.take(size, f"entry {name!r} data")
        if name in tensors:
            raise ContainerError(f"{source}: duplicate entry {name!r}")
        tensors[name] = np.frombuffer(data, dtype=_F64).reshape(dims).astype(np.float64)
    if reader.offset != len(payload):
        raise ContainerError(
            f"{source}: {len(payload) - reader.offset} trailing bytes after {count} entries"
        )
    return tensors


def write_container(path: str | Path, tensors: Mapping[str, np.ndarray]) -> Path:
    path = ensure_parent(path)
    path.write_bytes(encode_container(tensors))
    _logger.info(f"Wrote {len(tensors)} tensors to {path}")
    return path


def read_container(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise ContainerError(f"cannot read tensor container {path}: {e}")
    tensors = decode_container(payload, str(path))
    _logger.debug(f"Read {len(tensors)} tensors from {path}")
    return tensors
