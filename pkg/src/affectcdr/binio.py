"""Helpers shared by the AFNN / AFMX / AFIX binary formats.

All multi-byte integers are little-endian; float payloads are little-endian
32-bit IEEE, row-major. Checksummed formats append an 8-byte BLAKE2b digest
of everything that precedes it.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import IntegrityError

CHECKSUM_BYTES = 8


def checksum64(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=CHECKSUM_BYTES).digest()


def file_checksum_hex(path: str | Path) -> str:
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=CHECKSUM_BYTES).hexdigest()


def write_checksummed(path: str | Path, payload: bytes) -> None:
    Path(path).write_bytes(payload + checksum64(payload))


def read_checksummed(path: str | Path, magic: bytes) -> bytes:
    """Return the payload of a checksummed file, verifying digest and magic."""
    data = Path(path).read_bytes()
    if len(data) < len(magic) + CHECKSUM_BYTES:
        raise IntegrityError(f"{path}: file too short to be a valid {magic.decode()} file")
    payload, digest = data[:-CHECKSUM_BYTES], data[-CHECKSUM_BYTES:]
    if checksum64(payload) != digest:
        raise IntegrityError(f"{path}: checksum mismatch (file corrupted)")
    if not payload.startswith(magic):
        raise IntegrityError(f"{path}: bad magic, expected {magic.decode()}")
    return payload


class Reader:
    """Sequential little-endian reader over an in-memory payload."""

    def __init__(self, data: bytes, context: str = "payload"):
        self._data = data
        self._pos = 0
        self._context = context

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise IntegrityError(f"{self._context}: truncated (needed {n} more bytes)")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        length = self.u32()
        return self.take(length).decode("utf-8")

    def f32_array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise IntegrityError(f"{self._context}: {len(self._data) - self._pos} trailing bytes")


def pack_u8(value: int) -> bytes:
    return struct.pack("<B", value)


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_string(value: str) -> bytes:
    raw = value.encode("utf-8")
    return pack_u32(len(raw)) + raw


def pack_f32_array(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f4").tobytes()
