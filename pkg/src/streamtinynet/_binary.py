"""Little-endian read/write helpers for the binary file formats."""

import struct

import numpy as np

from .errors import FormatError


class Writer:
    def __init__(self):
        self._parts = []

    def raw(self, data: bytes):
        self._parts.append(bytes(data))

    def u8(self, v):
        self.raw(struct.pack("<B", v))

    def u16(self, v):
        self.raw(struct.pack("<H", v))

    def u32(self, v):
        self.raw(struct.pack("<I", v))

    def i32(self, v):
        self.raw(struct.pack("<i", v))

    def f32(self, v):
        self.raw(struct.pack("<f", v))

    def array(self, a, dtype):
        self.raw(np.ascontiguousarray(a, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.offset = 0

    def take(self, n, what="data"):
        if self.offset + n > len(self.data):
            raise FormatError(
                f"file truncated while reading {what}: need {n} bytes, "
                f"{len(self.data) - self.offset} remain",
                self.offset,
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def _unpack(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))[0]

    def u8(self, what="u8"):
        return self._unpack("<B", what)

    def u16(self, what="u16"):
        return self._unpack("<H", what)

    def u32(self, what="u32"):
        return self._unpack("<I", what)

    def i32(self, what="i32"):
        return self._unpack("<i", what)

    def f32(self, what="f32"):
        return self._unpack("<f", what)

    def array(self, dtype, shape, what="array"):
        dt = np.dtype(dtype).newbyteorder("<")
        count = int(np.prod(shape, dtype=np.int64))
        chunk = self.take(count * dt.itemsize, what)
        return np.frombuffer(chunk, dtype=dt).astype(np.dtype(dtype)).reshape(shape)

    def expect_magic(self, magic: bytes, version: int):
        got = bytes(self.take(len(magic), "magic"))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}", 0)
        at = self.offset
        v = self.u32("version")
        if v != version:
            raise FormatError(f"unsupported version {v}, expected {version}", at)

    def expect_end(self):
        if self.offset != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.offset} unexpected trailing bytes", self.offset
            )
