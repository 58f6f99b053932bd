"""CEMB v1 binary encoding.

Layout (little-endian throughout): magic "CEMB", u32 version = 1, u32 dim,
u64 record count, then per record a u16 id byte length, the UTF-8 id, a
u32 token count T, and T * dim float32 values row-major. Records are
sorted by id ascending bytewise so identical exports are byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CEMB"
VERSION = 1


class CembFormatError(ValueError):
    pass


def encode(dim: int, records: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<IIQ", VERSION, dim, len(records))]
    for sent_id in sorted(records, key=lambda s: s.encode("utf-8")):
        matrix = np.ascontiguousarray(records[sent_id], dtype="<f4")
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise CembFormatError(
                f"{sent_id!r}: matrix shape {matrix.shape} does not match dim {dim}"
            )
        id_bytes = sent_id.encode("utf-8")
        parts.append(struct.pack("<H", len(id_bytes)))
        parts.append(id_bytes)
        parts.append(struct.pack("<I", matrix.shape[0]))
        parts.append(matrix.tobytes())
    return b"".join(parts)


def decode(data: bytes) -> tuple[int, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise CembFormatError(f"bad magic {data[:4]!r}")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != VERSION:
        raise CembFormatError(f"unsupported version {version}")
    offset = 20
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise CembFormatError("truncated record header")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        sent_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        (n_tokens,) = struct.unpack_from("<I", data, offset)
        offset += 4
        end = offset + n_tokens * dim * 4
        if end > len(data):
            raise CembFormatError(f"truncated floats for {sent_id!r}")
        if sent_id in records:
            raise CembFormatError(f"duplicate id {sent_id!r}")
        records[sent_id] = (
            np.frombuffer(data[offset:end], dtype="<f4").reshape(n_tokens, dim).copy()
        )
        offset = end
    if offset != len(data):
        raise CembFormatError("trailing bytes after last record")
    return dim, records
